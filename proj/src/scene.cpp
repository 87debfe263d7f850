#include "splatprobe/scene.hpp"

namespace splatprobe {

std::vector<std::size_t> SceneBundle::train_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (views[i].train) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> SceneBundle::test_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (!views[i].train) out.push_back(i);
  }
  return out;
}

std::size_t SceneBundle::training_pixels() const {
  std::size_t n = 0;
  for (const auto& v : views) {
    if (v.train) n += static_cast<std::size_t>(v.camera.width) * v.camera.height;
  }
  return n;
}

std::vector<Image> SceneBundle::training_images() const {
  std::vector<Image> out;
  for (const auto& v : views) {
    if (v.train) out.push_back(v.image);
  }
  return out;
}

std::vector<CameraModel> SceneBundle::training_cameras() const {
  std::vector<CameraModel> out;
  for (const auto& v : views) {
    if (v.train) out.push_back(v.camera);
  }
  return out;
}

double SceneBundle::extent() const {
  if (init.points.empty()) return 0.0;
  Vec3 lo = init.points.front(), hi = init.points.front();
  for (const auto& p : init.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

void SceneBundle::validate() const {
  if (train_indices().empty()) throw DataError("scene has no training views");
  for (const auto& v : views) {
    v.camera.validate();
    if (v.image.height != v.camera.height || v.image.width != v.camera.width) {
      throw DataError("view '" + v.name + "': image is " + std::to_string(v.image.width) + "x" +
                      std::to_string(v.image.height) + " but camera is " + std::to_string(v.camera.width) + "x" +
                      std::to_string(v.camera.height));
    }
  }
  const std::size_t pixels = training_pixels();
  if (init.points.size() != pixels || init.colors.size() != pixels) {
    throw DataError("init cloud has " + std::to_string(init.points.size()) + " points but training views have " +
                    std::to_string(pixels) + " pixels");
  }
  if (!gt_points.empty() && gt_points.size() != pixels) {
    throw DataError("GT cloud has " + std::to_string(gt_points.size()) + " points but training views have " +
                    std::to_string(pixels) + " pixels");
  }
  const std::size_t n_train = train_indices().size();
  for (const auto& [name, ref] : feature_files) {
    if (ref.files.size() != n_train) {
      throw DataError("feature set '" + name + "' lists " + std::to_string(ref.files.size()) + " files for " +
                      std::to_string(n_train) + " training views");
    }
  }
  if (!gt_depth.empty() && gt_depth.size() != n_train) throw DataError("GT depth count differs from training views");
}

}  // namespace splatprobe
