#pragma once

#include "splatprobe/camera.hpp"
#include "splatprobe/features.hpp"
#include "splatprobe/readout.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace splatprobe {

struct FeatureSetRef {
  std::vector<std::string> files;
  bool reduced = false;  // already standardized and projected by `features --pca-k`
};

struct SceneView {
  std::string name;
  CameraModel camera;
  Image image;
  bool train = true;
  std::string image_path;  // relative to the bundle root
};

/// Images, cameras, split, pixel-aligned initialization cloud and feature references.
struct SceneBundle {
  std::filesystem::path root;
  std::vector<SceneView> views;
  InitCloud init;
  std::string init_path;
  /// Feature-set name -> one FTZ per training view (paths relative to root).
  std::map<std::string, FeatureSetRef> feature_files;
  /// Optional oracle data: GT points pixel-aligned with `init`, GT depth per training view.
  std::vector<Vec3> gt_points;
  std::string gt_points_path;
  std::vector<std::vector<double>> gt_depth;
  std::vector<std::string> gt_depth_paths;
  Vec3 background = Vec3::Zero();
  std::vector<std::string> warnings;

  std::vector<std::size_t> train_indices() const;
  std::vector<std::size_t> test_indices() const;
  std::size_t training_pixels() const;
  std::vector<Image> training_images() const;
  std::vector<CameraModel> training_cameras() const;

  /// Diagonal of the initialization cloud's bounding box.
  double extent() const;

  /// Throws DataError listing counts when the bundle violates its invariants.
  void validate() const;
};

}  // namespace splatprobe
