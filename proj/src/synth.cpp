#include "splatprobe/synth.hpp"

#include "splatprobe/io.hpp"
#include "splatprobe/loss.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace splatprobe {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Vec3 unit_vector(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-9);
  return v.normalized();
}

}  // namespace

std::vector<CameraModel> gen_orbit_cameras(int n, double radius, const Vec3& target, double fov_deg, int width,
                                           int height, double elevation_deg, double azimuth_offset_deg) {
  if (n < 0) throw UsageError("orbit camera count must be non-negative");
  std::vector<CameraModel> out;
  const double el = elevation_deg * kDeg;
  for (int k = 0; k < n; ++k) {
    const double az = (azimuth_offset_deg + 360.0 * k / n) * kDeg;
    const Vec3 eye = target + radius * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    out.push_back(look_at(eye, target, Vec3(0, 0, 1), fov_deg, width, height));
  }
  return out;
}

SynthScene gen_scene(const SynthConfig& cfg) {
  if (cfg.n_gaussians < 1 || cfg.n_train < 1 || cfg.n_test < 0 || cfg.image_size < 1) {
    throw UsageError("synth: counts must be positive");
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SynthScene s;
  GaussianCloud& gt = s.gt;
  const std::size_t n = static_cast<std::size_t>(cfg.n_gaussians);
  gt.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    gt.positions[i] = Vec3(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5);
    for (int a = 0; a < 3; ++a) gt.scales[i][a] = 0.04 * std::pow(3.0, u(rng));
    Eigen::Quaterniond q(Eigen::AngleAxisd(2.0 * std::numbers::pi * u(rng), unit_vector(rng)));
    gt.rotations[i] = Vec4(q.w(), q.x(), q.y(), q.z());
    gt.opacities[i] = 0.5 + 0.45 * u(rng);
    for (int c = 0; c < 3; ++c) gt.sh_of(i)[c] = (0.1 + 0.8 * u(rng) - 0.5) / kShC0;
  }

  SceneBundle& b = s.bundle;
  const Vec3 target = Vec3::Zero();
  const auto train = gen_orbit_cameras(cfg.n_train, cfg.radius, target, cfg.fov_deg, cfg.image_size, cfg.image_size,
                                       cfg.elevation_deg);
  const auto test = gen_orbit_cameras(cfg.n_test, cfg.radius, target, cfg.fov_deg, cfg.image_size, cfg.image_size,
                                      cfg.elevation_deg, 180.0 / cfg.n_train);
  auto add_view = [&](const CameraModel& cam, bool is_train, int index) {
    SceneView v;
    char name[32];
    std::snprintf(name, sizeof name, "%s_%03d", is_train ? "train" : "test", index);
    v.name = name;
    v.camera = cam;
    v.train = is_train;
    const RenderOutput r = rasterize(gt, cam, b.background);
    v.image = quantize(to_image(r));
    b.views.push_back(v);
    return r;
  };
  for (int k = 0; k < cfg.n_train; ++k) {
    const CameraModel& cam = train[static_cast<std::size_t>(k)];
    const RenderOutput r = add_view(cam, true, k);
    const Image& img = b.views.back().image;
    const double plane_depth = cam.to_camera(target).z();
    std::vector<double> depth(static_cast<std::size_t>(cam.width) * cam.height);
    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * cam.width + x;
        const double z = r.alpha_accum[p] >= 0.5 ? r.expected_depth[p] : plane_depth;
        depth[p] = r.expected_depth[p];
        b.gt_points.push_back(cam.unproject(x + 0.5, y + 0.5, z));
        b.init.colors.emplace_back(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
      }
    }
    b.gt_depth.push_back(std::move(depth));
  }
  for (int k = 0; k < cfg.n_test; ++k) add_view(test[static_cast<std::size_t>(k)], false, k);

  b.init.points = b.gt_points;
  if (cfg.init_noise > 0.0 || cfg.outlier_frac > 0.0) {
    Vec3 lo = b.gt_points.front(), hi = lo;
    for (const auto& p : b.gt_points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    std::normal_distribution<double> noise(0.0, 1.0);
    for (auto& p : b.init.points) {
      if (cfg.outlier_frac > 0.0 && u(rng) < cfg.outlier_frac) {
        p = lo + (hi - lo).cwiseProduct(Vec3(u(rng), u(rng), u(rng)));
      } else if (cfg.init_noise > 0.0) {
        p += cfg.init_noise * Vec3(noise(rng), noise(rng), noise(rng));
      }
    }
  }
  return s;
}

std::vector<CameraModel> perturb_poses(const std::vector<CameraModel>& cameras, double rot_deg, double trans_frac,
                                       double extent, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<CameraModel> out;
  for (const auto& cam : cameras) {
    const Vec3 axis = unit_vector(rng);
    const double angle = rot_deg * kDeg * u(rng);
    const Vec3 dir = unit_vector(rng);
    const double shift = trans_frac * extent * u(rng);
    Twist xi;
    xi.head<3>() = axis * angle;
    xi.tail<3>() = Vec3::Zero();
    CameraModel c = se3_exp_apply(xi, cam);
    c.translation += dir * shift;
    out.push_back(c);
  }
  return out;
}

}  // namespace splatprobe
