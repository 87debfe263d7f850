#pragma once

#include "splatprobe/gaussian.hpp"
#include "splatprobe/scene.hpp"

#include <cstdint>
#include <vector>

namespace splatprobe {

struct SynthConfig {
  std::uint64_t seed = 1;
  int n_gaussians = 256;
  int n_train = 8;
  int n_test = 4;
  int image_size = 64;
  double init_noise = 0.0;     // std-dev of Gaussian noise on init points, scene units
  double outlier_frac = 0.0;   // fraction of init points replaced by uniform samples
  double radius = 3.0;
  double fov_deg = 35.0;
  double elevation_deg = 20.0;
};

struct SynthScene {
  GaussianCloud gt;
  SceneBundle bundle;
};

/// Orbit of n cameras at equally spaced azimuths (starting at azimuth_offset_deg),
/// all looking at `target` from `radius` away. World +z is up.
std::vector<CameraModel> gen_orbit_cameras(int n, double radius, const Vec3& target, double fov_deg, int width,
                                           int height, double elevation_deg = 0.0, double azimuth_offset_deg = 0.0);

/// Random GT Gaussians in the unit box, rendered train/test views, pixel-aligned
/// init cloud from the rendered expected depth (pixels with alpha < 0.5 are placed
/// on the plane through the orbit target), GT depth and GT cloud. Images are 8-bit.
SynthScene gen_scene(const SynthConfig& cfg);

/// Applies a random-axis rotation of at most rot_deg (about the camera centre) and a
/// random translation of at most trans_frac * extent to every camera.
std::vector<CameraModel> perturb_poses(const std::vector<CameraModel>& cameras, double rot_deg, double trans_frac,
                                       double extent, std::uint64_t seed);

}  // namespace splatprobe
