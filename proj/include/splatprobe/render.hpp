#pragma once

#include "splatprobe/camera.hpp"
#include "splatprobe/gaussian.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace splatprobe {

// Compositing constants shared with the reference 3DGS rasterizer.
inline constexpr double kAlphaCap = 0.999;
inline constexpr double kAlphaSkip = 1.0 / 255.0;
inline constexpr double kBlur2d = 0.3;
inline constexpr double kFootprintSigmas = 3.0;
inline constexpr double kShC0 = 0.28209479177387814;

/// Real SH basis, degree 0-3, evaluated at a unit direction (16 values).
std::array<double, kShCoeffs> sh_basis(const Vec3& dir);

/// 0.5 + sum c_lm Y_lm(dir), clamped below at zero per channel.
Vec3 sh_eval(std::span<const double> coeffs, const Vec3& dir);

/// R diag(s)^2 R^T. The quaternion is normalized internally.
Mat3 build_cov3d(const Vec3& scale, const Vec4& rotation);

struct Splat2D {
  Vec2 mean2d;
  Mat2 cov2d;
  double depth = 0.0;
  std::size_t source_index = 0;
};

/// Perspective EWA projection; std::nullopt when the centre is at or behind the near plane.
std::optional<Splat2D> project_gaussian(const CameraModel& cam, const Vec3& position, const Mat3& cov3d);

struct RenderOutput {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;             // H*W*3
  std::vector<double> alpha_accum;     // H*W
  std::vector<double> expected_depth;  // H*W, 0 where nothing was composited
  std::vector<double> final_transmittance;  // H*W

  double rgb_at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

struct RenderGradients {
  CloudGradients cloud;
  Mat3 camera_rotation = Mat3::Zero();  // d/d of the world-to-camera rotation matrix
  Vec3 camera_translation = Vec3::Zero();
  Vec3 background = Vec3::Zero();
};

struct RenderOptions {
  Vec3 background = Vec3::Zero();
  int threads = 1;
};

/// One prepared frame: projected, depth-sorted and tile-binned splats for a
/// fixed cloud and camera. forward() and backward() share this state so the
/// projection is computed once per training step.
class RenderPass {
 public:
  RenderPass(const GaussianCloud& cloud, const CameraModel& cam, const RenderOptions& options);

  RenderOutput forward() const;
  /// Vector-Jacobian product of forward().rgb with `adjoint_rgb` (H*W*3).
  RenderGradients backward(std::span<const double> adjoint_rgb) const;

  std::size_t visible_count() const { return splats_.size(); }
  std::size_t tile_entries() const {
    std::size_t n = 0;
    for (const auto& l : tile_lists_) n += l.size();
    return n;
  }

 private:
  struct ProjectedSplat {
    std::size_t index = 0;
    double depth = 0.0;
    Vec3 cam_point;
    Vec2 mean2d;
    Mat2 conic;
    Mat3 cov3d;
    Mat23 jw;  // J * W
    Vec3 color;
    std::array<bool, 3> color_clamped{};
    Vec3 view_dir;   // unnormalized (x - camera centre)
    double radius = 0.0;
    int tile_x0 = 0, tile_x1 = -1, tile_y0 = 0, tile_y1 = -1;
  };

  // Compact copy of what the per-pixel loops read, in depth order.
  struct RasterSplat {
    double mx, my;
    double c00, c01, c11;
    double opacity;
    double r, g, b;
    double depth;
    int x0, x1, y0, y1;
    double min_power;  // below this exponent alpha is under the skip threshold
  };

  struct TilePixels {
    std::array<int, 16> x{}, y{};
    int count = 0;
  };

  TilePixels tile_pixels(std::size_t tile) const;

  const GaussianCloud& cloud_;
  CameraModel cam_;
  RenderOptions options_;
  Mat3 world_to_cam_;
  Vec3 cam_center_;
  std::vector<ProjectedSplat> splats_;       // depth order
  std::vector<RasterSplat> raster_;
  std::vector<std::vector<std::uint32_t>> tile_lists_;  // indices into splats_
  int tiles_x_ = 0;
  int tiles_y_ = 0;
};

RenderOutput rasterize(const GaussianCloud& cloud, const CameraModel& cam, const Vec3& background, int threads = 1);

RenderGradients render_gradients(const GaussianCloud& cloud, const CameraModel& cam, const Vec3& background,
                                 std::span<const double> adjoint_rgb, int threads = 1);

struct DepthNormal {
  int width = 0;
  int height = 0;
  std::vector<double> depth;    // H*W
  std::vector<Vec3> normals;    // H*W, camera space
};

/// Expected depth plus normals from central differences of the back-projected depth.
DepthNormal render_depth_normal(const RenderOutput& output, const CameraModel& cam);

}  // namespace splatprobe
