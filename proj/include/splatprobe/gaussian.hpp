#pragma once

#include "splatprobe/common.hpp"

#include <vector>

namespace splatprobe {

inline constexpr int kShCoeffs = 16;
inline constexpr int kShWidth = kShCoeffs * 3;  // coefficient-major, channel-minor

/// Structure-of-arrays Gaussian scene. Covariance is kept factorized as
/// R(rotation) * diag(scale)^2 * R^T.
struct GaussianCloud {
  std::vector<Vec3> positions;
  std::vector<double> opacities;
  std::vector<Vec3> scales;
  std::vector<Vec4> rotations;
  std::vector<double> sh;  // N * kShWidth

  std::size_t size() const { return positions.size(); }
  void resize(std::size_t n);
  const double* sh_of(std::size_t i) const { return sh.data() + i * kShWidth; }
  double* sh_of(std::size_t i) { return sh.data() + i * kShWidth; }

  /// Throws DataError when a documented invariant does not hold.
  void validate() const;
};

/// Gradient of a scalar w.r.t. every attribute of a GaussianCloud, same layout.
struct CloudGradients {
  std::vector<Vec3> positions;
  std::vector<double> opacities;
  std::vector<Vec3> scales;
  std::vector<Vec4> rotations;
  std::vector<double> sh;

  explicit CloudGradients(std::size_t n = 0) { resize(n); }
  void resize(std::size_t n);
  std::size_t size() const { return positions.size(); }
  bool row_is_zero(std::size_t i) const;
};

}  // namespace splatprobe
