#include "splatprobe/gaussian.hpp"

#include <cmath>
#include <string>

namespace splatprobe {

void GaussianCloud::resize(std::size_t n) {
  positions.resize(n, Vec3::Zero());
  opacities.resize(n, 0.5);
  scales.resize(n, Vec3::Ones());
  rotations.resize(n, Vec4(1, 0, 0, 0));
  sh.resize(n * kShWidth, 0.0);
}

void GaussianCloud::validate() const {
  const std::size_t n = size();
  if (opacities.size() != n || scales.size() != n || rotations.size() != n || sh.size() != n * kShWidth) {
    throw DataError("Gaussian cloud attribute arrays have inconsistent lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "Gaussian " + std::to_string(i);
    if (!positions[i].allFinite()) throw DataError(id + ": non-finite position");
    if (!(opacities[i] > 0.0 && opacities[i] < 1.0)) throw DataError(id + ": opacity outside (0,1)");
    if (!(scales[i].minCoeff() > 0.0) || !scales[i].allFinite()) throw DataError(id + ": non-positive scale");
    if (std::abs(rotations[i].norm() - 1.0) > 1e-9) throw DataError(id + ": rotation is not a unit quaternion");
  }
  for (double v : sh) {
    if (!std::isfinite(v)) throw DataError("Gaussian cloud has non-finite SH coefficients");
  }
}

void CloudGradients::resize(std::size_t n) {
  positions.assign(n, Vec3::Zero());
  opacities.assign(n, 0.0);
  scales.assign(n, Vec3::Zero());
  rotations.assign(n, Vec4::Zero());
  sh.assign(n * kShWidth, 0.0);
}

bool CloudGradients::row_is_zero(std::size_t i) const {
  if (!positions[i].isZero(0.0) || opacities[i] != 0.0 || !scales[i].isZero(0.0) || !rotations[i].isZero(0.0)) {
    return false;
  }
  for (int k = 0; k < kShWidth; ++k) {
    if (sh[i * kShWidth + k] != 0.0) return false;
  }
  return true;
}

}  // namespace splatprobe
