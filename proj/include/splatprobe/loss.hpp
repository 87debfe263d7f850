#pragma once

#include "splatprobe/metrics.hpp"
#include "splatprobe/render.hpp"

#include <span>
#include <vector>

namespace splatprobe {

inline constexpr double kDefaultDssimWeight = 0.2;

struct LossResult {
  double value = 0.0;
  double l1 = 0.0;
  double ssim = 1.0;
  std::vector<double> adjoint;  // d loss / d rgb, H*W*3
};

/// (1 - lambda) * L1 + lambda * (1 - SSIM) / 2 over valid pixels.
LossResult photometric_loss(std::span<const double> rgb, const Image& target, const Mask* mask = nullptr,
                            double lambda = kDefaultDssimWeight);
LossResult photometric_loss(const RenderOutput& render, const Image& target, const Mask* mask = nullptr,
                            double lambda = kDefaultDssimWeight);

/// Wraps a render into an Image.
Image to_image(const RenderOutput& render);

}  // namespace splatprobe
