#pragma once

#include "splatprobe/features.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace splatprobe {

/// Per-pixel validity, row-major H x W.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> valid;

  Mask() = default;
  Mask(int h, int w, bool value) : height(h), width(w), valid(static_cast<std::size_t>(h) * w, value ? 1 : 0) {}
  std::size_t count() const;
  double coverage() const;
};

inline constexpr double kPsnrCap = 99.0;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// 10 log10(1 / MSE) over masked pixels; identical images report kPsnrCap.
double psnr(const Image& img, const Image& ref, const Mask* mask = nullptr);

/// Mean local SSIM (11x11 Gaussian window, sigma 1.5). Windows are truncated and
/// renormalized at the image border; masked-out pixels are excluded from the mean.
double ssim(const Image& img, const Image& ref, const Mask* mask = nullptr);

/// SSIM together with d SSIM / d img (H*W*3).
double ssim_with_gradient(const Image& img, const Image& ref, const Mask* mask, std::vector<double>* grad);

/// The 1-D window used by ssim(), normalized to unit sum.
std::array<double, kSsimWindow> ssim_window();

struct CloudMetrics {
  double accuracy = 0.0;
  double completeness = 0.0;
  std::optional<double> distance;
};

/// accuracy: mean recon->GT nearest distance; completeness: mean GT->recon nearest
/// distance; distance: mean over matching[i] = GT index for recon point i (-1 skips).
CloudMetrics cloud_metrics(std::span<const Vec3> recon, std::span<const Vec3> gt,
                           std::span<const std::int64_t> matching = {}, int threads = 1);

struct LabeledVector {
  std::string label;
  std::vector<double> values;
};

struct CorrMatrix {
  std::vector<std::string> labels;
  RowMatrix values;
  std::vector<std::string> zero_variance;  // labels whose off-diagonal entries were forced to 0
};

CorrMatrix pearson_matrix(std::span<const LabeledVector> vectors);

enum class MetricDirection { HigherIsBetter, LowerIsBetter };

/// Direction for a metric column name (psnr/ssim up; lpips and 3-D distances down).
MetricDirection metric_direction(const std::string& metric);

/// Dense ordinal ranks per column, 1 = best, ties share a rank. table is features x metrics.
std::vector<std::vector<int>> rank_cells(const std::vector<std::vector<double>>& table,
                                         std::span<const MetricDirection> directions);

}  // namespace splatprobe
