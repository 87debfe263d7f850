#pragma once

#include "splatprobe/common.hpp"

#include <span>
#include <string>
#include <vector>

namespace splatprobe {

/// Dense per-view feature tensor, pixel-major and channel-minor.
struct FeatureMap {
  int view_id = 0;
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;
  std::string source_tag;

  FeatureMap() = default;
  FeatureMap(int view, int h, int w, int c, std::string tag = {})
      : view_id(view), height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, 0.0), source_tag(std::move(tag)) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
  double& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  std::span<const double> pixel(std::size_t p) const { return {data.data() + p * channels, static_cast<std::size_t>(channels)}; }

  /// Throws DataError when the size or finiteness invariant is broken.
  void validate() const;
};

struct PcaBasis {
  Vector mean;                 // C
  RowMatrix components;        // k x C, orthonormal rows
  Vector explained_variance;   // k, non-increasing

  int input_channels() const { return static_cast<int>(mean.size()); }
  int rank() const { return static_cast<int>(components.rows()); }
};

/// Principal directions of the mean-centred rows of `samples` (M x C). Each
/// component is sign-fixed so its largest-magnitude entry is positive.
PcaBasis pca_fit(const RowMatrix& samples, int k);
/// Pools every pixel of every map into one sample matrix before fitting.
PcaBasis pca_fit(std::span<const FeatureMap> maps, int k);

FeatureMap pca_apply(const FeatureMap& map, const PcaBasis& basis);
/// mean + components^T * code, per pixel.
FeatureMap pca_reconstruct(const FeatureMap& codes, const PcaBasis& basis);

/// Half-pixel-centre bilinear resampling with edge clamping.
FeatureMap upsample_bilinear(const FeatureMap& map, int out_h, int out_w);

/// Interleaved RGB image in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> rgb;  // H*W*3

  Image() = default;
  Image(int h, int w) : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3, 0.0) {}
  double& at(int y, int x, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

/// [I, U, V, R, G, B] per pixel; I = view / max(1, N-1), U/V at pixel centres.
std::vector<FeatureMap> iuvrgb_features(std::span<const Image> images);

struct ChannelStats {
  Vector mean;
  Vector stddev;
};

/// Per-channel mean and standard deviation pooled over all maps (variance floor 1e-12).
ChannelStats channel_stats(std::span<const FeatureMap> maps);
FeatureMap standardize_channels(const FeatureMap& map, const ChannelStats& stats);
/// Standardizes a map against its own statistics.
FeatureMap standardize_channels(const FeatureMap& map);
/// Standardizes a set of views against their pooled statistics.
std::vector<FeatureMap> standardize_channels(std::span<const FeatureMap> maps);

/// Channel-wise concatenation in the given order; all inputs must share H x W.
FeatureMap concat_features(std::span<const FeatureMap> maps);

enum class ConcatOrder { Descending, Ascending };

/// Reorders feature-set names ranked best-first for concatenation.
std::vector<std::string> order_for_concat(std::vector<std::string> ranked_best_first, ConcatOrder order);

struct PreparedFeatures {
  std::vector<FeatureMap> maps;  // one per training view at image resolution
  int channels = 0;
  bool reduced = false;
};

/// Standardize (pooled), reduce with one PCA basis per scene when channels > k,
/// then bilinearly resample every view to out_h x out_w.
PreparedFeatures prepare_features(std::span<const FeatureMap> raw, int pca_k, int out_h, int out_w);

}  // namespace splatprobe
