#pragma once

#include "splatprobe/features.hpp"
#include "splatprobe/gaussian.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace splatprobe {

enum class ProbeMode { Geometry, Texture, All };

ProbeMode parse_probe_mode(const std::string& text);  // "G"/"T"/"A" or full names
std::string to_string(ProbeMode mode);
char mode_letter(ProbeMode mode);

enum Attribute : std::uint8_t {
  kPosition = 1 << 0,
  kOpacity = 1 << 1,
  kScale = 1 << 2,
  kRotation = 1 << 3,
  kSh = 1 << 4,
};
using AttributeSet = std::uint8_t;
inline constexpr AttributeSet kGeometryAttributes = kPosition | kOpacity | kScale | kRotation;
inline constexpr AttributeSet kAllAttributes = kGeometryAttributes | kSh;

AttributeSet readout_attributes(ProbeMode mode);
inline AttributeSet free_attributes(ProbeMode mode) { return kAllAttributes & ~readout_attributes(mode); }

/// Slot offsets of each attribute block within a raw parameter row; -1 when absent.
struct HeadLayout {
  AttributeSet attributes = 0;
  int position = -1;
  int opacity = -1;
  int scale = -1;
  int rotation = -1;
  int sh = -1;
  int width = 0;

  static HeadLayout for_attributes(AttributeSet set);
  bool has(Attribute a) const { return (attributes & a) != 0; }
  /// [offset, size) of one attribute block.
  std::pair<int, int> block(Attribute a) const;
};

struct MlpParams {
  RowMatrix w1;  // hidden x in
  Vector b1;
  RowMatrix w2;  // out x hidden
  Vector b2;

  int in_dim() const { return static_cast<int>(w1.cols()); }
  int hidden() const { return static_cast<int>(w1.rows()); }
  int out_dim() const { return static_cast<int>(w2.rows()); }
  std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
  void validate() const;
};

inline constexpr int kDefaultHidden = 256;

/// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases.
MlpParams mlp_init(int in_dim, int out_dim, std::uint64_t seed, int hidden = kDefaultHidden);

/// Rows are processed in fixed blocks so results do not depend on the thread count.
struct MlpActivations {
  RowMatrix pre;  // N x hidden, before ReLU
};

/// out = W2 relu(W1 f + b1) + b2 for every row of `inputs` (N x in).
RowMatrix mlp_forward(const MlpParams& params, const RowMatrix& inputs, MlpActivations* keep = nullptr,
                      int threads = 1);
/// Per-pixel evaluation of a feature map; returns (H*W) x out.
RowMatrix mlp_forward(const MlpParams& params, const FeatureMap& features, int threads = 1);

struct MlpGradients {
  RowMatrix w1;
  Vector b1;
  RowMatrix w2;
  Vector b2;
  RowMatrix inputs;  // empty unless requested
};

/// Backpropagates `grad_out` (N x out). Rows whose gradient is entirely zero are skipped.
/// The hidden layer is recomputed block by block.
MlpGradients mlp_backward(const MlpParams& params, const RowMatrix& inputs, const RowMatrix& grad_out,
                          bool want_input_grad = false, int threads = 1);

inline constexpr double kScaleClamp = 8.0;

/// Activation heads: positions raw, opacity sigmoid, scale base*exp(clamp(raw)),
/// rotation normalize(raw + (1,0,0,0)), SH raw. Only the layout's attributes are filled.
GaussianCloud heads_decode(const RowMatrix& raw, const HeadLayout& layout, double base_scale);

/// Pulls attribute gradients back through heads_decode into raw-row gradients.
RowMatrix heads_backward(const RowMatrix& raw, const HeadLayout& layout, double base_scale,
                         const CloudGradients& grads);

/// Raw parameters for every attribute the active mode does not read out.
struct FreeBank {
  HeadLayout layout;
  RowMatrix raw;  // N x layout.width

  std::size_t size() const { return static_cast<std::size_t>(raw.rows()); }
};

/// Pixel-aligned initialization cloud (one point per training pixel).
struct InitCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> colors;  // [0,1]
};

inline constexpr double kInitOpacity = 0.1;

/// Raw-domain targets for the given attribute layout: positions from the points,
/// opacity logit(0.1), log-scale from the mean 3-NN distance, identity rotation,
/// SH DC from the point colour and zero higher orders.
RowMatrix init_targets(const InitCloud& init, const HeadLayout& layout, double base_scale,
                       std::span<const double> knn_distance);

FreeBank free_bank_init(const InitCloud& init, ProbeMode mode, double base_scale, int threads = 1);

/// Combines read-out and free attributes. Throws ConfigError when the sources
/// overlap or leave an attribute unassigned.
GaussianCloud assemble_cloud(ProbeMode mode, const GaussianCloud& readout, const HeadLayout& readout_layout,
                             const GaussianCloud& bank, const HeadLayout& bank_layout);

/// Splits cloud gradients by source: attributes outside `layout` are zeroed.
CloudGradients restrict_gradients(const CloudGradients& grads, const HeadLayout& layout);

}  // namespace splatprobe
