#pragma once

#include "splatprobe/camera.hpp"
#include "splatprobe/readout.hpp"
#include "splatprobe/render.hpp"

#include <vector>

namespace splatprobe {

/// Everything the photometric objective differentiates: readout network,
/// free bank, per-pixel inputs of the training views and training-pose twists.
struct ProbeModel {
  ProbeMode mode = ProbeMode::All;
  double base_scale = 1.0;
  MlpParams mlp;
  FreeBank bank;
  RowMatrix features;                     // N x C, training views stacked in order
  std::vector<std::size_t> view_offsets;  // V + 1 entries
  std::vector<Twist> twists;              // one per training view

  HeadLayout readout_layout() const { return HeadLayout::for_attributes(readout_attributes(mode)); }
  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t view_count() const { return twists.size(); }

  /// Throws ConfigError unless read-out and bank attributes partition the Gaussian attributes.
  void check_complement() const;
  void validate() const;
};

struct ModelForward {
  RowMatrix raw;
  GaussianCloud cloud;
};

ModelForward model_forward(const ProbeModel& model, int threads = 1);

/// Decoded cloud only.
GaussianCloud decode_cloud(const ProbeModel& model, int threads = 1);

/// Training camera v with its twist applied.
CameraModel training_camera(const ProbeModel& model, const CameraModel& base, std::size_t view);

struct ModelGradients {
  MlpGradients mlp;
  RowMatrix bank;
  std::vector<Twist> twists;
  RowMatrix features;  // empty unless requested
};

/// Routes renderer gradients for training view `view` (rendered with
/// training_camera(model, base, view)) to every parameter group.
ModelGradients model_backward(const ProbeModel& model, const ModelForward& fwd, const RenderGradients& grads,
                              const CameraModel& base, std::size_t view, bool want_feature_grad = false,
                              int threads = 1);

}  // namespace splatprobe
