#pragma once

#include "splatprobe/loss.hpp"
#include "splatprobe/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace splatprobe {

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-3;
  double min_magnitude = 1e-6;
  int gaussians = 8;
  int image_size = 16;
  int channels = 4;
  int hidden = 16;
  double dssim_weight = kDefaultDssimWeight;
};

struct GradGroupResult {
  std::string name;
  std::size_t checked = 0;
  std::size_t failures = 0;
  double max_rel_error = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckReport {
  std::uint64_t seed = 0;
  std::vector<GradGroupResult> groups;
  int redraws = 0;

  double max_rel_error() const;
  bool passed() const;
};

/// Central-difference check of the photometric loss on a small random scene:
/// every Gaussian attribute, pose twist and background through the renderer,
/// then MLP weights, free bank entries, input features and twist through the
/// full readout pipeline in each probing mode.
GradCheckReport gradcheck_scene(std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace splatprobe
