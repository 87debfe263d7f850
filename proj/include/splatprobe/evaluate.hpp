#pragma once

#include "splatprobe/metrics.hpp"
#include "splatprobe/optimizer.hpp"
#include "splatprobe/scene.hpp"

#include <optional>
#include <string>
#include <vector>

namespace splatprobe {

inline constexpr double kMaskAlpha = 0.5;
inline constexpr double kMaskDepthTolerance = 0.05;

/// Per-training-view depth of the init cloud in its own camera (reference depth for masks).
std::vector<std::vector<double>> init_depth_maps(const SceneBundle& scene);

/// Valid iff the render's alpha >= 0.5 and its expected-depth point lands inside at
/// least one training frustum, agreeing with that view's reference depth within 5%.
/// Without reference depth only the frustum test applies.
Mask build_valid_mask(const std::vector<CameraModel>& train_cams, const std::vector<std::vector<double>>& ref_depth,
                      const CameraModel& view, const RenderOutput& render, double alpha_min = kMaskAlpha,
                      double depth_tolerance = kMaskDepthTolerance);

struct ViewMetrics {
  std::string scene;
  std::string feature;
  std::string mode;
  std::string view;
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::optional<double> lpips;
  double mask_coverage = 0.0;
  // Extra diagnostics (JSON only).
  double psnr_pre_db = 0.0;
  double ssim_pre = 0.0;
  double psnr_unrefined_db = 0.0;
  double pose_rotation_deg = 0.0;
};

struct MetricReport {
  std::vector<ViewMetrics> views;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_psnr_pre = 0.0;
  std::optional<CloudMetrics> cloud;
};

enum class PreState { Initial, WarmStarted };

struct EvalOptions {
  bool refine_pose = false;
  PoseRefineConfig refine;
  PreState pre_state = PreState::Initial;
  int threads = 1;
  std::string scene_name;
  /// Replaces the test cameras (e.g. perturbed poses); empty keeps the scene's.
  std::vector<CameraModel> test_cameras;
};

/// Scores every test view of `scene` with the trained state.
MetricReport evaluate(const SceneBundle& scene, const TrainedState& state, const EvalOptions& options);

/// CSV with columns scene,feature,mode,view,psnr_db,ssim,lpips,mask_coverage.
std::string report_csv(const MetricReport& report);
std::string report_json(const MetricReport& report);
/// Parses report_csv output.
std::vector<ViewMetrics> parse_report_csv(const std::string& text);

struct AggregateTable {
  std::vector<std::string> features;  // rows
  std::vector<std::string> metrics;   // columns, e.g. "A.psnr_db"
  std::vector<std::vector<double>> values;
  std::vector<std::vector<int>> ranks;
  CorrMatrix correlation;  // between metric columns across features
};

/// Means per (feature, mode) of psnr/ssim (and lpips when every row has it).
AggregateTable aggregate_reports(const std::vector<ViewMetrics>& rows);
std::string table_csv(const AggregateTable& table);
std::string ranks_csv(const AggregateTable& table);
std::string correlation_csv(const AggregateTable& table);
/// Per feature and metric, the value min-max scaled to [0, 1] with 1 = best.
std::string spider_csv(const AggregateTable& table);

}  // namespace splatprobe
