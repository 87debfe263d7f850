#pragma once

#include "splatprobe/loss.hpp"
#include "splatprobe/model.hpp"
#include "splatprobe/scene.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace splatprobe {

/// Exponential decay from lr_init to lr_final over `horizon` steps, then held.
struct LrSchedule {
  double lr_init = 1e-3;
  double lr_final = 1e-3;
  int horizon = 0;
};

double lr_at(const LrSchedule& schedule, long step);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps = 1e-8;
};

/// Bias-corrected Adam update. Throws NumericalError naming the first non-finite gradient.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const std::string& group = "params");
/// Element i uses column_lr[i % column_lr.size()] (row-major parameter matrices).
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               std::span<const double> column_lr, const std::string& group = "params");

struct TrainConfig {
  ProbeMode mode = ProbeMode::All;
  int warm_iters = 1000;
  int main_iters = 2000;
  double dssim_weight = kDefaultDssimWeight;
  std::uint64_t seed = 0;
  bool finetune_features = false;
  bool optimize_poses = true;
  Vec3 background = Vec3::Zero();
  int threads = 1;
  int hidden = kDefaultHidden;

  int warm_batch = 4096;
  double warm_lr_init = 1e-2;
  double warm_lr_final = 1e-4;
  LrSchedule camera_lr{1e-4, 1e-6, 1000};

  // Free-bank rates; the position rate is multiplied by the scene extent.
  double position_lr = 1.6e-4;
  double position_lr_final_ratio = 0.01;
  double opacity_lr = 2.5e-2;
  double scale_lr = 5e-3;
  double rotation_lr = 1e-3;
  double sh_lr = 2.5e-3;
  double sh_rest_ratio = 1.0 / 20.0;
  double mlp_lr_ratio = 0.1;
  double shared_lr = 0.0;  // first MLP layer; 0 picks the largest read-out head rate

  double base_scale_ratio = 0.01;
  int complement_check_every = 500;

  void validate() const;
};

struct HistoryRow {
  std::string phase;  // "warm" or "main"
  int iteration = 0;
  int view = -1;
  double loss = 0.0;
  double lr_shared = 0.0;
  double lr_position = 0.0;
  double lr_camera = 0.0;
};

struct TrainedState {
  TrainConfig config;
  std::string feature_tag;
  double extent = 0.0;
  ProbeModel initial;  // before warm start
  ProbeModel warm;     // after warm start
  ProbeModel model;    // after the main phase
  std::vector<HistoryRow> history;
  double warm_initial_loss = 0.0;
  double warm_final_loss = 0.0;
  int complement_checks = 0;
};

/// Fresh model for a scene: Kaiming readout, free bank from the init cloud, zero twists.
/// `features` are per-training-view maps already at image resolution.
ProbeModel make_model(const SceneBundle& scene, std::span<const FeatureMap> features, const TrainConfig& cfg);

/// Mean squared error of the read-out attributes against their init-cloud targets.
double warm_start_loss(const ProbeModel& model, const RowMatrix& targets, int threads = 1);

/// Raw-domain regression targets for the model's read-out attributes.
RowMatrix warm_start_targets(const ProbeModel& model, const InitCloud& init, int threads = 1);

struct WarmStartResult {
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

WarmStartResult warm_start(ProbeModel& model, const InitCloud& init, const TrainConfig& cfg,
                           std::vector<HistoryRow>* history = nullptr);

/// Main photometric phase on an already warm-started model.
void train_main(ProbeModel& model, const SceneBundle& scene, const TrainConfig& cfg, double extent,
                std::vector<HistoryRow>* history = nullptr, int* complement_checks = nullptr);

/// make_model + warm_start + train_main.
TrainedState train(const SceneBundle& scene, std::span<const FeatureMap> features, const TrainConfig& cfg,
                   const std::string& feature_tag = "");

struct PoseRefineConfig {
  int iters = 500;
  LrSchedule lr{1e-3, 1e-5, 500};
  double dssim_weight = kDefaultDssimWeight;
  Vec3 background = Vec3::Zero();
  int threads = 1;
};

struct PoseRefineResult {
  CameraModel camera;
  Twist twist = Twist::Zero();
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Optimizes only a twist on `camera` against `target`; the cloud is never modified.
PoseRefineResult pose_refine_test(const GaussianCloud& cloud, const CameraModel& camera, const Image& target,
                                  const PoseRefineConfig& cfg);

}  // namespace splatprobe
