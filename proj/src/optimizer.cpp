#include "splatprobe/optimizer.hpp"

#include "splatprobe/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace splatprobe {

namespace {

template <typename LrFn>
void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state, LrFn&& lr_of,
                 const std::string& group) {
  if (params.size() != grads.size()) throw DataError("adam_step(" + group + "): parameter/gradient size mismatch");
  if (state.m.size() != params.size()) {
    if (state.step != 0 || !state.m.empty()) throw DataError("adam_step(" + group + "): state shape mismatch");
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericalError("adam_step(" + group + "): non-finite gradient at index " + std::to_string(i) +
                           " (step " + std::to_string(state.step) + ")");
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(AdamState::beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(AdamState::beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = AdamState::beta1 * state.m[i] + (1.0 - AdamState::beta1) * g;
    state.v[i] = AdamState::beta2 * state.v[i] + (1.0 - AdamState::beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr_of(i) * mhat / (std::sqrt(vhat) + AdamState::eps);
  }
}

std::span<double> span_of(RowMatrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<const double> span_of(const RowMatrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> span_of(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
std::span<const double> span_of(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
std::span<double> span_of(Twist& t) { return {t.data(), 6}; }
std::span<const double> span_of(const Twist& t) { return {t.data(), 6}; }

// Learning rate of every slot of a head layout at main-phase step t.
std::vector<double> slot_rates(const HeadLayout& layout, const TrainConfig& cfg, double extent, long t) {
  std::vector<double> lr(static_cast<std::size_t>(layout.width), 0.0);
  const LrSchedule position{cfg.position_lr * extent, cfg.position_lr * extent * cfg.position_lr_final_ratio,
                            std::max(1, cfg.main_iters)};
  auto fill = [&](Attribute a, double value) {
    if (!layout.has(a)) return;
    const auto [off, size] = layout.block(a);
    for (int k = 0; k < size; ++k) lr[static_cast<std::size_t>(off + k)] = value;
  };
  fill(kPosition, lr_at(position, t));
  fill(kOpacity, cfg.opacity_lr);
  fill(kScale, cfg.scale_lr);
  fill(kRotation, cfg.rotation_lr);
  if (layout.has(kSh)) {
    const auto [off, size] = layout.block(kSh);
    for (int k = 0; k < size; ++k) lr[static_cast<std::size_t>(off + k)] = k < 3 ? cfg.sh_lr : cfg.sh_lr * cfg.sh_rest_ratio;
  }
  return lr;
}

std::vector<CameraModel> training_bases(const SceneBundle& scene) { return scene.training_cameras(); }

}  // namespace

double lr_at(const LrSchedule& s, long step) {
  if (s.horizon <= 0) return s.lr_final;
  const double t = std::clamp(static_cast<double>(step) / s.horizon, 0.0, 1.0);
  if (t >= 1.0) return s.lr_final;
  if (t <= 0.0) return s.lr_init;
  return s.lr_init * std::pow(s.lr_final / s.lr_init, t);
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const std::string& group) {
  adam_update(params, grads, state, [lr](std::size_t) { return lr; }, group);
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               std::span<const double> column_lr, const std::string& group) {
  if (column_lr.empty()) throw DataError("adam_step(" + group + "): empty learning-rate table");
  adam_update(params, grads, state, [&](std::size_t i) { return column_lr[i % column_lr.size()]; }, group);
}

void TrainConfig::validate() const {
  if (warm_iters < 0 || main_iters < 0) throw ConfigError("iteration counts must be non-negative");
  if (!(dssim_weight >= 0.0 && dssim_weight <= 1.0)) throw ConfigError("dssim weight must lie in [0, 1]");
  if (hidden < 1) throw ConfigError("hidden width must be positive");
  if (warm_batch < 1) throw ConfigError("warm-start batch must be positive");
  if (threads < 1) throw ConfigError("thread count must be positive");
  if (complement_check_every < 1) throw ConfigError("complement check interval must be positive");
}

ProbeModel make_model(const SceneBundle& scene, std::span<const FeatureMap> features, const TrainConfig& cfg) {
  cfg.validate();
  scene.validate();
  const auto cams = scene.training_cameras();
  if (features.size() != cams.size()) {
    throw DataError("got " + std::to_string(features.size()) + " feature maps for " + std::to_string(cams.size()) +
                    " training views");
  }
  ProbeModel model;
  model.mode = cfg.mode;
  const double extent = scene.extent();
  if (!(extent > 0.0)) throw DataError("init cloud has zero extent");
  model.base_scale = cfg.base_scale_ratio * extent;
  const int channels = features.front().channels;
  model.view_offsets.push_back(0);
  for (std::size_t v = 0; v < cams.size(); ++v) {
    const FeatureMap& f = features[v];
    f.validate();
    if (f.height != cams[v].height || f.width != cams[v].width) {
      throw DataError("feature map for training view " + std::to_string(v) + " is " + std::to_string(f.width) + "x" +
                      std::to_string(f.height) + ", image is " + std::to_string(cams[v].width) + "x" +
                      std::to_string(cams[v].height));
    }
    if (f.channels != channels) throw DataError("feature maps disagree on the channel count");
    model.view_offsets.push_back(model.view_offsets.back() + static_cast<std::size_t>(f.height) * f.width);
  }
  model.features.resize(static_cast<Eigen::Index>(model.view_offsets.back()), channels);
  for (std::size_t v = 0; v < cams.size(); ++v) {
    std::copy(features[v].data.begin(), features[v].data.end(),
              model.features.data() + model.view_offsets[v] * static_cast<std::size_t>(channels));
  }
  if (model.size() != scene.init.points.size()) {
    throw DataError("init cloud has " + std::to_string(scene.init.points.size()) + " points for " +
                    std::to_string(model.size()) + " feature pixels");
  }
  model.mlp = mlp_init(channels, model.readout_layout().width, cfg.seed, cfg.hidden);
  model.bank = free_bank_init(scene.init, cfg.mode, model.base_scale, cfg.threads);
  model.twists.assign(cams.size(), Twist::Zero());
  model.validate();
  return model;
}

RowMatrix warm_start_targets(const ProbeModel& model, const InitCloud& init, int threads) {
  const auto knn = mean_knn_distance(init.points, 3, threads);
  return init_targets(init, model.readout_layout(), model.base_scale, knn);
}

double warm_start_loss(const ProbeModel& model, const RowMatrix& targets, int threads) {
  const RowMatrix out = mlp_forward(model.mlp, model.features, nullptr, threads);
  if (out.rows() != targets.rows() || out.cols() != targets.cols()) throw DataError("warm-start target shape mismatch");
  return (out - targets).squaredNorm() / static_cast<double>(out.rows());
}

WarmStartResult warm_start(ProbeModel& model, const InitCloud& init, const TrainConfig& cfg,
                           std::vector<HistoryRow>* history) {
  cfg.validate();
  const std::size_t n = model.size();
  if (init.points.size() != n) {
    throw DataError("warm start: " + std::to_string(init.points.size()) + " init points for " + std::to_string(n) +
                    " pixels");
  }
  const RowMatrix targets = warm_start_targets(model, init, cfg.threads);
  WarmStartResult result;
  result.initial_loss = warm_start_loss(model, targets, cfg.threads);

  std::mt19937_64 rng(cfg.seed ^ 0x5eed5eedULL);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.warm_batch), n);
  const LrSchedule schedule{cfg.warm_lr_init, cfg.warm_lr_final, cfg.warm_iters};
  AdamState s_w1, s_b1, s_w2, s_b2, s_features;
  const Eigen::Index channels = model.features.cols();
  std::vector<std::size_t> rows(batch);
  RowMatrix x(static_cast<Eigen::Index>(batch), channels);
  RowMatrix t_rows(static_cast<Eigen::Index>(batch), targets.cols());
  RowMatrix feature_grad;
  if (cfg.finetune_features) feature_grad = RowMatrix::Zero(model.features.rows(), channels);

  for (int it = 0; it < cfg.warm_iters; ++it) {
    for (std::size_t b = 0; b < batch; ++b) {
      rows[b] = pick(rng);
      x.row(static_cast<Eigen::Index>(b)) = model.features.row(static_cast<Eigen::Index>(rows[b]));
      t_rows.row(static_cast<Eigen::Index>(b)) = targets.row(static_cast<Eigen::Index>(rows[b]));
    }
    const RowMatrix out = mlp_forward(model.mlp, x, nullptr, cfg.threads);
    const RowMatrix diff = out - t_rows;
    const double loss = diff.squaredNorm() / static_cast<double>(batch);
    if (!std::isfinite(loss)) throw NumericalError("warm start: non-finite loss at iteration " + std::to_string(it));
    const RowMatrix grad_out = diff * (2.0 / static_cast<double>(batch));
    MlpGradients g = mlp_backward(model.mlp, x, grad_out, cfg.finetune_features, cfg.threads);
    const double lr = lr_at(schedule, it);
    adam_step(span_of(model.mlp.w1), span_of(g.w1), s_w1, lr, "mlp.w1");
    adam_step(span_of(model.mlp.b1), span_of(g.b1), s_b1, lr, "mlp.b1");
    adam_step(span_of(model.mlp.w2), span_of(g.w2), s_w2, lr, "mlp.w2");
    adam_step(span_of(model.mlp.b2), span_of(g.b2), s_b2, lr, "mlp.b2");
    if (cfg.finetune_features) {
      feature_grad.setZero();
      for (std::size_t b = 0; b < batch; ++b) {
        feature_grad.row(static_cast<Eigen::Index>(rows[b])) += g.inputs.row(static_cast<Eigen::Index>(b));
      }
      adam_step(span_of(model.features), span_of(feature_grad), s_features, lr, "features");
    }
    if (history) history->push_back({"warm", it, -1, loss, lr, lr, 0.0});
  }
  result.final_loss = warm_start_loss(model, targets, cfg.threads);
  return result;
}

void train_main(ProbeModel& model, const SceneBundle& scene, const TrainConfig& cfg, double extent,
                std::vector<HistoryRow>* history, int* complement_checks) {
  cfg.validate();
  model.validate();
  const auto bases = training_bases(scene);
  const auto images = scene.training_images();
  if (bases.size() != model.view_count()) throw DataError("model and scene disagree on the training view count");
  const HeadLayout readout = model.readout_layout();
  const int hidden = model.mlp.hidden();
  AdamState s_w1, s_b1, s_w2, s_b2, s_bank;
  std::vector<AdamState> s_twist(bases.size());
  RenderOptions ropt;
  ropt.background = cfg.background;
  ropt.threads = cfg.threads;

  for (int it = 0; it < cfg.main_iters; ++it) {
    if (it % cfg.complement_check_every == 0) {
      model.check_complement();
      if (complement_checks) ++*complement_checks;
    }
    const std::size_t view = static_cast<std::size_t>(it) % bases.size();
    const ModelForward fwd = model_forward(model, cfg.threads);
    const RenderPass pass(fwd.cloud, training_camera(model, bases[view], view), ropt);
    const RenderOutput out = pass.forward();
    const LossResult loss = photometric_loss(out, images[view], nullptr, cfg.dssim_weight);
    if (!std::isfinite(loss.value)) {
      throw NumericalError("main phase: non-finite loss at iteration " + std::to_string(it) + ", view " +
                           std::to_string(view));
    }
    const ModelGradients g = model_backward(model, fwd, pass.backward(loss.adjoint), bases[view], view, false, cfg.threads);

    const std::vector<double> head_lr = slot_rates(readout, cfg, extent, it);
    std::vector<double> row_lr(head_lr.size());
    for (std::size_t k = 0; k < head_lr.size(); ++k) row_lr[k] = head_lr[k] * cfg.mlp_lr_ratio;
    const double shared = cfg.shared_lr > 0.0 ? cfg.shared_lr : *std::max_element(row_lr.begin(), row_lr.end());
    adam_step(span_of(model.mlp.w1), span_of(g.mlp.w1), s_w1, shared, "mlp.w1");
    adam_step(span_of(model.mlp.b1), span_of(g.mlp.b1), s_b1, shared, "mlp.b1");
    adam_update(span_of(model.mlp.w2), span_of(g.mlp.w2), s_w2,
                [&](std::size_t i) { return row_lr[i / static_cast<std::size_t>(hidden)]; }, "mlp.w2");
    adam_step(span_of(model.mlp.b2), span_of(g.mlp.b2), s_b2, row_lr, "mlp.b2");
    if (model.bank.layout.width > 0) {
      const std::vector<double> bank_lr = slot_rates(model.bank.layout, cfg, extent, it);
      adam_step(span_of(model.bank.raw), span_of(g.bank), s_bank, bank_lr, "bank");
    }
    const double cam_lr = lr_at(cfg.camera_lr, it);
    if (cfg.optimize_poses) {
      adam_step(span_of(model.twists[view]), span_of(g.twists[view]), s_twist[view], cam_lr, "twist");
    }
    if (history) {
      const double pos_lr = lr_at({cfg.position_lr * extent, cfg.position_lr * extent * cfg.position_lr_final_ratio,
                                   std::max(1, cfg.main_iters)}, it);
      history->push_back({"main", it, static_cast<int>(view), loss.value, shared, pos_lr,
                          cfg.optimize_poses ? cam_lr : 0.0});
    }
  }
  model.check_complement();
}

TrainedState train(const SceneBundle& scene, std::span<const FeatureMap> features, const TrainConfig& cfg,
                   const std::string& feature_tag) {
  TrainedState state;
  state.config = cfg;
  state.feature_tag = feature_tag;
  state.extent = scene.extent();
  state.initial = make_model(scene, features, cfg);
  state.model = state.initial;
  const WarmStartResult warm = warm_start(state.model, scene.init, cfg, &state.history);
  state.warm_initial_loss = warm.initial_loss;
  state.warm_final_loss = warm.final_loss;
  state.warm = state.model;
  train_main(state.model, scene, cfg, state.extent, &state.history, &state.complement_checks);
  return state;
}

PoseRefineResult pose_refine_test(const GaussianCloud& cloud, const CameraModel& camera, const Image& target,
                                  const PoseRefineConfig& cfg) {
  PoseRefineResult result;
  RenderOptions ropt;
  ropt.background = cfg.background;
  ropt.threads = cfg.threads;
  Twist twist = Twist::Zero();
  Twist best = twist;
  double best_loss = 0.0;
  AdamState state;
  for (int it = 0; it <= cfg.iters; ++it) {
    const CameraModel cam = se3_exp_apply(twist, camera);
    const RenderPass pass(cloud, cam, ropt);
    const LossResult loss = photometric_loss(pass.forward(), target, nullptr, cfg.dssim_weight);
    if (it == 0) {
      result.initial_loss = loss.value;
      best_loss = loss.value;
    } else if (loss.value < best_loss) {
      best_loss = loss.value;
      best = twist;
    }
    if (it == cfg.iters) break;
    const RenderGradients g = pass.backward(loss.adjoint);
    const Twist gt = se3_pullback(twist, camera, g.camera_rotation, g.camera_translation);
    adam_step(span_of(twist), span_of(gt), state, lr_at(cfg.lr, it), "test twist");
  }
  result.twist = best;
  result.final_loss = best_loss;
  result.camera = se3_exp_apply(best, camera);
  return result;
}

}  // namespace splatprobe
