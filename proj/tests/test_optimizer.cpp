#include "test_util.hpp"

#include "splatprobe/evaluate.hpp"
#include "splatprobe/optimizer.hpp"
#include "splatprobe/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace splatprobe;

namespace {

SynthScene small_scene(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.n_gaussians = 64;
  cfg.n_train = 4;
  cfg.n_test = 2;
  cfg.image_size = 24;
  return gen_scene(cfg);
}

std::vector<FeatureMap> iuvrgb_prepared(const SceneBundle& scene) {
  const auto imgs = scene.training_images();
  return prepare_features(iuvrgb_features(imgs), 16, imgs[0].height, imgs[0].width).maps;
}

TrainConfig short_config(ProbeMode mode) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.warm_iters = 200;
  cfg.main_iters = 200;
  cfg.hidden = 64;
  cfg.warm_batch = 1024;
  return cfg;
}

double train_view_loss(const ProbeModel& model, const SceneBundle& scene) {
  const GaussianCloud cloud = decode_cloud(model);
  const auto cams = scene.training_cameras();
  const auto imgs = scene.training_images();
  double total = 0.0;
  for (std::size_t v = 0; v < cams.size(); ++v) {
    total += photometric_loss(rasterize(cloud, training_camera(model, cams[v], v), Vec3::Zero()), imgs[v]).value;
  }
  return total / cams.size();
}

/// exp of the 4x4 twist matrix by a truncated power series.
Eigen::Matrix4d series_exp(const Twist& xi) {
  Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
  a(0, 1) = -xi[2], a(0, 2) = xi[1], a(1, 0) = xi[2], a(1, 2) = -xi[0], a(2, 0) = -xi[1], a(2, 1) = xi[0];
  a(0, 3) = xi[3], a(1, 3) = xi[4], a(2, 3) = xi[5];
  Eigen::Matrix4d term = Eigen::Matrix4d::Identity(), sum = Eigen::Matrix4d::Identity();
  for (int k = 1; k < 40; ++k) {
    term = term * a / k;
    sum += term;
  }
  return sum;
}

}  // namespace

TEST(LrSchedule, Endpoints) {
  const LrSchedule s{1e-2, 1e-4, 1000};
  EXPECT_DOUBLE_EQ(lr_at(s, 0), 1e-2);
  EXPECT_DOUBLE_EQ(lr_at(s, 1000), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at(s, 5000), 1e-4);
  EXPECT_NEAR(lr_at(s, 500), std::sqrt(1e-2 * 1e-4), 1e-15);
  for (long t = 0; t <= 1200; t += 37) {
    EXPECT_GE(lr_at(s, t), 1e-4);
    EXPECT_LE(lr_at(s, t), 1e-2);
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<double> p = {1.0, -2.0}, g = {0.0, 0.0};
  AdamState s;
  for (int i = 0; i < 5; ++i) adam_step(p, g, s, 0.1);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
}

TEST(Adam, FirstStepIsLrTimesSign) {
  std::vector<double> p = {0.0, 0.0}, g = {3.0, -0.02};
  AdamState s;
  adam_step(p, g, s, 0.01);
  EXPECT_NEAR(p[0], -0.01 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], 0.01 * 0.02 / (0.02 + 1e-8), 1e-15);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, MinimizesParabola) {
  std::vector<double> x = {1.0};
  AdamState s;
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> g = {2.0 * x[0]};
    adam_step(x, g, s, 0.1);
  }
  EXPECT_LT(std::abs(x[0]), 0.1);
}

TEST(Adam, NonFiniteGradientThrows) {
  std::vector<double> p = {1.0, 2.0}, g = {0.0, std::nan("")};
  AdamState s;
  try {
    adam_step(p, g, s, 0.1, "bank");
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("bank"), std::string::npos);
  }
}

TEST(Se3, ZeroTwistIsIdentity) {
  CameraModel cam;
  cam.rotation = Vec4(0.9, 0.1, -0.2, 0.3).normalized();
  cam.translation = Vec3(1, 2, 3);
  const CameraModel out = se3_exp_apply(Twist::Zero(), cam);
  EXPECT_LE((out.rotation_matrix() - cam.rotation_matrix()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(out.translation, cam.translation);
}

TEST(Se3, PureTranslation) {
  CameraModel cam;
  cam.rotation = Vec4(0.9, 0.1, -0.2, 0.3).normalized();
  cam.translation = Vec3(1, 2, 3);
  Twist xi = Twist::Zero();
  xi.tail<3>() = Vec3(0.1, -0.2, 0.3);
  const CameraModel out = se3_exp_apply(xi, cam);
  EXPECT_LE((out.translation - Vec3(1.1, 1.8, 3.3)).norm(), 1e-15);
  EXPECT_LE((out.rotation_matrix() - cam.rotation_matrix()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Se3, QuarterTurnAboutZ) {
  Twist xi = Twist::Zero();
  xi[2] = M_PI / 2;
  const CameraModel out = se3_exp_apply(xi, CameraModel{});
  EXPECT_LE((out.to_camera(Vec3(1, 0, 0)) - Vec3(0, 1, 0)).norm(), 1e-12);
}

TEST(Se3, MatchesSeriesExponential) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (double scale : {1e-5, 1e-3, 0.3, 2.0}) {
    Twist xi;
    for (int i = 0; i < 6; ++i) xi[i] = scale * u(rng);
    const Se3 e = se3_exp(xi);
    const Eigen::Matrix4d ref = series_exp(xi);
    EXPECT_LE((e.rotation - ref.topLeftCorner<3, 3>()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((e.translation - ref.topRightCorner<3, 1>()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Se3, PullbackMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  CameraModel base;
  base.rotation = Vec4(0.8, -0.3, 0.2, 0.1).normalized();
  base.translation = Vec3(0.2, -0.1, 1.5);
  Mat3 gr;
  Vec3 gt;
  for (int i = 0; i < 9; ++i) gr.data()[i] = u(rng);
  for (int i = 0; i < 3; ++i) gt[i] = u(rng);
  for (double scale : {0.0, 1e-4, 0.2}) {
    Twist xi;
    for (int i = 0; i < 6; ++i) xi[i] = scale * u(rng);
    auto f = [&](const Twist& t) {
      const CameraModel c = se3_exp_apply(t, base);
      return (c.rotation_matrix().array() * gr.array()).sum() + c.translation.dot(gt);
    };
    const Twist g = se3_pullback(xi, base, gr, gt);
    for (int i = 0; i < 6; ++i) {
      Twist a = xi, b = xi;
      a[i] += 1e-6;
      b[i] -= 1e-6;
      EXPECT_NEAR(g[i], (f(a) - f(b)) / 2e-6, 1e-7);
    }
  }
}

TEST(Loss, IdenticalImagesGiveZero) {
  std::mt19937_64 rng(1);
  const Image img = testutil::random_image(12, 12, rng);
  const LossResult r = photometric_loss(img.rgb, img);
  EXPECT_NEAR(r.value, 0.0, 1e-15);
  for (double a : r.adjoint) EXPECT_NEAR(a, 0.0, 1e-15);
}

TEST(Loss, PureL1ConstantDifference) {
  std::mt19937_64 rng(2);
  Image target = testutil::random_image(6, 6, rng);
  for (auto& v : target.rgb) v *= 0.5;
  std::vector<double> render = target.rgb;
  for (auto& v : render) v += 0.125;
  EXPECT_NEAR(photometric_loss(render, target, nullptr, 0.0).value, 0.125, 1e-15);
}

TEST(Loss, AdjointMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  const Image target = testutil::random_image(8, 8, rng);
  Image render = testutil::random_image(8, 8, rng);
  Mask mask(8, 8, true);
  mask.valid[5] = mask.valid[40] = 0;
  for (const Mask* m : {static_cast<const Mask*>(nullptr), static_cast<const Mask*>(&mask)}) {
    const LossResult r = photometric_loss(render.rgb, target, m);
    double worst = 0.0;
    for (std::size_t i = 0; i < render.rgb.size(); ++i) {
      std::vector<double> a = render.rgb, b = render.rgb;
      a[i] += 1e-6;
      b[i] -= 1e-6;
      const double num = (photometric_loss(a, target, m).value - photometric_loss(b, target, m).value) / 2e-6;
      if (std::abs(r.adjoint[i]) > 1e-6) {
        worst = std::max(worst, std::abs(num - r.adjoint[i]) / std::max(std::abs(num), std::abs(r.adjoint[i])));
      } else {
        EXPECT_NEAR(num, 0.0, 1e-8);
      }
    }
    EXPECT_LE(worst, 1e-5);
  }
}

TEST(Loss, EmptyMaskThrows) {
  const Image img(4, 4);
  const Mask mask(4, 4, false);
  EXPECT_THROW(photometric_loss(img.rgb, img, &mask), DataError);
}

TEST(WarmStart, AlreadyAtTargetsStaysPut) {
  InitCloud init;
  for (int i = 0; i < 30; ++i) {
    init.points.emplace_back(0.5, -0.25, 2.0);
    init.colors.emplace_back(0.2, 0.4, 0.9);
  }
  std::mt19937_64 rng(5);
  ProbeModel m;
  m.mode = ProbeMode::All;
  m.base_scale = 0.1;
  m.features = testutil::random_matrix(30, 3, rng);
  m.mlp = mlp_init(3, 59, 1, 16);
  m.bank = free_bank_init(init, ProbeMode::All, m.base_scale);
  m.view_offsets = {0, 30};
  m.twists = {Twist::Zero()};
  const RowMatrix targets = warm_start_targets(m, init);
  m.mlp.w2.setZero();
  m.mlp.b2 = targets.row(0).transpose();
  const MlpParams before = m.mlp;
  TrainConfig cfg;
  cfg.warm_iters = 10;
  cfg.warm_batch = 16;
  const WarmStartResult r = warm_start(m, init, cfg);
  EXPECT_EQ(r.initial_loss, 0.0);
  EXPECT_EQ(r.final_loss, 0.0);
  EXPECT_LE((m.mlp.w1 - before.w1).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((m.mlp.b2 - before.b2).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(WarmStart, HalvesLossOnOracleScenes) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const SynthScene s = small_scene(seed);
    TrainConfig cfg;
    cfg.seed = seed;
    ProbeModel m = make_model(s.bundle, iuvrgb_prepared(s.bundle), cfg);
    const WarmStartResult r = warm_start(m, s.bundle.init, cfg);
    EXPECT_LE(r.final_loss, 0.5 * r.initial_loss) << "seed " << seed;
  }
}

TEST(WarmStart, PointCountMismatchThrows) {
  const SynthScene s = small_scene(4);
  ProbeModel m = make_model(s.bundle, iuvrgb_prepared(s.bundle), short_config(ProbeMode::All));
  InitCloud init = s.bundle.init;
  init.points.pop_back();
  init.colors.pop_back();
  EXPECT_THROW(warm_start(m, init, short_config(ProbeMode::All)), DataError);
}

TEST(WarmStart, FinetuneFeaturesMovesFeatures) {
  const SynthScene s = small_scene(5);
  TrainConfig cfg = short_config(ProbeMode::All);
  cfg.warm_iters = 20;
  cfg.finetune_features = true;
  ProbeModel m = make_model(s.bundle, iuvrgb_prepared(s.bundle), cfg);
  const RowMatrix before = m.features;
  warm_start(m, s.bundle.init, cfg);
  EXPECT_GT((m.features - before).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Train, ZeroMainIterationsKeepsWarmState) {
  const SynthScene s = small_scene(6);
  TrainConfig cfg = short_config(ProbeMode::All);
  cfg.warm_iters = 20;
  cfg.main_iters = 0;
  const TrainedState st = train(s.bundle, iuvrgb_prepared(s.bundle), cfg);
  EXPECT_EQ(st.model.mlp.w1, st.warm.mlp.w1);
  EXPECT_EQ(st.model.mlp.b2, st.warm.mlp.b2);
  EXPECT_TRUE(st.history.size() == 20u);
}

TEST(Train, LowersTrainingLossAndIsDeterministic) {
  const SynthScene s = small_scene(7);
  const auto feats = iuvrgb_prepared(s.bundle);
  const TrainConfig cfg = short_config(ProbeMode::All);
  const TrainedState a = train(s.bundle, feats, cfg);
  EXPECT_LT(train_view_loss(a.model, s.bundle), train_view_loss(a.warm, s.bundle));
  EXPECT_EQ(a.history.size(), static_cast<std::size_t>(cfg.warm_iters + cfg.main_iters));
  const TrainedState b = train(s.bundle, feats, cfg);
  EXPECT_EQ(a.model.mlp.w1, b.model.mlp.w1);
  EXPECT_EQ(a.model.mlp.w2, b.model.mlp.w2);
  for (std::size_t v = 0; v < a.model.twists.size(); ++v) EXPECT_EQ(a.model.twists[v], b.model.twists[v]);
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].loss, b.history[i].loss);
}

TEST(Train, ExactPosesKeepTwistsSmall) {
  const SynthScene s = small_scene(8);
  const auto feats = iuvrgb_prepared(s.bundle);
  TrainConfig cfg = short_config(ProbeMode::All);
  const TrainedState on = train(s.bundle, feats, cfg);
  double max_twist = 0.0;
  for (const auto& t : on.model.twists) max_twist = std::max(max_twist, t.norm());
  EXPECT_LT(max_twist, 1e-3);
  cfg.optimize_poses = false;
  const TrainedState off = train(s.bundle, feats, cfg);
  for (const auto& t : off.model.twists) EXPECT_EQ(t, Twist::Zero());
  EXPECT_NEAR(train_view_loss(on.model, s.bundle), train_view_loss(off.model, s.bundle), 0.01);
}

TEST(Train, ComplementCheckedEveryInterval) {
  const SynthScene s = small_scene(9);
  const auto feats = iuvrgb_prepared(s.bundle);
  for (ProbeMode mode : {ProbeMode::Geometry, ProbeMode::Texture}) {
    TrainConfig cfg = short_config(mode);
    cfg.warm_iters = 10;
    cfg.main_iters = 120;
    cfg.complement_check_every = 50;
    const TrainedState st = train(s.bundle, feats, cfg);
    EXPECT_EQ(st.complement_checks, 3);
  }
}

TEST(GradientRouting, ModesFeedTheExpectedGroups) {
  const SynthScene s = small_scene(10);
  const auto feats = iuvrgb_prepared(s.bundle);
  const auto cams = s.bundle.training_cameras();
  const auto imgs = s.bundle.training_images();
  for (ProbeMode mode : {ProbeMode::Geometry, ProbeMode::Texture, ProbeMode::All}) {
    TrainConfig cfg = short_config(mode);
    const ProbeModel m = make_model(s.bundle, feats, cfg);
    const ModelForward fwd = model_forward(m);
    const RenderPass pass(fwd.cloud, cams[0], RenderOptions{});
    const LossResult loss = photometric_loss(pass.forward(), imgs[0]);
    const RenderGradients rg = pass.backward(loss.adjoint);
    const ModelGradients g = model_backward(m, fwd, rg, cams[0], 0);
    EXPECT_GT(g.mlp.w2.cwiseAbs().maxCoeff(), 0.0);
    if (mode == ProbeMode::All) {
      EXPECT_EQ(g.bank.cols(), 0);
    } else {
      EXPECT_GT(g.bank.cwiseAbs().maxCoeff(), 0.0);
    }
    const HeadLayout readout = m.readout_layout();
    const CloudGradients routed = restrict_gradients(rg.cloud, readout);
    bool geometry_grad = false, sh_grad = false;
    for (std::size_t i = 0; i < routed.size(); ++i) {
      geometry_grad |= routed.positions[i].norm() > 0 || routed.opacities[i] != 0 || routed.scales[i].norm() > 0;
      for (int k = 0; k < kShWidth; ++k) sh_grad |= routed.sh[i * kShWidth + k] != 0;
    }
    EXPECT_EQ(geometry_grad, mode != ProbeMode::Texture);
    EXPECT_EQ(sh_grad, mode != ProbeMode::Geometry);
    EXPECT_GT(g.twists[0].norm(), 0.0);
    EXPECT_EQ(g.twists[1].norm(), 0.0);
  }
}

TEST(PoseRefine, ExactPoseStaysAndSceneFrozen) {
  const SynthScene s = small_scene(11);
  const auto test = s.bundle.test_indices();
  const GaussianCloud cloud = s.gt;
  PoseRefineConfig rc;
  rc.iters = 100;
  const PoseRefineResult r = pose_refine_test(cloud, s.bundle.views[test[0]].camera, s.bundle.views[test[0]].image, rc);
  EXPECT_LT(r.twist.norm(), 1e-3);
  EXPECT_LE(r.final_loss, r.initial_loss);
  EXPECT_EQ(cloud.positions, s.gt.positions);
  EXPECT_EQ(cloud.sh, s.gt.sh);
  EXPECT_EQ(cloud.opacities, s.gt.opacities);
}

TEST(PoseRefine, RecoversFromOneDegreePerturbation) {
  const SynthScene s = small_scene(12);
  const auto test = s.bundle.test_indices();
  const SceneView& view = s.bundle.views[test[0]];
  const auto perturbed = perturb_poses({view.camera}, 1.0, 0.0, s.bundle.extent(), 3);
  PoseRefineConfig rc;
  rc.iters = 150;
  const PoseRefineResult r = pose_refine_test(s.gt, perturbed[0], view.image, rc);
  const double before = psnr(to_image(rasterize(s.gt, perturbed[0], Vec3::Zero())), view.image);
  const double after = psnr(to_image(rasterize(s.gt, r.camera, Vec3::Zero())), view.image);
  EXPECT_GE(after, before);
  EXPECT_LT(rotation_angle_deg(r.camera, view.camera), rotation_angle_deg(perturbed[0], view.camera));
}
