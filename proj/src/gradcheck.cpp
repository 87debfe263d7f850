#include "splatprobe/gradcheck.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace splatprobe {

namespace {

struct Probe {
  std::string group;
  double* value;
  double analytic;
};

class Accumulator {
 public:
  explicit Accumulator(const GradCheckOptions& options) : options_(options) {}

  void check(std::vector<Probe>& probes, const std::function<double()>& loss, GradCheckReport& report) {
    for (Probe& p : probes) {
      GradGroupResult& g = group(report, p.group);
      const double saved = *p.value;
      *p.value = saved + options_.step;
      const double up = loss();
      *p.value = saved - options_.step;
      const double down = loss();
      *p.value = saved;
      const double numeric = (up - down) / (2.0 * options_.step);
      const double scale = std::max(std::abs(numeric), std::abs(p.analytic));
      if (scale <= options_.min_magnitude) continue;
      const double rel = std::abs(numeric - p.analytic) / scale;
      ++g.checked;
      if (rel > options_.tolerance) ++g.failures;
      if (rel > g.max_rel_error) {
        g.max_rel_error = rel;
        g.worst_analytic = p.analytic;
        g.worst_numeric = numeric;
      }
    }
  }

 private:
  static GradGroupResult& group(GradCheckReport& report, const std::string& name) {
    for (auto& g : report.groups) {
      if (g.name == name) return g;
    }
    report.groups.push_back({});
    report.groups.back().name = name;
    return report.groups.back();
  }

  GradCheckOptions options_;
};

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

CameraModel check_camera(Rng& rng, int size) {
  const Vec3 eye(uniform(rng, -0.4, 0.4), uniform(rng, -0.4, 0.4), -3.0);
  return look_at(eye, Vec3::Zero(), Vec3(0, -1, 0), 40.0, size, size);
}

// True when small parameter steps cannot cross a branch of the renderer or loss.
bool smooth_scene(const GaussianCloud& cloud, const CameraModel& cam) {
  const Mat3 r = cam.rotation_matrix();
  const Vec3 centre = cam.center();
  std::vector<double> depths;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto splat = project_gaussian(cam, cloud.positions[i], build_cov3d(cloud.scales[i], cloud.rotations[i]));
    if (!splat || splat->depth < 1.0) return false;
    depths.push_back(splat->depth);
    const Mat2 cov = splat->cov2d;
    const Mat2 conic = cov.inverse();
    const double radius = kFootprintSigmas * std::sqrt(Eigen::SelfAdjointEigenSolver<Mat2>(cov).eigenvalues().maxCoeff());
    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        const Vec2 d = Vec2(x + 0.5, y + 0.5) - splat->mean2d;
        if (std::abs(d.x()) > radius - 0.05 || std::abs(d.y()) > radius - 0.05) return false;
        const double alpha = cloud.opacities[i] * std::exp(-0.5 * d.dot(conic * d));
        if (alpha < 3.0 * kAlphaSkip || alpha > kAlphaCap - 0.05) return false;
      }
    }
    const auto basis = sh_basis((cloud.positions[i] - centre).normalized());
    for (int c = 0; c < 3; ++c) {
      double v = 0.5;
      for (int k = 0; k < kShCoeffs; ++k) v += basis[k] * cloud.sh_of(i)[k * 3 + c];
      if (v < 0.02) return false;
    }
  }
  (void)r;
  std::sort(depths.begin(), depths.end());
  for (std::size_t i = 1; i < depths.size(); ++i) {
    if (depths[i] - depths[i - 1] < 2e-3) return false;
  }
  return true;
}

Image offset_target(const RenderOutput& render, Rng& rng) {
  Image target(render.height, render.width);
  for (std::size_t i = 0; i < target.rgb.size(); ++i) {
    const double mag = uniform(rng, 0.05, 0.3);
    target.rgb[i] = render.rgb[i] + (uniform(rng, 0.0, 1.0) < 0.5 ? -mag : mag);
  }
  return target;
}

void random_raw_row(Rng& rng, double base_scale, double position_spread, double* row, const HeadLayout& layout) {
  if (layout.position >= 0) {
    for (int a = 0; a < 3; ++a) row[layout.position + a] = uniform(rng, -position_spread, position_spread);
  }
  if (layout.opacity >= 0) row[layout.opacity] = uniform(rng, -0.8, 0.8);
  if (layout.scale >= 0) {
    for (int a = 0; a < 3; ++a) row[layout.scale + a] = std::log(uniform(rng, 0.8, 1.2) / base_scale);
  }
  if (layout.rotation >= 0) {
    for (int a = 0; a < 4; ++a) row[layout.rotation + a] = uniform(rng, -0.3, 0.3);
  }
  if (layout.sh >= 0) {
    for (int k = 0; k < kShWidth; ++k) row[layout.sh + k] = k < 3 ? uniform(rng, -0.5, 0.5) : uniform(rng, -0.08, 0.08);
  }
}

void check_renderer(Rng& rng, const GradCheckOptions& opt, GradCheckReport& report, Accumulator& acc) {
  const std::size_t n = static_cast<std::size_t>(opt.gaussians);
  GaussianCloud cloud;
  CameraModel base;
  Twist twist;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 200) throw NumericalError("gradcheck: could not draw a smooth renderer scene");
    cloud.resize(n);
    base = check_camera(rng, opt.image_size);
    for (std::size_t i = 0; i < n; ++i) {
      cloud.positions[i] = Vec3(uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3));
      cloud.opacities[i] = uniform(rng, 0.3, 0.7);
      cloud.scales[i] = Vec3(uniform(rng, 0.8, 1.2), uniform(rng, 0.8, 1.2), uniform(rng, 0.8, 1.2));
      cloud.rotations[i] = Vec4(uniform(rng, 0.5, 1.0), uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5),
                                uniform(rng, -0.5, 0.5));
      for (int k = 0; k < kShWidth; ++k) cloud.sh_of(i)[k] = k < 3 ? uniform(rng, -0.5, 0.5) : uniform(rng, -0.08, 0.08);
    }
    for (int a = 0; a < 6; ++a) twist[a] = uniform(rng, -0.02, 0.02);
    if (smooth_scene(cloud, se3_exp_apply(twist, base))) break;
    ++report.redraws;
  }
  Vec3 background(uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0));
  RenderOptions ropt;
  ropt.background = background;
  const CameraModel cam = se3_exp_apply(twist, base);
  const RenderPass pass(cloud, cam, ropt);
  const RenderOutput out = pass.forward();
  const Image target = offset_target(out, rng);
  const LossResult loss = photometric_loss(out, target, nullptr, opt.dssim_weight);
  const RenderGradients g = pass.backward(loss.adjoint);
  const Twist g_twist = se3_pullback(twist, base, g.camera_rotation, g.camera_translation);

  std::vector<Probe> probes;
  for (std::size_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      probes.push_back({"gaussian.position", &cloud.positions[i][a], g.cloud.positions[i][a]});
      probes.push_back({"gaussian.scale", &cloud.scales[i][a], g.cloud.scales[i][a]});
    }
    probes.push_back({"gaussian.opacity", &cloud.opacities[i], g.cloud.opacities[i]});
    for (int a = 0; a < 4; ++a) probes.push_back({"gaussian.rotation", &cloud.rotations[i][a], g.cloud.rotations[i][a]});
    for (int k = 0; k < kShWidth; ++k) probes.push_back({"gaussian.sh", &cloud.sh_of(i)[k], g.cloud.sh[i * kShWidth + k]});
  }
  for (int a = 0; a < 6; ++a) probes.push_back({"render.twist", &twist[a], g_twist[a]});
  for (int c = 0; c < 3; ++c) probes.push_back({"render.background", &background[c], g.background[c]});

  acc.check(probes, [&] {
    RenderOptions o;
    o.background = background;
    const RenderOutput r = RenderPass(cloud, se3_exp_apply(twist, base), o).forward();
    return photometric_loss(r, target, nullptr, opt.dssim_weight).value;
  }, report);
}

void check_pipeline(Rng& rng, ProbeMode mode, const GradCheckOptions& opt, GradCheckReport& report, Accumulator& acc) {
  const int fh = 2, fw = opt.gaussians / 2;
  const std::size_t n = static_cast<std::size_t>(fh * fw);
  const double base_scale = 0.5;
  const std::string tag = std::string(1, mode_letter(mode));
  ProbeModel model;
  CameraModel base;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 200) throw NumericalError("gradcheck: could not draw a smooth pipeline scene");
    model = ProbeModel{};
    model.mode = mode;
    model.base_scale = base_scale;
    const HeadLayout readout = model.readout_layout();
    model.mlp = mlp_init(opt.channels, readout.width, rng(), opt.hidden);
    model.mlp.w2 *= 0.05;
    for (int j = 0; j < opt.hidden; ++j) model.mlp.b1[j] = uniform(rng, -0.5, 0.5);
    random_raw_row(rng, base_scale, 0.05, model.mlp.b2.data(), readout);
    model.features.resize(static_cast<Eigen::Index>(n), opt.channels);
    for (Eigen::Index i = 0; i < model.features.size(); ++i) model.features.data()[i] = uniform(rng, -1.5, 1.5);
    model.bank.layout = HeadLayout::for_attributes(free_attributes(mode));
    model.bank.raw.resize(static_cast<Eigen::Index>(n), model.bank.layout.width);
    for (std::size_t i = 0; i < n; ++i) {
      random_raw_row(rng, base_scale, 0.3, model.bank.raw.row(static_cast<Eigen::Index>(i)).data(), model.bank.layout);
    }
    model.view_offsets = {0, n};
    Twist tw;
    for (int a = 0; a < 6; ++a) tw[a] = uniform(rng, -0.02, 0.02);
    model.twists = {tw};
    base = check_camera(rng, opt.image_size);

    MlpActivations acts;
    mlp_forward(model.mlp, model.features, &acts);
    const bool relu_margin = (acts.pre.array().abs() > 1e-2).all();
    bool scale_margin = true;
    const RowMatrix raw = mlp_forward(model.mlp, model.features);
    if (readout.scale >= 0) scale_margin = (raw.middleCols(readout.scale, 3).array().abs() < kScaleClamp - 0.5).all();
    if (relu_margin && scale_margin && smooth_scene(decode_cloud(model), training_camera(model, base, 0))) break;
    ++report.redraws;
  }
  const Vec3 background(uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0));
  RenderOptions ropt;
  ropt.background = background;

  const ModelForward fwd = model_forward(model);
  const RenderPass pass(fwd.cloud, training_camera(model, base, 0), ropt);
  const RenderOutput out = pass.forward();
  const Image target = offset_target(out, rng);
  const LossResult loss = photometric_loss(out, target, nullptr, opt.dssim_weight);
  const ModelGradients g = model_backward(model, fwd, pass.backward(loss.adjoint), base, 0, true);

  std::vector<Probe> probes;
  auto add_matrix = [&](const std::string& name, RowMatrix& m, const RowMatrix& gm) {
    for (Eigen::Index i = 0; i < m.size(); ++i) probes.push_back({name, m.data() + i, gm.data()[i]});
  };
  auto add_vector = [&](const std::string& name, Vector& v, const Vector& gv) {
    for (Eigen::Index i = 0; i < v.size(); ++i) probes.push_back({name, v.data() + i, gv[i]});
  };
  add_matrix(tag + ".mlp.w1", model.mlp.w1, g.mlp.w1);
  add_vector(tag + ".mlp.b1", model.mlp.b1, g.mlp.b1);
  add_matrix(tag + ".mlp.w2", model.mlp.w2, g.mlp.w2);
  add_vector(tag + ".mlp.b2", model.mlp.b2, g.mlp.b2);
  if (model.bank.raw.size() > 0) add_matrix(tag + ".bank", model.bank.raw, g.bank);
  add_matrix(tag + ".features", model.features, g.features);
  for (int a = 0; a < 6; ++a) probes.push_back({tag + ".twist", &model.twists[0][a], g.twists[0][a]});

  acc.check(probes, [&] {
    const RenderOutput r = rasterize(decode_cloud(model), training_camera(model, base, 0), background);
    return photometric_loss(r, target, nullptr, opt.dssim_weight).value;
  }, report);
}

}  // namespace

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& g : groups) m = std::max(m, g.max_rel_error);
  return m;
}

bool GradCheckReport::passed() const {
  for (const auto& g : groups) {
    if (g.failures > 0) return false;
  }
  return !groups.empty();
}

GradCheckReport gradcheck_scene(std::uint64_t seed, const GradCheckOptions& options) {
  if (options.gaussians < 2 || options.gaussians % 2 != 0) throw UsageError("gradcheck: gaussian count must be even");
  GradCheckReport report;
  report.seed = seed;
  Rng rng(seed);
  Accumulator acc(options);
  check_renderer(rng, options, report, acc);
  for (ProbeMode mode : {ProbeMode::Geometry, ProbeMode::Texture, ProbeMode::All}) {
    check_pipeline(rng, mode, options, report, acc);
  }
  return report;
}

}  // namespace splatprobe
