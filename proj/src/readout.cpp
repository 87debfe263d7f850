#include "splatprobe/readout.hpp"

#include "splatprobe/render.hpp"
#include "splatprobe/spatial.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

namespace splatprobe {

namespace {

constexpr Eigen::Index kRowBlock = 256;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

ProbeMode parse_probe_mode(const std::string& text) {
  std::string t;
  for (char c : text) t += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (t == "g" || t == "geometry") return ProbeMode::Geometry;
  if (t == "t" || t == "texture") return ProbeMode::Texture;
  if (t == "a" || t == "all") return ProbeMode::All;
  throw UsageError("unknown probe mode '" + text + "' (expected G, T or A)");
}

std::string to_string(ProbeMode mode) {
  switch (mode) {
    case ProbeMode::Geometry: return "Geometry";
    case ProbeMode::Texture: return "Texture";
    case ProbeMode::All: return "All";
  }
  return "All";
}

char mode_letter(ProbeMode mode) { return to_string(mode).front(); }

AttributeSet readout_attributes(ProbeMode mode) {
  switch (mode) {
    case ProbeMode::Geometry: return kGeometryAttributes;
    case ProbeMode::Texture: return kSh;
    case ProbeMode::All: return kAllAttributes;
  }
  return kAllAttributes;
}

HeadLayout HeadLayout::for_attributes(AttributeSet set) {
  HeadLayout l;
  l.attributes = set;
  int offset = 0;
  if (set & kPosition) { l.position = offset; offset += 3; }
  if (set & kOpacity) { l.opacity = offset; offset += 1; }
  if (set & kScale) { l.scale = offset; offset += 3; }
  if (set & kRotation) { l.rotation = offset; offset += 4; }
  if (set & kSh) { l.sh = offset; offset += kShWidth; }
  l.width = offset;
  return l;
}

std::pair<int, int> HeadLayout::block(Attribute a) const {
  switch (a) {
    case kPosition: return {position, position < 0 ? 0 : 3};
    case kOpacity: return {opacity, opacity < 0 ? 0 : 1};
    case kScale: return {scale, scale < 0 ? 0 : 3};
    case kRotation: return {rotation, rotation < 0 ? 0 : 4};
    case kSh: return {sh, sh < 0 ? 0 : kShWidth};
  }
  return {-1, 0};
}

void MlpParams::validate() const {
  if (w1.rows() != b1.size() || w2.cols() != w1.rows() || w2.rows() != b2.size()) {
    throw DataError("MLP parameter shapes are inconsistent");
  }
  if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() || !b2.allFinite()) {
    throw NumericalError("MLP parameters are not finite");
  }
}

MlpParams mlp_init(int in_dim, int out_dim, std::uint64_t seed, int hidden) {
  if (in_dim < 1 || out_dim < 1 || hidden < 1) throw DataError("mlp_init: dimensions must be positive");
  std::mt19937_64 rng(seed);
  MlpParams p;
  p.w1.resize(hidden, in_dim);
  p.b1 = Vector::Zero(hidden);
  p.w2.resize(out_dim, hidden);
  p.b2 = Vector::Zero(out_dim);
  const double bound1 = std::sqrt(6.0 / in_dim);
  std::uniform_real_distribution<double> u1(-bound1, bound1);
  for (Eigen::Index i = 0; i < p.w1.size(); ++i) p.w1.data()[i] = u1(rng);
  const double bound2 = std::sqrt(6.0 / hidden);
  std::uniform_real_distribution<double> u2(-bound2, bound2);
  for (Eigen::Index i = 0; i < p.w2.size(); ++i) p.w2.data()[i] = u2(rng);
  return p;
}

RowMatrix mlp_forward(const MlpParams& params, const RowMatrix& inputs, MlpActivations* keep, int threads) {
  if (inputs.cols() != params.in_dim()) {
    throw DataError("mlp_forward: input width " + std::to_string(inputs.cols()) + " does not match " +
                    std::to_string(params.in_dim()));
  }
  const Eigen::Index n = inputs.rows();
  RowMatrix out(n, params.out_dim());
  if (keep) keep->pre.resize(n, params.hidden());
  const std::size_t blocks = static_cast<std::size_t>((n + kRowBlock - 1) / kRowBlock);
  parallel_for(blocks, threads, [&](std::size_t begin, std::size_t end) {
    RowMatrix pre;
    for (std::size_t b = begin; b < end; ++b) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(b) * kRowBlock;
      const Eigen::Index rows = std::min(kRowBlock, n - r0);
      pre.noalias() = inputs.middleRows(r0, rows) * params.w1.transpose();
      pre.rowwise() += params.b1.transpose();
      if (keep) keep->pre.middleRows(r0, rows) = pre;
      pre = pre.cwiseMax(0.0);
      out.middleRows(r0, rows).noalias() = pre * params.w2.transpose();
      out.middleRows(r0, rows).rowwise() += params.b2.transpose();
    }
  });
  return out;
}

RowMatrix mlp_forward(const MlpParams& params, const FeatureMap& features, int threads) {
  const Eigen::Index n = static_cast<Eigen::Index>(features.pixel_count());
  const RowMatrix inputs = Eigen::Map<const RowMatrix>(features.data.data(), n, features.channels);
  return mlp_forward(params, inputs, nullptr, threads);
}

MlpGradients mlp_backward(const MlpParams& params, const RowMatrix& inputs, const RowMatrix& grad_out,
                          bool want_input_grad, int threads) {
  const Eigen::Index n = inputs.rows();
  if (grad_out.rows() != n || grad_out.cols() != params.out_dim() || inputs.cols() != params.in_dim()) {
    throw DataError("mlp_backward: shape mismatch");
  }
  const std::size_t blocks = static_cast<std::size_t>((n + kRowBlock - 1) / kRowBlock);
  std::vector<MlpGradients> partial(blocks);
  MlpGradients total;
  if (want_input_grad) total.inputs = RowMatrix::Zero(n, params.in_dim());

  parallel_for(blocks, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<Eigen::Index> rows;
    for (std::size_t b = begin; b < end; ++b) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(b) * kRowBlock;
      const Eigen::Index count = std::min(kRowBlock, n - r0);
      rows.clear();
      for (Eigen::Index r = r0; r < r0 + count; ++r) {
        if (!grad_out.row(r).isZero(0.0)) rows.push_back(r);
      }
      MlpGradients& g = partial[b];
      if (rows.empty()) continue;
      const auto m = static_cast<Eigen::Index>(rows.size());
      RowMatrix go(m, params.out_dim()), x(m, params.in_dim());
      for (Eigen::Index i = 0; i < m; ++i) {
        go.row(i) = grad_out.row(rows[i]);
        x.row(i) = inputs.row(rows[i]);
      }
      RowMatrix pre = x * params.w1.transpose();
      pre.rowwise() += params.b1.transpose();
      const RowMatrix h = pre.cwiseMax(0.0);
      g.w2.noalias() = go.transpose() * h;
      g.b2 = go.colwise().sum().transpose();
      RowMatrix gh = go * params.w2;
      for (Eigen::Index k = 0; k < gh.size(); ++k) gh.data()[k] = pre.data()[k] > 0.0 ? gh.data()[k] : 0.0;
      g.w1.noalias() = gh.transpose() * x;
      g.b1 = gh.colwise().sum().transpose();
      if (want_input_grad) {
        const RowMatrix gx = gh * params.w1;
        for (Eigen::Index i = 0; i < m; ++i) total.inputs.row(rows[i]) = gx.row(i);
      }
    }
  });

  total.w1 = RowMatrix::Zero(params.hidden(), params.in_dim());
  total.b1 = Vector::Zero(params.hidden());
  total.w2 = RowMatrix::Zero(params.out_dim(), params.hidden());
  total.b2 = Vector::Zero(params.out_dim());
  for (const auto& g : partial) {
    if (g.w1.size() == 0) continue;
    total.w1 += g.w1;
    total.b1 += g.b1;
    total.w2 += g.w2;
    total.b2 += g.b2;
  }
  return total;
}

GaussianCloud heads_decode(const RowMatrix& raw, const HeadLayout& layout, double base_scale) {
  if (raw.cols() != layout.width) throw DataError("heads_decode: raw width does not match the head layout");
  const std::size_t n = static_cast<std::size_t>(raw.rows());
  GaussianCloud out;
  if (layout.has(kPosition)) out.positions.resize(n);
  if (layout.has(kOpacity)) out.opacities.resize(n);
  if (layout.has(kScale)) out.scales.resize(n);
  if (layout.has(kRotation)) out.rotations.resize(n);
  if (layout.has(kSh)) out.sh.resize(n * kShWidth);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = raw.row(static_cast<Eigen::Index>(i));
    if (layout.position >= 0) out.positions[i] = Vec3(row[layout.position], row[layout.position + 1], row[layout.position + 2]);
    if (layout.opacity >= 0) out.opacities[i] = sigmoid(row[layout.opacity]);
    if (layout.scale >= 0) {
      for (int a = 0; a < 3; ++a) {
        out.scales[i][a] = base_scale * std::exp(std::clamp(row[layout.scale + a], -kScaleClamp, kScaleClamp));
      }
    }
    if (layout.rotation >= 0) {
      Vec4 q(row[layout.rotation] + 1.0, row[layout.rotation + 1], row[layout.rotation + 2], row[layout.rotation + 3]);
      const double len = q.norm();
      out.rotations[i] = len > 1e-12 ? Vec4(q / len) : Vec4(1, 0, 0, 0);
    }
    if (layout.sh >= 0) {
      for (int k = 0; k < kShWidth; ++k) out.sh[i * kShWidth + k] = row[layout.sh + k];
    }
  }
  return out;
}

RowMatrix heads_backward(const RowMatrix& raw, const HeadLayout& layout, double base_scale,
                         const CloudGradients& grads) {
  const Eigen::Index n = raw.rows();
  RowMatrix out = RowMatrix::Zero(n, layout.width);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t gi = static_cast<std::size_t>(i);
    const auto row = raw.row(i);
    if (layout.position >= 0) {
      for (int a = 0; a < 3; ++a) out(i, layout.position + a) = grads.positions[gi][a];
    }
    if (layout.opacity >= 0) {
      const double s = sigmoid(row[layout.opacity]);
      out(i, layout.opacity) = grads.opacities[gi] * s * (1.0 - s);
    }
    if (layout.scale >= 0) {
      for (int a = 0; a < 3; ++a) {
        const double r = row[layout.scale + a];
        if (r > -kScaleClamp && r < kScaleClamp) out(i, layout.scale + a) = grads.scales[gi][a] * base_scale * std::exp(r);
      }
    }
    if (layout.rotation >= 0) {
      Vec4 q(row[layout.rotation] + 1.0, row[layout.rotation + 1], row[layout.rotation + 2], row[layout.rotation + 3]);
      const double len = q.norm();
      if (len > 1e-12) {
        const Vec4 qh = q / len;
        const Vec4& g = grads.rotations[gi];
        const Vec4 gq = (g - qh * qh.dot(g)) / len;
        for (int a = 0; a < 4; ++a) out(i, layout.rotation + a) = gq[a];
      }
    }
    if (layout.sh >= 0) {
      for (int k = 0; k < kShWidth; ++k) out(i, layout.sh + k) = grads.sh[gi * kShWidth + k];
    }
  }
  return out;
}

RowMatrix init_targets(const InitCloud& init, const HeadLayout& layout, double base_scale,
                       std::span<const double> knn_distance) {
  const std::size_t n = init.points.size();
  if (init.colors.size() != n) throw DataError("init cloud has mismatched point and colour counts");
  if (layout.has(kScale) && knn_distance.size() != n) throw DataError("init_targets: missing neighbour distances");
  RowMatrix t = RowMatrix::Zero(static_cast<Eigen::Index>(n), layout.width);
  const double opacity_logit = std::log(kInitOpacity / (1.0 - kInitOpacity));
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    if (layout.position >= 0) {
      for (int a = 0; a < 3; ++a) t(r, layout.position + a) = init.points[i][a];
    }
    if (layout.opacity >= 0) t(r, layout.opacity) = opacity_logit;
    if (layout.scale >= 0) {
      const double s = std::log(std::max(knn_distance[i], 1e-12) / base_scale);
      const double clamped = std::clamp(s, -kScaleClamp + 1e-6, kScaleClamp - 1e-6);
      for (int a = 0; a < 3; ++a) t(r, layout.scale + a) = clamped;
    }
    if (layout.sh >= 0) {
      for (int c = 0; c < 3; ++c) t(r, layout.sh + c) = (init.colors[i][c] - 0.5) / kShC0;
    }
  }
  return t;
}

FreeBank free_bank_init(const InitCloud& init, ProbeMode mode, double base_scale, int threads) {
  if (init.points.empty()) throw DataError("free_bank_init: empty initialization cloud");
  FreeBank bank;
  bank.layout = HeadLayout::for_attributes(free_attributes(mode));
  std::vector<double> knn;
  if (bank.layout.has(kScale)) knn = mean_knn_distance(init.points, 3, threads);
  bank.raw = init_targets(init, bank.layout, base_scale, knn);
  return bank;
}

GaussianCloud assemble_cloud(ProbeMode mode, const GaussianCloud& readout, const HeadLayout& readout_layout,
                             const GaussianCloud& bank, const HeadLayout& bank_layout) {
  if ((readout_layout.attributes & bank_layout.attributes) != 0) {
    throw ConfigError("assemble_cloud: read-out and free attribute sets overlap");
  }
  if ((readout_layout.attributes | bank_layout.attributes) != kAllAttributes) {
    throw ConfigError("assemble_cloud: some Gaussian attributes have no source");
  }
  if (readout_layout.attributes != readout_attributes(mode)) {
    throw ConfigError("assemble_cloud: read-out layout does not match mode " + to_string(mode));
  }
  auto pick = [&](Attribute a) -> const GaussianCloud& { return readout_layout.has(a) ? readout : bank; };
  GaussianCloud out;
  out.positions = pick(kPosition).positions;
  out.opacities = pick(kOpacity).opacities;
  out.scales = pick(kScale).scales;
  out.rotations = pick(kRotation).rotations;
  out.sh = pick(kSh).sh;
  const std::size_t n = out.positions.size();
  if (out.opacities.size() != n || out.scales.size() != n || out.rotations.size() != n ||
      out.sh.size() != n * kShWidth) {
    throw ConfigError("assemble_cloud: read-out and free banks disagree on the Gaussian count");
  }
  return out;
}

CloudGradients restrict_gradients(const CloudGradients& grads, const HeadLayout& layout) {
  CloudGradients out(grads.size());
  if (layout.has(kPosition)) out.positions = grads.positions;
  if (layout.has(kOpacity)) out.opacities = grads.opacities;
  if (layout.has(kScale)) out.scales = grads.scales;
  if (layout.has(kRotation)) out.rotations = grads.rotations;
  if (layout.has(kSh)) out.sh = grads.sh;
  return out;
}

}  // namespace splatprobe
