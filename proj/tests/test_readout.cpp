#include "test_util.hpp"

#include "splatprobe/model.hpp"
#include "splatprobe/readout.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace splatprobe;

namespace {

MlpParams tiny_net(double w1, double b1, double w2, double b2) {
  MlpParams p;
  p.w1 = RowMatrix::Constant(1, 1, w1);
  p.b1 = Vector::Constant(1, b1);
  p.w2 = RowMatrix::Constant(1, 1, w2);
  p.b2 = Vector::Constant(1, b2);
  return p;
}

InitCloud grid_cloud(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  InitCloud c;
  for (int i = 0; i < n; ++i) {
    c.points.emplace_back(u(rng), u(rng), u(rng));
    c.colors.emplace_back(u(rng), u(rng), u(rng));
  }
  return c;
}

ProbeModel small_model(ProbeMode mode, std::mt19937_64& rng) {
  ProbeModel m;
  m.mode = mode;
  m.base_scale = 0.05;
  const int n = 12, c = 4;
  m.features = testutil::random_matrix(n, c, rng);
  m.mlp = mlp_init(c, HeadLayout::for_attributes(readout_attributes(mode)).width, 5, 16);
  m.bank = free_bank_init(grid_cloud(n, rng), mode, m.base_scale);
  m.view_offsets = {0, static_cast<std::size_t>(n)};
  m.twists = {Twist::Zero()};
  return m;
}

}  // namespace

TEST(HeadLayoutTest, ModeWidths) {
  EXPECT_EQ(HeadLayout::for_attributes(readout_attributes(ProbeMode::Geometry)).width, 11);
  EXPECT_EQ(HeadLayout::for_attributes(readout_attributes(ProbeMode::Texture)).width, 48);
  EXPECT_EQ(HeadLayout::for_attributes(readout_attributes(ProbeMode::All)).width, 59);
  EXPECT_EQ(free_attributes(ProbeMode::All), 0);
  EXPECT_EQ(free_attributes(ProbeMode::Geometry), kSh);
  EXPECT_EQ(free_attributes(ProbeMode::Texture), kGeometryAttributes);
}

TEST(HeadLayoutTest, BlocksDisjointAndCovering) {
  const HeadLayout l = HeadLayout::for_attributes(kAllAttributes);
  std::vector<int> hits(l.width, 0);
  for (Attribute a : {kPosition, kOpacity, kScale, kRotation, kSh}) {
    const auto [off, size] = l.block(a);
    for (int i = off; i < off + size; ++i) ++hits[i];
  }
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(ProbeModeTest, Parse) {
  EXPECT_EQ(parse_probe_mode("G"), ProbeMode::Geometry);
  EXPECT_EQ(parse_probe_mode("T"), ProbeMode::Texture);
  EXPECT_EQ(parse_probe_mode("A"), ProbeMode::All);
  EXPECT_THROW(parse_probe_mode("X"), UsageError);
}

TEST(MlpInit, Deterministic) {
  const MlpParams a = mlp_init(6, 11, 42), b = mlp_init(6, 11, 42);
  EXPECT_EQ(a.w1, b.w1);
  EXPECT_EQ(a.w2, b.w2);
  EXPECT_NE(mlp_init(6, 11, 43).w1, a.w1);
}

TEST(MlpInit, ZeroBiasesAndKaimingBound) {
  const MlpParams p = mlp_init(6, 59, 1);
  EXPECT_EQ(p.hidden(), 256);
  EXPECT_TRUE((p.b1.array() == 0.0).all());
  EXPECT_TRUE((p.b2.array() == 0.0).all());
  EXPECT_LE(p.w1.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 6));
  EXPECT_LE(p.w2.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 256));
  EXPECT_GT(p.w2.cwiseAbs().maxCoeff(), 0.5 * std::sqrt(6.0 / 256));
}

TEST(MlpForward, ZeroWeightsGiveBias) {
  MlpParams p = mlp_init(3, 4, 0, 8);
  p.w1.setZero();
  p.w2.setZero();
  p.b2 << 1, 2, 3, 4;
  std::mt19937_64 rng(1);
  const RowMatrix out = mlp_forward(p, testutil::random_map(2, 3, 3, rng));
  ASSERT_EQ(out.rows(), 6);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_EQ(out(r, c), c + 1.0);
}

TEST(MlpForward, ReluGate) {
  const MlpParams p = tiny_net(1, -1, 2, 0);
  RowMatrix x(2, 1);
  x << 0.5, 2.0;
  const RowMatrix out = mlp_forward(p, x);
  EXPECT_EQ(out(0, 0), 0.0);
  EXPECT_EQ(out(1, 0), 2.0);
}

TEST(MlpForward, ShapeMismatchThrows) {
  EXPECT_THROW(mlp_forward(mlp_init(3, 4, 0, 8), FeatureMap(0, 2, 2, 5)), DataError);
}

TEST(MlpForward, ThreadCountDoesNotChangeOutput) {
  std::mt19937_64 rng(3);
  const MlpParams p = mlp_init(5, 7, 9, 32);
  const RowMatrix x = testutil::random_matrix(1000, 5, rng);
  EXPECT_EQ(mlp_forward(p, x, nullptr, 1), mlp_forward(p, x, nullptr, 4));
}

TEST(MlpBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  MlpParams p = mlp_init(3, 4, 2, 6);
  p.b1 = testutil::random_matrix(6, 1, rng).col(0) * 0.3;
  p.b2 = testutil::random_matrix(4, 1, rng).col(0);
  const RowMatrix x = testutil::random_matrix(9, 3, rng);
  const RowMatrix gout = testutil::random_matrix(9, 4, rng);
  auto loss = [&](const MlpParams& q, const RowMatrix& in) { return (mlp_forward(q, in).array() * gout.array()).sum(); };
  const MlpGradients g = mlp_backward(p, x, gout, true);
  const double h = 1e-4;
  double worst = 0.0;
  auto check = [&](double analytic, double numeric) {
    if (std::abs(analytic) <= 1e-6) return;
    worst = std::max(worst, std::abs(analytic - numeric) / std::max(std::abs(analytic), std::abs(numeric)));
  };
  for (int i = 0; i < p.w1.size(); ++i) {
    MlpParams a = p, b = p;
    a.w1.data()[i] += h;
    b.w1.data()[i] -= h;
    check(g.w1.data()[i], (loss(a, x) - loss(b, x)) / (2 * h));
  }
  for (int i = 0; i < p.b1.size(); ++i) {
    MlpParams a = p, b = p;
    a.b1[i] += h;
    b.b1[i] -= h;
    check(g.b1[i], (loss(a, x) - loss(b, x)) / (2 * h));
  }
  for (int i = 0; i < p.w2.size(); ++i) {
    MlpParams a = p, b = p;
    a.w2.data()[i] += h;
    b.w2.data()[i] -= h;
    check(g.w2.data()[i], (loss(a, x) - loss(b, x)) / (2 * h));
  }
  for (int i = 0; i < p.b2.size(); ++i) {
    MlpParams a = p, b = p;
    a.b2[i] += h;
    b.b2[i] -= h;
    check(g.b2[i], (loss(a, x) - loss(b, x)) / (2 * h));
  }
  for (int i = 0; i < x.size(); ++i) {
    RowMatrix a = x, b = x;
    a.data()[i] += h;
    b.data()[i] -= h;
    check(g.inputs.data()[i], (loss(p, a) - loss(p, b)) / (2 * h));
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(MlpParamsTest, ParameterCountIndependentOfPixels) {
  const MlpParams p = mlp_init(16, 59, 0);
  EXPECT_EQ(p.parameter_count(), 256u * 16 + 256 + 59u * 256 + 59);
}

TEST(Heads, DecodeZeroRaw) {
  const HeadLayout l = HeadLayout::for_attributes(kAllAttributes);
  const GaussianCloud c = heads_decode(RowMatrix::Zero(2, l.width), l, 0.25);
  EXPECT_EQ(c.opacities[0], 0.5);
  EXPECT_EQ(c.rotations[1], Vec4(1, 0, 0, 0));
  EXPECT_EQ(c.scales[0], Vec3::Constant(0.25));
  EXPECT_EQ(c.positions[0], Vec3::Zero());
}

TEST(Heads, DecodedRangesUnderExtremeRaw) {
  std::mt19937_64 rng(4);
  const HeadLayout l = HeadLayout::for_attributes(kAllAttributes);
  RowMatrix raw = testutil::random_matrix(50, l.width, rng, -30.0, 30.0);
  const GaussianCloud c = heads_decode(raw, l, 0.1);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_GT(c.opacities[i], 0.0);
    EXPECT_LT(c.opacities[i], 1.0);
    EXPECT_GT(c.scales[i].minCoeff(), 0.0);
    EXPECT_LE(c.scales[i].maxCoeff(), 0.1 * std::exp(8.0) * (1 + 1e-15));
    EXPECT_NEAR(c.rotations[i].norm(), 1.0, 1e-9);
  }
}

TEST(Assemble, AllModeHasEmptyBank) {
  std::mt19937_64 rng(5);
  const ProbeModel m = small_model(ProbeMode::All, rng);
  EXPECT_EQ(m.bank.layout.width, 0);
  EXPECT_EQ(m.bank.raw.cols(), 0);
  m.validate();
  const ModelForward f = model_forward(m);
  const GaussianCloud direct = heads_decode(f.raw, m.readout_layout(), m.base_scale);
  EXPECT_EQ(f.cloud.positions, direct.positions);
  EXPECT_EQ(f.cloud.sh, direct.sh);
}

TEST(Assemble, GeometryModeFeaturesDriveGeometryOnly) {
  std::mt19937_64 rng(6);
  ProbeModel m = small_model(ProbeMode::Geometry, rng);
  const GaussianCloud before = decode_cloud(m);
  m.features.array() += 0.5;
  const GaussianCloud after = decode_cloud(m);
  EXPECT_NE(before.positions, after.positions);
  EXPECT_EQ(before.sh, after.sh);
}

TEST(Assemble, TextureModeFeaturesDriveShOnly) {
  std::mt19937_64 rng(7);
  ProbeModel m = small_model(ProbeMode::Texture, rng);
  const GaussianCloud before = decode_cloud(m);
  m.features.array() += 0.5;
  const GaussianCloud after = decode_cloud(m);
  EXPECT_NE(before.sh, after.sh);
  EXPECT_EQ(before.positions, after.positions);
  EXPECT_EQ(before.opacities, after.opacities);
  EXPECT_EQ(before.scales, after.scales);
  EXPECT_EQ(before.rotations, after.rotations);
}

TEST(Assemble, OverlappingSourcesRejected) {
  const HeadLayout all = HeadLayout::for_attributes(kAllAttributes);
  const HeadLayout geo = HeadLayout::for_attributes(kGeometryAttributes);
  const HeadLayout sh = HeadLayout::for_attributes(kSh);
  const GaussianCloud a = heads_decode(RowMatrix::Zero(1, all.width), all, 1.0);
  const GaussianCloud g = heads_decode(RowMatrix::Zero(1, geo.width), geo, 1.0);
  EXPECT_THROW(assemble_cloud(ProbeMode::All, a, all, g, geo), ConfigError);
  EXPECT_THROW(assemble_cloud(ProbeMode::Geometry, g, geo, g, geo), ConfigError);
  const GaussianCloud s = heads_decode(RowMatrix::Zero(1, sh.width), sh, 1.0);
  EXPECT_NO_THROW(assemble_cloud(ProbeMode::Geometry, g, geo, s, sh));
  EXPECT_THROW(assemble_cloud(ProbeMode::Texture, g, geo, s, sh), ConfigError);
}

TEST(FreeBankTest, InitialValues) {
  InitCloud init;
  for (int i = 0; i < 5; ++i) {
    init.points.emplace_back(i, 0.5 * i, 0);
    init.colors.emplace_back(0.5, 0.5, 0.5);
  }
  const FreeBank bank = free_bank_init(init, ProbeMode::Texture, 0.1);
  EXPECT_EQ(bank.layout.attributes, kGeometryAttributes);
  const GaussianCloud c = heads_decode(bank.raw, bank.layout, 0.1);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(c.opacities[i], 0.1, 1e-9);
    EXPECT_EQ(c.rotations[i], Vec4(1, 0, 0, 0));
    EXPECT_EQ(c.positions[i], init.points[i]);
  }
  // mean distance to the 3 nearest neighbours of point 0: d, 2d, 3d with d = |(1, 0.5, 0)|
  const double d = std::sqrt(1.25);
  EXPECT_NEAR(c.scales[0][0], 2.0 * d, 1e-12);

  const FreeBank tex = free_bank_init(init, ProbeMode::Geometry, 0.1);
  EXPECT_EQ(tex.layout.attributes, kSh);
  for (int k = 0; k < kShWidth; ++k) EXPECT_EQ(tex.raw(2, k), 0.0);
}

TEST(FreeBankTest, ShDcFromColour) {
  InitCloud init;
  init.points = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  init.colors = {Vec3(1, 0, 0.5), Vec3(0.5, 0.5, 0.5)};
  const FreeBank bank = free_bank_init(init, ProbeMode::Geometry, 1.0);
  EXPECT_NEAR(bank.raw(0, 0), 0.5 / 0.28209479177387814, 1e-12);
  EXPECT_NEAR(bank.raw(0, 1), -0.5 / 0.28209479177387814, 1e-12);
  EXPECT_EQ(bank.raw(0, 2), 0.0);
  EXPECT_THROW(free_bank_init(InitCloud{}, ProbeMode::All, 1.0), DataError);
}
