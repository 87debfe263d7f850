#include "fixtures.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include "splatprobe/evaluate.hpp"
#include "splatprobe/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace splatprobe;

namespace {

Image constant_image(int h, int w, double v) {
  Image img(h, w);
  std::fill(img.rgb.begin(), img.rgb.end(), v);
  return img;
}

CameraModel camera(int size, double f) {
  CameraModel cam;
  cam.fx = cam.fy = f;
  cam.cx = cam.cy = size / 2.0;
  cam.width = cam.height = size;
  return cam;
}

std::vector<int> column_ranks(const std::vector<std::pair<std::string, double>>& col, MetricDirection dir) {
  std::vector<std::vector<double>> table;
  for (const auto& [name, v] : col) table.push_back({v});
  const auto ranks = rank_cells(table, std::vector<MetricDirection>{dir});
  std::vector<int> out;
  for (const auto& r : ranks) out.push_back(r[0]);
  return out;
}

}  // namespace

TEST(Psnr, CapAndFormula) {
  std::mt19937_64 rng(1);
  const Image a = testutil::random_image(10, 10, rng);
  EXPECT_EQ(psnr(a, a), 99.0);
  // 12 of 300 values differ by 0.5: MSE = 3 / 300 = 0.01
  Image b = constant_image(10, 10, 0.25), c = b;
  for (int i = 0; i < 12; ++i) c.rgb[i * 25] = 0.75;
  EXPECT_EQ(psnr(c, b), 20.0);
  EXPECT_EQ(psnr(constant_image(4, 4, 1.0), constant_image(4, 4, 0.0)), 0.0);
}

TEST(Psnr, SymmetricShiftInvariantAndMasked) {
  std::mt19937_64 rng(2);
  Image a = testutil::random_image(8, 8, rng), b = testutil::random_image(8, 8, rng);
  for (auto& v : a.rgb) v *= 0.5;
  for (auto& v : b.rgb) v *= 0.5;
  EXPECT_DOUBLE_EQ(psnr(a, b), psnr(b, a));
  Image a2 = a, b2 = b;
  for (auto& v : a2.rgb) v += 0.25;
  for (auto& v : b2.rgb) v += 0.25;
  EXPECT_NEAR(psnr(a2, b2), psnr(a, b), 1e-12);
  Mask m(8, 8, false);
  EXPECT_THROW(psnr(a, b, &m), DataError);
  m.valid[3] = 1;
  Image c = a;
  c.rgb[50 * 3] += 0.3;  // outside the mask
  EXPECT_EQ(psnr(c, a, &m), 99.0);
}

TEST(Ssim, IdenticalConstantsAndDenseOracle) {
  std::mt19937_64 rng(3);
  const Image a = testutil::random_image(16, 16, rng);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
  const double c1 = 1e-4;
  EXPECT_NEAR(ssim(constant_image(12, 12, 0.0), constant_image(12, 12, 1.0)), c1 / (1.0 + c1), 1e-12);
  for (int trial = 0; trial < 3; ++trial) {
    const Image x = testutil::random_image(32, 32, rng), y = testutil::random_image(32, 32, rng);
    EXPECT_NEAR(ssim(x, y), oracle::dense_ssim(x, y), 1e-8);
    EXPECT_DOUBLE_EQ(ssim(x, y), ssim(y, x));
    Mask m(32, 32, true);
    for (int i = 0; i < 300; ++i) m.valid[(i * 7) % 1024] = 0;
    EXPECT_NEAR(ssim(x, y, &m), oracle::dense_ssim(x, y, &m), 1e-8);
  }
}

TEST(Ssim, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  const Image x = testutil::random_image(9, 7, rng), y = testutil::random_image(9, 7, rng);
  std::vector<double> grad;
  ssim_with_gradient(x, y, nullptr, &grad);
  for (std::size_t i = 0; i < x.rgb.size(); i += 5) {
    Image a = x, b = x;
    a.rgb[i] += 1e-6;
    b.rgb[i] -= 1e-6;
    EXPECT_NEAR(grad[i], (ssim(a, y) - ssim(b, y)) / 2e-6, 1e-7);
  }
}

TEST(Mask, CoveredPlaneIsAllValid) {
  const CameraModel cam = camera(16, 14.0);
  RenderOutput r;
  r.width = r.height = 16;
  r.alpha_accum.assign(256, 1.0);
  r.expected_depth.assign(256, 2.0);
  const std::vector<std::vector<double>> ref = {std::vector<double>(256, 2.0)};
  const Mask m = build_valid_mask({cam}, ref, cam, r);
  EXPECT_EQ(m.count(), 256u);
  EXPECT_DOUBLE_EQ(m.coverage(), 1.0);
  // depth disagreement beyond 5 % invalidates
  const std::vector<std::vector<double>> far = {std::vector<double>(256, 2.2)};
  EXPECT_EQ(build_valid_mask({cam}, far, cam, r).count(), 0u);
  // no reference depth: frustum test only
  EXPECT_EQ(build_valid_mask({cam}, {}, cam, r).count(), 256u);
}

TEST(Mask, EmptyRenderAndOutsideFrustum) {
  const CameraModel cam = camera(8, 8.0);
  RenderOutput empty;
  empty.width = empty.height = 8;
  empty.alpha_accum.assign(64, 0.0);
  empty.expected_depth.assign(64, 0.0);
  const Mask m = build_valid_mask({cam}, {}, cam, empty);
  EXPECT_EQ(m.count(), 0u);
  const Image img(8, 8);
  EXPECT_THROW(psnr(img, img, &m), DataError);
  EXPECT_THROW(ssim(img, img, &m), DataError);

  RenderOutput full;
  full.width = full.height = 8;
  full.alpha_accum.assign(64, 1.0);
  full.expected_depth.assign(64, 3.0);
  CameraModel away = cam;
  away.rotation = Vec4(0, 0, 1, 0);  // 180 degrees about y: looks backwards
  EXPECT_EQ(build_valid_mask({away}, {}, cam, full).count(), 0u);
}

TEST(CloudMetricsTest, IdenticalAndOffset) {
  std::mt19937_64 rng(5);
  std::vector<Vec3> pts;
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 50; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  std::vector<std::int64_t> match(50);
  for (int i = 0; i < 50; ++i) match[i] = i;
  const CloudMetrics same = cloud_metrics(pts, pts, match);
  EXPECT_EQ(same.accuracy, 0.0);
  EXPECT_EQ(same.completeness, 0.0);
  EXPECT_EQ(*same.distance, 0.0);
  const std::vector<Vec3> a = {Vec3(1, 2, 3)}, b = {Vec3(1, 2, 3.25)};
  const std::vector<std::int64_t> m0 = {0};
  const CloudMetrics off = cloud_metrics(a, b, m0);
  EXPECT_DOUBLE_EQ(off.accuracy, 0.25);
  EXPECT_DOUBLE_EQ(off.completeness, 0.25);
  EXPECT_DOUBLE_EQ(*off.distance, 0.25);
  const std::vector<std::int64_t> bad = {3};
  EXPECT_THROW(cloud_metrics(a, b, bad), DataError);
}

TEST(CloudMetricsTest, MatchesBruteForceAndPermutation) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> r, g;
  for (int i = 0; i < 200; ++i) r.emplace_back(u(rng), u(rng), u(rng));
  for (int i = 0; i < 150; ++i) g.emplace_back(u(rng), u(rng), 0.5 * u(rng));
  auto brute = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    double s = 0.0;
    for (const auto& p : from) {
      double best = 1e300;
      for (const auto& q : to) best = std::min(best, (p - q).norm());
      s += best;
    }
    return s / from.size();
  };
  const CloudMetrics m = cloud_metrics(r, g, {}, 3);
  EXPECT_NEAR(m.accuracy, brute(r, g), 1e-12);
  EXPECT_NEAR(m.completeness, brute(g, r), 1e-12);
  EXPECT_FALSE(m.distance.has_value());
  std::vector<Vec3> rs = r;
  std::shuffle(rs.begin(), rs.end(), rng);
  const CloudMetrics p = cloud_metrics(rs, g);
  EXPECT_NEAR(p.accuracy, m.accuracy, 1e-12);
  EXPECT_NEAR(p.completeness, m.completeness, 1e-12);
  // matched distance depends on the pairing
  std::vector<std::int64_t> id(150), rev(150);
  for (int i = 0; i < 150; ++i) id[i] = i, rev[i] = 149 - i;
  const std::vector<Vec3> r150(r.begin(), r.begin() + 150);
  EXPECT_NE(*cloud_metrics(r150, g, id).distance, *cloud_metrics(r150, g, rev).distance);
}

TEST(Pearson, SelfAndNegation) {
  const std::vector<LabeledVector> v = {{"a", {1, 2, 4, 8}}, {"b", {-1, -2, -4, -8}}, {"c", {1, 2, 4, 8}}};
  const CorrMatrix c = pearson_matrix(v);
  EXPECT_DOUBLE_EQ(c.values(0, 0), 1.0);
  EXPECT_NEAR(c.values(0, 1), -1.0, 1e-15);
  EXPECT_NEAR(c.values(0, 2), 1.0, 1e-15);
  EXPECT_EQ(c.labels, (std::vector<std::string>{"a", "b", "c"}));
}

TEST(Pearson, BruteForceAndAffineInvariance) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3, 3);
  std::vector<LabeledVector> v(4);
  for (int k = 0; k < 4; ++k) {
    v[k].label = "m" + std::to_string(k);
    for (int i = 0; i < 10; ++i) v[k].values.push_back(u(rng));
  }
  const CorrMatrix c = pearson_matrix(v);
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      EXPECT_NEAR(c.values(a, b), oracle::pearson(v[a].values, v[b].values), 1e-12);
      EXPECT_EQ(c.values(a, b), c.values(b, a));
    }
  }
  std::vector<LabeledVector> w = v;
  for (auto& x : w[2].values) x = 7.5 * x - 2.0;
  const CorrMatrix d = pearson_matrix(w);
  EXPECT_LE((c.values - d.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Pearson, ZeroVarianceAndErrors) {
  const std::vector<LabeledVector> v = {{"flat", {2, 2, 2}}, {"x", {1, 2, 3}}};
  const CorrMatrix c = pearson_matrix(v);
  EXPECT_EQ(c.values(0, 1), 0.0);
  EXPECT_EQ(c.values(0, 0), 1.0);
  EXPECT_EQ(c.zero_variance, std::vector<std::string>{"flat"});
  EXPECT_THROW(pearson_matrix(std::vector<LabeledVector>{{"a", {1, 2}}, {"b", {1, 2, 3}}}), DataError);
  EXPECT_THROW(pearson_matrix(std::vector<LabeledVector>{{"a", {1}}}), DataError);
}

TEST(RankCells, LlffGeometryColumnOrder) {
  const auto ranks = column_ranks(fixtures::kLlffGeometryPsnr, metric_direction("psnr"));
  EXPECT_EQ(ranks, fixtures::kLlffGeometryRanks);
  // MASt3R above DUSt3R
  EXPECT_LT(ranks[1], ranks[0]);
}

TEST(RankCells, DtuAccuracyBestAndWorst) {
  const auto ranks = column_ranks(fixtures::kDtuAccuracy, metric_direction("accuracy"));
  const auto best = std::min_element(ranks.begin(), ranks.end()) - ranks.begin();
  const auto worst = std::max_element(ranks.begin(), ranks.end()) - ranks.begin();
  EXPECT_EQ(fixtures::kDtuAccuracy[best].first, "RADIO");
  EXPECT_EQ(fixtures::kDtuAccuracy[worst].first, "SD");
}

TEST(RankCells, TiesDirectionsAndShape) {
  const std::vector<std::vector<double>> t = {{1.0, 0.3}, {1.0, 0.1}, {1.0, 0.2}};
  const std::vector<MetricDirection> d = {metric_direction("psnr_db"), metric_direction("lpips")};
  const auto r = rank_cells(t, d);
  for (const auto& row : r) EXPECT_EQ(row[0], 1);
  EXPECT_EQ(r[0][1], 3);
  EXPECT_EQ(r[1][1], 1);
  EXPECT_EQ(r[2][1], 2);
  EXPECT_EQ(metric_direction("A.ssim"), MetricDirection::HigherIsBetter);
  EXPECT_EQ(metric_direction("completeness"), MetricDirection::LowerIsBetter);
  EXPECT_THROW(rank_cells({{1.0}}, d), DataError);
}
