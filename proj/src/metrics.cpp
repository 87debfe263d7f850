#include "splatprobe/metrics.hpp"

#include "splatprobe/spatial.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

namespace splatprobe {

namespace {

void check_pair(const Image& a, const Image& b, const Mask* mask) {
  if (a.height != b.height || a.width != b.width) throw DataError("image metric: shape mismatch");
  if (mask && (mask->height != a.height || mask->width != a.width)) throw DataError("image metric: mask shape mismatch");
  if (mask && mask->count() == 0) throw DataError("image metric: mask selects no pixels");
  if (a.height < 1 || a.width < 1) throw DataError("image metric: empty image");
}

// Separable filter with per-axis renormalization of the truncated window.
class WindowFilter {
 public:
  WindowFilter(int h, int w) : h_(h), w_(w), kernel_(ssim_window()) {
    zx_ = axis_norm(w);
    zy_ = axis_norm(h);
  }

  // out(p) = sum_q k(p - q) in(q) / Z(p)
  std::vector<double> apply(const std::vector<double>& in) const {
    std::vector<double> out = convolve(in);
    for (int y = 0; y < h_; ++y) {
      for (int x = 0; x < w_; ++x) out[idx(y, x)] /= zx_[x] * zy_[y];
    }
    return out;
  }

  // Adjoint of apply().
  std::vector<double> apply_transpose(const std::vector<double>& in) const {
    std::vector<double> scaled(in.size());
    for (int y = 0; y < h_; ++y) {
      for (int x = 0; x < w_; ++x) scaled[idx(y, x)] = in[idx(y, x)] / (zx_[x] * zy_[y]);
    }
    return convolve(scaled);
  }

 private:
  static constexpr int kHalf = kSsimWindow / 2;

  std::size_t idx(int y, int x) const { return static_cast<std::size_t>(y) * w_ + x; }

  std::vector<double> axis_norm(int n) const {
    std::vector<double> z(n, 0.0);
    for (int i = 0; i < n; ++i) {
      for (int k = -kHalf; k <= kHalf; ++k) {
        if (i + k >= 0 && i + k < n) z[i] += kernel_[k + kHalf];
      }
    }
    return z;
  }

  std::vector<double> convolve(const std::vector<double>& in) const {
    std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
    for (int y = 0; y < h_; ++y) {
      for (int x = 0; x < w_; ++x) {
        double s = 0.0;
        for (int k = -kHalf; k <= kHalf; ++k) {
          const int xx = x + k;
          if (xx >= 0 && xx < w_) s += kernel_[k + kHalf] * in[idx(y, xx)];
        }
        tmp[idx(y, x)] = s;
      }
    }
    for (int y = 0; y < h_; ++y) {
      for (int x = 0; x < w_; ++x) {
        double s = 0.0;
        for (int k = -kHalf; k <= kHalf; ++k) {
          const int yy = y + k;
          if (yy >= 0 && yy < h_) s += kernel_[k + kHalf] * tmp[idx(yy, x)];
        }
        out[idx(y, x)] = s;
      }
    }
    return out;
  }

  int h_, w_;
  std::array<double, kSsimWindow> kernel_;
  std::vector<double> zx_, zy_;
};

}  // namespace

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

double Mask::coverage() const { return valid.empty() ? 0.0 : static_cast<double>(count()) / valid.size(); }

std::array<double, kSsimWindow> ssim_window() {
  std::array<double, kSsimWindow> k{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    k[i] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

double psnr(const Image& img, const Image& ref, const Mask* mask) {
  check_pair(img, ref, mask);
  double sum = 0.0;
  std::size_t count = 0;
  const std::size_t pixels = static_cast<std::size_t>(img.height) * img.width;
  for (std::size_t p = 0; p < pixels; ++p) {
    if (mask && !mask->valid[p]) continue;
    for (int c = 0; c < 3; ++c) {
      const double d = img.rgb[p * 3 + c] - ref.rgb[p * 3 + c];
      sum += d * d;
    }
    count += 3;
  }
  const double mse = sum / static_cast<double>(count);
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& img, const Image& ref, const Mask* mask) {
  return ssim_with_gradient(img, ref, mask, nullptr);
}

double ssim_with_gradient(const Image& img, const Image& ref, const Mask* mask, std::vector<double>* grad) {
  check_pair(img, ref, mask);
  const int h = img.height, w = img.width;
  const std::size_t pixels = static_cast<std::size_t>(h) * w;
  const WindowFilter filter(h, w);
  const std::size_t valid = mask ? mask->count() : pixels;
  const double weight = 1.0 / (static_cast<double>(valid) * 3.0);
  if (grad) grad->assign(pixels * 3, 0.0);

  double total = 0.0;
  std::vector<double> x(pixels), y(pixels), xx(pixels), yy(pixels), xy(pixels);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < pixels; ++p) {
      x[p] = img.rgb[p * 3 + c];
      y[p] = ref.rgb[p * 3 + c];
      xx[p] = x[p] * x[p];
      yy[p] = y[p] * y[p];
      xy[p] = x[p] * y[p];
    }
    const auto mx = filter.apply(x), my = filter.apply(y);
    const auto exx = filter.apply(xx), eyy = filter.apply(yy), exy = filter.apply(xy);
    std::vector<double> g_mx, g_exx, g_exy;
    if (grad) {
      g_mx.assign(pixels, 0.0);
      g_exx.assign(pixels, 0.0);
      g_exy.assign(pixels, 0.0);
    }
    for (std::size_t p = 0; p < pixels; ++p) {
      if (mask && !mask->valid[p]) continue;
      const double vx = exx[p] - mx[p] * mx[p];
      const double vy = eyy[p] - my[p] * my[p];
      const double cxy = exy[p] - mx[p] * my[p];
      const double a1 = 2 * mx[p] * my[p] + kSsimC1;
      const double a2 = 2 * cxy + kSsimC2;
      const double b1 = mx[p] * mx[p] + my[p] * my[p] + kSsimC1;
      const double b2 = vx + vy + kSsimC2;
      const double s = (a1 * a2) / (b1 * b2);
      total += s * weight;
      if (grad) {
        g_mx[p] = weight * (2 * my[p] * (a2 - a1) / (b1 * b2) + s * 2 * mx[p] * (1.0 / b2 - 1.0 / b1));
        g_exx[p] = weight * (-s / b2);
        g_exy[p] = weight * (2 * a1 / (b1 * b2));
      }
    }
    if (grad) {
      const auto t_mx = filter.apply_transpose(g_mx);
      const auto t_exx = filter.apply_transpose(g_exx);
      const auto t_exy = filter.apply_transpose(g_exy);
      for (std::size_t p = 0; p < pixels; ++p) {
        (*grad)[p * 3 + c] = t_mx[p] + 2 * x[p] * t_exx[p] + y[p] * t_exy[p];
      }
    }
  }
  return total;
}

CloudMetrics cloud_metrics(std::span<const Vec3> recon, std::span<const Vec3> gt, std::span<const std::int64_t> matching,
                           int threads) {
  if (recon.empty() || gt.empty()) throw DataError("cloud_metrics: point sets must be non-empty");
  CloudMetrics m;
  const KdTree gt_tree(gt);
  const KdTree recon_tree(recon);
  std::vector<double> acc(recon.size()), comp(gt.size());
  parallel_for(recon.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) acc[i] = gt_tree.nearest_distance(recon[i]);
  });
  parallel_for(gt.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) comp[i] = recon_tree.nearest_distance(gt[i]);
  });
  m.accuracy = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
  m.completeness = std::accumulate(comp.begin(), comp.end(), 0.0) / static_cast<double>(comp.size());
  if (!matching.empty()) {
    if (matching.size() != recon.size()) throw DataError("cloud_metrics: matching length differs from recon size");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < matching.size(); ++i) {
      const std::int64_t j = matching[i];
      if (j < 0) continue;
      if (static_cast<std::size_t>(j) >= gt.size()) {
        throw DataError("cloud_metrics: matching index " + std::to_string(j) + " out of range");
      }
      sum += (recon[i] - gt[static_cast<std::size_t>(j)]).norm();
      ++count;
    }
    if (count > 0) m.distance = sum / static_cast<double>(count);
  }
  return m;
}

CorrMatrix pearson_matrix(std::span<const LabeledVector> vectors) {
  CorrMatrix out;
  const std::size_t k = vectors.size();
  if (k == 0) return out;
  const std::size_t n = vectors.front().values.size();
  for (const auto& v : vectors) {
    if (v.values.size() != n) throw DataError("pearson_matrix: vectors have different lengths");
    out.labels.push_back(v.label);
  }
  if (n < 2) throw DataError("pearson_matrix: need at least two samples");
  std::vector<std::vector<double>> centered(k, std::vector<double>(n));
  std::vector<double> norm(k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    const double mean = std::accumulate(vectors[a].values.begin(), vectors[a].values.end(), 0.0) / n;
    for (std::size_t i = 0; i < n; ++i) {
      centered[a][i] = vectors[a].values[i] - mean;
      norm[a] += centered[a][i] * centered[a][i];
    }
    norm[a] = std::sqrt(norm[a]);
    if (!(norm[a] > 0.0)) out.zero_variance.push_back(vectors[a].label);
  }
  out.values = RowMatrix::Identity(k, k);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      double r = 0.0;
      if (norm[a] > 0.0 && norm[b] > 0.0) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += centered[a][i] * centered[b][i];
        r = std::clamp(dot / (norm[a] * norm[b]), -1.0, 1.0);
      }
      out.values(a, b) = out.values(b, a) = r;
    }
  }
  return out;
}

MetricDirection metric_direction(const std::string& metric) {
  std::string m;
  for (char c : metric) m += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (m.find("psnr") != std::string::npos || m.find("ssim") != std::string::npos) {
    return MetricDirection::HigherIsBetter;
  }
  return MetricDirection::LowerIsBetter;
}

std::vector<std::vector<int>> rank_cells(const std::vector<std::vector<double>>& table,
                                         std::span<const MetricDirection> directions) {
  const std::size_t rows = table.size();
  std::vector<std::vector<int>> ranks(rows, std::vector<int>(directions.size(), 0));
  for (const auto& row : table) {
    if (row.size() != directions.size()) throw DataError("rank_cells: row width differs from direction count");
  }
  for (std::size_t col = 0; col < directions.size(); ++col) {
    std::vector<double> values;
    for (const auto& row : table) values.push_back(row[col]);
    std::vector<double> distinct = values;
    if (directions[col] == MetricDirection::HigherIsBetter) {
      std::sort(distinct.begin(), distinct.end(), std::greater<>());
    } else {
      std::sort(distinct.begin(), distinct.end());
    }
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (std::size_t r = 0; r < rows; ++r) {
      const auto it = std::find(distinct.begin(), distinct.end(), values[r]);
      ranks[r][col] = static_cast<int>(it - distinct.begin()) + 1;
    }
  }
  return ranks;
}

}  // namespace splatprobe
