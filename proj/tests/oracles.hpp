#pragma once

#include "splatprobe/features.hpp"
#include "splatprobe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace oracle {

/// Cyclic Jacobi eigensolve of a symmetric matrix; eigenpairs sorted by descending value.
struct EigenPairs {
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;  // vectors[i] is the i-th eigenvector
};

inline EigenPairs jacobi_eigen(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
  EigenPairs out;
  for (std::size_t i : order) {
    out.values.push_back(a[i][i]);
    std::vector<double> col(n);
    for (std::size_t k = 0; k < n; ++k) col[k] = v[k][i];
    out.vectors.push_back(col);
  }
  return out;
}

/// Sample covariance (divisor M-1) and column means of an M x C matrix.
inline std::pair<std::vector<double>, std::vector<std::vector<double>>> covariance(const splatprobe::RowMatrix& x) {
  const auto m = x.rows(), c = x.cols();
  std::vector<double> mean(c, 0.0);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < c; ++j) mean[j] += x(i, j);
  for (auto& v : mean) v /= static_cast<double>(m);
  std::vector<std::vector<double>> cov(c, std::vector<double>(c, 0.0));
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index a = 0; a < c; ++a)
      for (Eigen::Index b = 0; b < c; ++b) cov[a][b] += (x(i, a) - mean[a]) * (x(i, b) - mean[b]);
  for (auto& row : cov)
    for (auto& v : row) v /= static_cast<double>(m - 1);
  return {mean, cov};
}

/// Max abs error of projecting every row onto the top-k eigenvectors and back.
inline double reconstruction_error(const splatprobe::RowMatrix& x, const std::vector<double>& mean,
                                   const std::vector<std::vector<double>>& vecs, int k) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::vector<double> rec(mean);
    for (int j = 0; j < k; ++j) {
      double code = 0.0;
      for (Eigen::Index c = 0; c < x.cols(); ++c) code += vecs[j][c] * (x(i, c) - mean[c]);
      for (Eigen::Index c = 0; c < x.cols(); ++c) rec[c] += code * vecs[j][c];
    }
    for (Eigen::Index c = 0; c < x.cols(); ++c) worst = std::max(worst, std::abs(rec[c] - x(i, c)));
  }
  return worst;
}

/// Direct windowed SSIM: 11x11 Gaussian (sigma 1.5) summed per pixel, truncated and
/// renormalized at borders, averaged over channels and masked pixels.
inline double dense_ssim(const splatprobe::Image& a, const splatprobe::Image& b, const splatprobe::Mask* mask = nullptr) {
  const int h = a.height, w = a.width, r = 5;
  double g[11], gs = 0.0;
  for (int i = -r; i <= r; ++i) gs += g[i + r] = std::exp(-(i * i) / (2.0 * 1.5 * 1.5));
  for (double& v : g) v /= gs;
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  long count = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mask && !mask->valid[static_cast<std::size_t>(y) * w + x]) continue;
      for (int c = 0; c < 3; ++c) {
        double sw = 0, mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx) {
            const int yy_ = y + dy, xx_ = x + dx;
            if (yy_ < 0 || yy_ >= h || xx_ < 0 || xx_ >= w) continue;
            const double wt = g[dy + r] * g[dx + r];
            const double p = a.at(yy_, xx_, c), q = b.at(yy_, xx_, c);
            sw += wt;
            mx += wt * p;
            my += wt * q;
            xx += wt * p * p;
            yy += wt * q * q;
            xy += wt * p * q;
          }
        }
        mx /= sw, my /= sw, xx /= sw, yy /= sw, xy /= sw;
        const double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
        total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

/// Pearson r from sample covariance over sample standard deviations.
inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n, mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  cov /= n - 1, va /= n - 1, vb /= n - 1;
  return cov / (std::sqrt(va) * std::sqrt(vb));
}

}  // namespace oracle
