#include "splatprobe/features.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace splatprobe {

int default_thread_count() {
  if (const char* env = std::getenv("SPLATPROBE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1 && v <= 1024) return static_cast<int>(v);
  }
  return 1;
}

void FeatureMap::validate() const {
  if (height < 1 || width < 1 || channels < 1) {
    throw DataError("feature map " + std::to_string(view_id) + " has non-positive dimensions");
  }
  if (data.size() != pixel_count() * channels) {
    throw DataError("feature map " + std::to_string(view_id) + " holds " + std::to_string(data.size()) +
                    " values, expected " + std::to_string(pixel_count() * channels));
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw DataError("feature map " + std::to_string(view_id) + " contains non-finite values");
  }
}

PcaBasis pca_fit(const RowMatrix& samples, int k) {
  const auto m = samples.rows();
  const auto c = samples.cols();
  if (m < 2) throw DataError("pca_fit needs at least 2 samples");
  if (k < 1 || k > std::min<Eigen::Index>(m, c)) {
    throw DataError("pca_fit: invalid rank " + std::to_string(k) + " for " + std::to_string(m) + "x" +
                    std::to_string(c) + " samples");
  }
  if (!samples.allFinite()) throw DataError("pca_fit: samples contain non-finite values");

  PcaBasis basis;
  basis.mean = samples.colwise().mean().transpose();
  const RowMatrix centered = samples.rowwise() - basis.mean.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(m - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericalError("pca_fit: eigendecomposition failed");
  // Eigen returns ascending eigenvalues.
  basis.components.resize(k, c);
  basis.explained_variance.resize(k);
  for (int i = 0; i < k; ++i) {
    const Eigen::Index col = c - 1 - i;
    Eigen::VectorXd v = solver.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    basis.components.row(i) = v.transpose();
    basis.explained_variance[i] = std::max(0.0, solver.eigenvalues()[col]);
  }
  return basis;
}

PcaBasis pca_fit(std::span<const FeatureMap> maps, int k) {
  if (maps.empty()) throw DataError("pca_fit: no feature maps");
  const int c = maps.front().channels;
  std::size_t rows = 0;
  for (const auto& map : maps) {
    if (map.channels != c) throw DataError("pca_fit: channel count differs between views");
    rows += map.pixel_count();
  }
  RowMatrix samples(static_cast<Eigen::Index>(rows), c);
  std::size_t r = 0;
  for (const auto& map : maps) {
    std::copy(map.data.begin(), map.data.end(), samples.data() + r * c);
    r += map.pixel_count();
  }
  return pca_fit(samples, k);
}

FeatureMap pca_apply(const FeatureMap& map, const PcaBasis& basis) {
  if (map.channels != basis.input_channels()) {
    throw DataError("pca_apply: map has " + std::to_string(map.channels) + " channels, basis expects " +
                    std::to_string(basis.input_channels()));
  }
  const int k = basis.rank();
  FeatureMap out(map.view_id, map.height, map.width, k, map.source_tag);
  const Eigen::Index n = static_cast<Eigen::Index>(map.pixel_count());
  Eigen::Map<const RowMatrix> in(map.data.data(), n, map.channels);
  Eigen::Map<RowMatrix> codes(out.data.data(), n, k);
  codes.noalias() = (in.rowwise() - basis.mean.transpose()) * basis.components.transpose();
  return out;
}

FeatureMap pca_reconstruct(const FeatureMap& codes, const PcaBasis& basis) {
  if (codes.channels != basis.rank()) throw DataError("pca_reconstruct: code width does not match basis rank");
  const int c = basis.input_channels();
  FeatureMap out(codes.view_id, codes.height, codes.width, c, codes.source_tag);
  const Eigen::Index n = static_cast<Eigen::Index>(codes.pixel_count());
  Eigen::Map<const RowMatrix> in(codes.data.data(), n, codes.channels);
  Eigen::Map<RowMatrix> rec(out.data.data(), n, c);
  rec.noalias() = in * basis.components;
  rec.rowwise() += basis.mean.transpose();
  return out;
}

FeatureMap upsample_bilinear(const FeatureMap& map, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw DataError("upsample_bilinear: output size must be positive");
  if (map.height < 1 || map.width < 1) throw DataError("upsample_bilinear: empty source");
  FeatureMap out(map.view_id, out_h, out_w, map.channels, map.source_tag);
  const double sy = static_cast<double>(map.height) / out_h;
  const double sx = static_cast<double>(map.width) / out_w;
  const int c = map.channels;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(map.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, map.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(map.width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, map.width - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < c; ++ch) {
        const double top = (1 - wx) * map.at(y0, x0, ch) + wx * map.at(y0, x1, ch);
        const double bot = (1 - wx) * map.at(y1, x0, ch) + wx * map.at(y1, x1, ch);
        out.at(y, x, ch) = (1 - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

std::vector<FeatureMap> iuvrgb_features(std::span<const Image> images) {
  if (images.empty()) throw DataError("iuvrgb_features: no images");
  const double denom = std::max<double>(1.0, static_cast<double>(images.size()) - 1.0);
  std::vector<FeatureMap> out;
  out.reserve(images.size());
  for (std::size_t v = 0; v < images.size(); ++v) {
    const Image& img = images[v];
    FeatureMap map(static_cast<int>(v), img.height, img.width, 6, "iuvrgb");
    const double index = static_cast<double>(v) / denom;
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        map.at(y, x, 0) = index;
        map.at(y, x, 1) = (x + 0.5) / img.width;
        map.at(y, x, 2) = (y + 0.5) / img.height;
        for (int ch = 0; ch < 3; ++ch) map.at(y, x, 3 + ch) = img.at(y, x, ch);
      }
    }
    out.push_back(std::move(map));
  }
  return out;
}

ChannelStats channel_stats(std::span<const FeatureMap> maps) {
  if (maps.empty()) throw DataError("channel_stats: no feature maps");
  const int c = maps.front().channels;
  ChannelStats stats{Vector::Zero(c), Vector::Zero(c)};
  std::size_t count = 0;
  for (const auto& map : maps) {
    if (map.channels != c) throw DataError("channel_stats: channel count differs between views");
    for (std::size_t p = 0; p < map.pixel_count(); ++p) {
      for (int ch = 0; ch < c; ++ch) stats.mean[ch] += map.data[p * c + ch];
    }
    count += map.pixel_count();
  }
  if (count == 0) throw DataError("channel_stats: no pixels");
  stats.mean /= static_cast<double>(count);
  Vector var = Vector::Zero(c);
  for (const auto& map : maps) {
    for (std::size_t p = 0; p < map.pixel_count(); ++p) {
      for (int ch = 0; ch < c; ++ch) {
        const double d = map.data[p * c + ch] - stats.mean[ch];
        var[ch] += d * d;
      }
    }
  }
  var /= static_cast<double>(count);
  stats.stddev = var.cwiseMax(1e-12).cwiseSqrt();
  return stats;
}

FeatureMap standardize_channels(const FeatureMap& map, const ChannelStats& stats) {
  if (stats.mean.size() != map.channels) throw DataError("standardize_channels: channel mismatch");
  FeatureMap out = map;
  const int c = map.channels;
  for (std::size_t p = 0; p < map.pixel_count(); ++p) {
    for (int ch = 0; ch < c; ++ch) {
      out.data[p * c + ch] = (map.data[p * c + ch] - stats.mean[ch]) / stats.stddev[ch];
    }
  }
  return out;
}

FeatureMap standardize_channels(const FeatureMap& map) {
  return standardize_channels(map, channel_stats(std::span<const FeatureMap>(&map, 1)));
}

std::vector<FeatureMap> standardize_channels(std::span<const FeatureMap> maps) {
  const ChannelStats stats = channel_stats(maps);
  std::vector<FeatureMap> out;
  out.reserve(maps.size());
  for (const auto& map : maps) out.push_back(standardize_channels(map, stats));
  return out;
}

FeatureMap concat_features(std::span<const FeatureMap> maps) {
  if (maps.empty()) throw DataError("concat_features: no feature maps");
  const int h = maps.front().height;
  const int w = maps.front().width;
  int total = 0;
  std::string tag;
  for (const auto& map : maps) {
    if (map.height != h || map.width != w) {
      throw DataError("concat_features: spatial mismatch " + std::to_string(map.height) + "x" +
                      std::to_string(map.width) + " vs " + std::to_string(h) + "x" + std::to_string(w));
    }
    total += map.channels;
    tag += (tag.empty() ? "" : "+") + map.source_tag;
  }
  FeatureMap out(maps.front().view_id, h, w, total, tag);
  int offset = 0;
  for (const auto& map : maps) {
    for (std::size_t p = 0; p < out.pixel_count(); ++p) {
      std::copy_n(map.data.data() + p * map.channels, map.channels, out.data.data() + p * total + offset);
    }
    offset += map.channels;
  }
  return out;
}

std::vector<std::string> order_for_concat(std::vector<std::string> ranked_best_first, ConcatOrder order) {
  if (order == ConcatOrder::Ascending) std::reverse(ranked_best_first.begin(), ranked_best_first.end());
  return ranked_best_first;
}

PreparedFeatures prepare_features(std::span<const FeatureMap> raw, int pca_k, int out_h, int out_w) {
  if (raw.empty()) throw DataError("prepare_features: no feature maps");
  for (const auto& map : raw) map.validate();
  std::vector<FeatureMap> maps = standardize_channels(raw);
  PreparedFeatures prepared;
  if (pca_k >= 1 && maps.front().channels > pca_k) {
    const PcaBasis basis = pca_fit(std::span<const FeatureMap>(maps), pca_k);
    for (auto& map : maps) map = pca_apply(map, basis);
    prepared.reduced = true;
  }
  for (auto& map : maps) {
    if (map.height != out_h || map.width != out_w) map = upsample_bilinear(map, out_h, out_w);
  }
  prepared.channels = maps.front().channels;
  prepared.maps = std::move(maps);
  return prepared;
}

}  // namespace splatprobe
