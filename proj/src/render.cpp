#include "splatprobe/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace splatprobe {

namespace {

constexpr int kTile = 4;
constexpr int kTilePixels = kTile * kTile;

constexpr double kShC1 = 0.4886025119029199;
constexpr double kShC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                             0.5462742152960396};
constexpr double kShC3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
                             -0.4570457994644658, 1.445305721320277, -0.5900435899266435};

// d Y_l / d(x, y, z), treating the direction components as independent.
std::array<Vec3, kShCoeffs> sh_basis_grad(const Vec3& d) {
  const double x = d.x(), y = d.y(), z = d.z();
  const double xx = x * x, yy = y * y, zz = z * z;
  std::array<Vec3, kShCoeffs> g;
  g[0] = Vec3::Zero();
  g[1] = Vec3(0, -kShC1, 0);
  g[2] = Vec3(0, 0, kShC1);
  g[3] = Vec3(-kShC1, 0, 0);
  g[4] = kShC2[0] * Vec3(y, x, 0);
  g[5] = kShC2[1] * Vec3(0, z, y);
  g[6] = kShC2[2] * Vec3(-2 * x, -2 * y, 4 * z);
  g[7] = kShC2[3] * Vec3(z, 0, x);
  g[8] = kShC2[4] * Vec3(2 * x, -2 * y, 0);
  g[9] = kShC3[0] * Vec3(6 * x * y, 3 * xx - 3 * yy, 0);
  g[10] = kShC3[1] * Vec3(y * z, x * z, x * y);
  g[11] = kShC3[2] * Vec3(-2 * x * y, 4 * zz - xx - 3 * yy, 8 * y * z);
  g[12] = kShC3[3] * Vec3(-6 * x * z, -6 * y * z, 6 * zz - 3 * xx - 3 * yy);
  g[13] = kShC3[4] * Vec3(4 * zz - 3 * xx - yy, -2 * x * y, 8 * x * z);
  g[14] = kShC3[5] * Vec3(2 * x * z, -2 * y * z, xx - yy);
  g[15] = kShC3[6] * Vec3(3 * xx - 3 * yy, -6 * x * y, 0);
  return g;
}

// d R(q) / d q for a unit quaternion (w, x, y, z): one 3x3 block per component.
std::array<Mat3, 4> rotation_jacobian(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Mat3, 4> j;
  j[0] << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  j[1] << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  j[2] << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  j[3] << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
  return j;
}

double max_eigenvalue(const Mat2& a) {
  const double mid = 0.5 * (a(0, 0) + a(1, 1));
  const double half = 0.5 * (a(0, 0) - a(1, 1));
  return mid + std::sqrt(half * half + a(0, 1) * a(0, 1));
}

struct PixelGrad {
  Vec2 mean = Vec2::Zero();
  double q00 = 0.0, q01 = 0.0, q11 = 0.0;
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
};

}  // namespace

std::array<double, kShCoeffs> sh_basis(const Vec3& d) {
  const double x = d.x(), y = d.y(), z = d.z();
  const double xx = x * x, yy = y * y, zz = z * z;
  return {kShC0,
          -kShC1 * y,
          kShC1 * z,
          -kShC1 * x,
          kShC2[0] * x * y,
          kShC2[1] * y * z,
          kShC2[2] * (2 * zz - xx - yy),
          kShC2[3] * x * z,
          kShC2[4] * (xx - yy),
          kShC3[0] * y * (3 * xx - yy),
          kShC3[1] * x * y * z,
          kShC3[2] * y * (4 * zz - xx - yy),
          kShC3[3] * z * (2 * zz - 3 * xx - 3 * yy),
          kShC3[4] * x * (4 * zz - xx - yy),
          kShC3[5] * z * (xx - yy),
          kShC3[6] * x * (xx - 3 * yy)};
}

Vec3 sh_eval(std::span<const double> coeffs, const Vec3& dir) {
  if (coeffs.size() != static_cast<std::size_t>(kShWidth)) throw DataError("sh_eval: expected 48 coefficients");
  const auto basis = sh_basis(dir);
  Vec3 color = Vec3::Constant(0.5);
  for (int l = 0; l < kShCoeffs; ++l) {
    for (int c = 0; c < 3; ++c) color[c] += basis[l] * coeffs[l * 3 + c];
  }
  return color.cwiseMax(0.0);
}

Mat3 build_cov3d(const Vec3& scale, const Vec4& rotation) {
  const Mat3 m = quat_to_rotation(rotation) * scale.asDiagonal();
  return m * m.transpose();
}

std::optional<Splat2D> project_gaussian(const CameraModel& cam, const Vec3& position, const Mat3& cov3d) {
  const Mat3 w = cam.rotation_matrix();
  const Vec3 t = w * position + cam.translation;
  if (t.z() <= cam.near) return std::nullopt;
  Mat23 j;
  j << cam.fx / t.z(), 0, -cam.fx * t.x() / (t.z() * t.z()), 0, cam.fy / t.z(), -cam.fy * t.y() / (t.z() * t.z());
  const Mat23 jw = j * w;
  Splat2D s;
  s.mean2d = Vec2(cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy);
  s.cov2d = jw * cov3d * jw.transpose() + kBlur2d * Mat2::Identity();
  s.cov2d(1, 0) = s.cov2d(0, 1);
  s.depth = t.z();
  return s;
}

RenderPass::RenderPass(const GaussianCloud& cloud, const CameraModel& cam, const RenderOptions& options)
    : cloud_(cloud), cam_(cam), options_(options) {
  world_to_cam_ = cam_.rotation_matrix();
  cam_center_ = -(world_to_cam_.transpose() * cam_.translation);
  tiles_x_ = (cam_.width + kTile - 1) / kTile;
  tiles_y_ = (cam_.height + kTile - 1) / kTile;

  const std::size_t n = cloud_.size();
  std::vector<ProjectedSplat> projected(n);
  std::vector<char> keep(n, 0);
  parallel_for(n, options_.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Vec3& x = cloud_.positions[i];
      const Vec3 t = world_to_cam_ * x + cam_.translation;
      if (t.z() <= cam_.near) continue;
      ProjectedSplat& s = projected[i];
      s.index = i;
      s.depth = t.z();
      s.cam_point = t;
      Mat23 j;
      j << cam_.fx / t.z(), 0, -cam_.fx * t.x() / (t.z() * t.z()), 0, cam_.fy / t.z(),
          -cam_.fy * t.y() / (t.z() * t.z());
      s.jw = j * world_to_cam_;
      s.cov3d = build_cov3d(cloud_.scales[i], cloud_.rotations[i]);
      Mat2 cov2d = s.jw * s.cov3d * s.jw.transpose() + kBlur2d * Mat2::Identity();
      cov2d(1, 0) = cov2d(0, 1);
      const double det = cov2d.determinant();
      if (!(det > 0.0)) continue;
      s.conic << cov2d(1, 1) / det, -cov2d(0, 1) / det, -cov2d(1, 0) / det, cov2d(0, 0) / det;
      s.mean2d = Vec2(cam_.fx * t.x() / t.z() + cam_.cx, cam_.fy * t.y() / t.z() + cam_.cy);
      s.radius = kFootprintSigmas * std::sqrt(max_eigenvalue(cov2d));
      // Pixel centres sit at integer + 0.5.
      const int px0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.x() - s.radius - 0.5)));
      const int px1 = std::min(cam_.width - 1, static_cast<int>(std::floor(s.mean2d.x() + s.radius - 0.5)));
      const int py0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.y() - s.radius - 0.5)));
      const int py1 = std::min(cam_.height - 1, static_cast<int>(std::floor(s.mean2d.y() + s.radius - 0.5)));
      if (!std::isfinite(s.radius) || px0 > px1 || py0 > py1) continue;
      s.tile_x0 = px0;
      s.tile_x1 = px1;
      s.tile_y0 = py0;
      s.tile_y1 = py1;
      s.view_dir = x - cam_center_;
      const double len = s.view_dir.norm();
      const Vec3 dir = len > 0 ? Vec3(s.view_dir / len) : Vec3(0, 0, 1);
      const auto basis = sh_basis(dir);
      const double* sh = cloud_.sh_of(i);
      Vec3 color = Vec3::Constant(0.5);
      for (int l = 0; l < kShCoeffs; ++l) {
        for (int c = 0; c < 3; ++c) color[c] += basis[l] * sh[l * 3 + c];
      }
      for (int c = 0; c < 3; ++c) {
        s.color_clamped[c] = color[c] < 0.0;
        s.color[c] = std::max(0.0, color[c]);
      }
      keep[i] = 1;
    }
  });

  splats_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) splats_.push_back(projected[i]);
  }
  std::sort(splats_.begin(), splats_.end(), [](const ProjectedSplat& a, const ProjectedSplat& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.index < b.index;
  });

  raster_.resize(splats_.size());
  for (std::size_t k = 0; k < splats_.size(); ++k) {
    const auto& s = splats_[k];
    raster_[k] = {s.mean2d.x(), s.mean2d.y(), s.conic(0, 0), s.conic(0, 1), s.conic(1, 1), cloud_.opacities[s.index],
                  s.color[0], s.color[1], s.color[2], s.depth, s.tile_x0, s.tile_x1, s.tile_y0, s.tile_y1, 0.0};
    const double o = raster_[k].opacity;
    raster_[k].min_power = o > 0.0 ? std::log(kAlphaSkip / o) - 1e-9 : std::numeric_limits<double>::infinity();
  }

  tile_lists_.assign(static_cast<std::size_t>(tiles_x_) * tiles_y_, {});
  for (std::size_t k = 0; k < splats_.size(); ++k) {
    const auto& s = splats_[k];
    for (int ty = s.tile_y0 / kTile; ty <= s.tile_y1 / kTile; ++ty) {
      for (int tx = s.tile_x0 / kTile; tx <= s.tile_x1 / kTile; ++tx) {
        tile_lists_[static_cast<std::size_t>(ty) * tiles_x_ + tx].push_back(static_cast<std::uint32_t>(k));
      }
    }
  }
}

RenderPass::TilePixels RenderPass::tile_pixels(std::size_t tile) const {
  TilePixels tp;
  const int tx = static_cast<int>(tile) % tiles_x_;
  const int ty = static_cast<int>(tile) / tiles_x_;
  const int x1 = std::min(cam_.width, tx * kTile + kTile), y1 = std::min(cam_.height, ty * kTile + kTile);
  for (int y = ty * kTile; y < y1; ++y) {
    for (int x = tx * kTile; x < x1; ++x) {
      tp.x[tp.count] = x;
      tp.y[tp.count] = y;
      ++tp.count;
    }
  }
  return tp;
}

RenderOutput RenderPass::forward() const {
  RenderOutput out;
  out.width = cam_.width;
  out.height = cam_.height;
  const std::size_t pixels = static_cast<std::size_t>(cam_.width) * cam_.height;
  out.rgb.assign(pixels * 3, 0.0);
  out.alpha_accum.assign(pixels, 0.0);
  out.expected_depth.assign(pixels, 0.0);
  out.final_transmittance.assign(pixels, 1.0);

  const std::size_t tiles = tile_lists_.size();
  parallel_for(tiles, options_.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t tile = begin; tile < end; ++tile) {
      const TilePixels tp = tile_pixels(tile);
      std::array<double, kTilePixels> trans, cr, cg, cb, depth;
      trans.fill(1.0);
      cr.fill(0.0);
      cg.fill(0.0);
      cb.fill(0.0);
      depth.fill(0.0);
      for (std::uint32_t k : tile_lists_[tile]) {
        const RasterSplat& s = raster_[k];
        for (int j = 0; j < tp.count; ++j) {
          const int x = tp.x[j], y = tp.y[j];
          if (x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1) continue;
          const double dx = x + 0.5 - s.mx, dy = y + 0.5 - s.my;
          const double power = -0.5 * (s.c00 * dx * dx + 2.0 * s.c01 * dx * dy + s.c11 * dy * dy);
          if (power < s.min_power) continue;
          const double alpha = std::min(kAlphaCap, s.opacity * std::exp(power));
          if (alpha < kAlphaSkip) continue;
          const double w = alpha * trans[j];
          cr[j] += w * s.r;
          cg[j] += w * s.g;
          cb[j] += w * s.b;
          depth[j] += w * s.depth;
          trans[j] *= (1.0 - alpha);
        }
      }
      for (int j = 0; j < tp.count; ++j) {
        const std::size_t pix = static_cast<std::size_t>(tp.y[j]) * cam_.width + tp.x[j];
        out.rgb[pix * 3] = cr[j] + trans[j] * options_.background[0];
        out.rgb[pix * 3 + 1] = cg[j] + trans[j] * options_.background[1];
        out.rgb[pix * 3 + 2] = cb[j] + trans[j] * options_.background[2];
        out.alpha_accum[pix] = 1.0 - trans[j];
        out.final_transmittance[pix] = trans[j];
        out.expected_depth[pix] = depth[j] / std::max(1.0 - trans[j], 1e-10);
      }
    }
  });
  return out;
}

RenderGradients RenderPass::backward(std::span<const double> adjoint_rgb) const {
  const std::size_t pixels = static_cast<std::size_t>(cam_.width) * cam_.height;
  if (adjoint_rgb.size() != pixels * 3) throw DataError("render_gradients: adjoint has the wrong size");

  RenderGradients grads;
  grads.cloud.resize(cloud_.size());

  // Pass 1: per-tile accumulation into tile-local buffers.
  const std::size_t tiles = tile_lists_.size();
  std::vector<std::vector<PixelGrad>> tile_grads(tiles);
  std::vector<Vec3> tile_background(tiles, Vec3::Zero());
  parallel_for(tiles, options_.threads, [&](std::size_t begin, std::size_t end) {
    // Per (slot, pixel) record of the forward sweep; alpha 0 marks a skipped pair.
    std::vector<double> rec_alpha, rec_trans, rec_gauss;
    for (std::size_t tile = begin; tile < end; ++tile) {
      const auto& list = tile_lists_[tile];
      auto& local = tile_grads[tile];
      local.assign(list.size(), PixelGrad{});
      const TilePixels tp = tile_pixels(tile);
      const std::size_t n_rec = list.size() * kTilePixels;
      rec_alpha.assign(n_rec, 0.0);
      rec_trans.resize(n_rec);
      rec_gauss.resize(n_rec);
      std::array<double, kTilePixels> trans;
      trans.fill(1.0);
      for (std::size_t slot = 0; slot < list.size(); ++slot) {
        const RasterSplat& s = raster_[list[slot]];
        for (int j = 0; j < tp.count; ++j) {
          const int x = tp.x[j], y = tp.y[j];
          if (x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1) continue;
          const double dx = x + 0.5 - s.mx, dy = y + 0.5 - s.my;
          const double power = -0.5 * (s.c00 * dx * dx + 2.0 * s.c01 * dx * dy + s.c11 * dy * dy);
          if (power < s.min_power) continue;
          const double gauss = std::exp(power);
          const double alpha = std::min(kAlphaCap, s.opacity * gauss);
          if (alpha < kAlphaSkip) continue;
          const std::size_t r = slot * kTilePixels + j;
          rec_alpha[r] = alpha;
          rec_trans[r] = trans[j];
          rec_gauss[r] = gauss;
          trans[j] *= (1.0 - alpha);
        }
      }
      std::array<Vec3, kTilePixels> g, accum;
      bool any = false;
      for (int j = 0; j < tp.count; ++j) {
        const std::size_t pix = static_cast<std::size_t>(tp.y[j]) * cam_.width + tp.x[j];
        g[j] = Vec3(adjoint_rgb[pix * 3], adjoint_rgb[pix * 3 + 1], adjoint_rgb[pix * 3 + 2]);
        tile_background[tile] += g[j] * trans[j];
        accum[j] = options_.background;
        any = any || !g[j].isZero(0.0);
      }
      if (!any) continue;
      for (std::size_t slot = list.size(); slot-- > 0;) {
        const ProjectedSplat& s = splats_[list[slot]];
        const RasterSplat& rs = raster_[list[slot]];
        PixelGrad& pg = local[slot];
        for (int j = 0; j < tp.count; ++j) {
          const std::size_t r = slot * kTilePixels + j;
          const double alpha = rec_alpha[r];
          if (alpha == 0.0 || g[j].isZero(0.0)) continue;
          const double t = rec_trans[r];
          pg.color += g[j] * (alpha * t);
          const double dalpha = t * g[j].dot(s.color - accum[j]);
          accum[j] = alpha * s.color + (1.0 - alpha) * accum[j];
          const double gauss = rec_gauss[r];
          if (rs.opacity * gauss > kAlphaCap) continue;
          const Vec2 d(tp.x[j] + 0.5 - rs.mx, tp.y[j] + 0.5 - rs.my);
          pg.opacity += dalpha * gauss;
          const double dpower = dalpha * alpha;
          pg.mean += dpower * (s.conic * d);
          pg.q00 += -0.5 * dpower * d.x() * d.x();
          pg.q01 += -0.5 * dpower * d.x() * d.y();
          pg.q11 += -0.5 * dpower * d.y() * d.y();
        }
      }
    }
  });

  // Pass 2: ordered reduction over tiles.
  std::vector<PixelGrad> splat_grads(splats_.size());
  for (std::size_t tile = 0; tile < tiles; ++tile) {
    const auto& list = tile_lists_[tile];
    for (std::size_t slot = 0; slot < list.size(); ++slot) {
      const PixelGrad& src = tile_grads[tile][slot];
      PixelGrad& dst = splat_grads[list[slot]];
      dst.mean += src.mean;
      dst.q00 += src.q00;
      dst.q01 += src.q01;
      dst.q11 += src.q11;
      dst.opacity += src.opacity;
      dst.color += src.color;
    }
    grads.background += tile_background[tile];
  }

  // Pass 3: per-splat chain rule back to Gaussian attributes and the pose.
  std::vector<Mat3> pose_rot(splats_.size(), Mat3::Zero());
  std::vector<Vec3> pose_trans(splats_.size(), Vec3::Zero());
  parallel_for(splats_.size(), options_.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const ProjectedSplat& s = splats_[k];
      const PixelGrad& pg = splat_grads[k];
      const std::size_t i = s.index;
      Mat3 g_w = Mat3::Zero();
      Vec3 g_tau = Vec3::Zero();
      Vec3 g_x = Vec3::Zero();

      grads.cloud.opacities[i] = pg.opacity;

      // Colour -> SH coefficients and view direction.
      const double len = s.view_dir.norm();
      if (len > 0) {
        const Vec3 dir = s.view_dir / len;
        const auto basis = sh_basis(dir);
        const auto basis_grad = sh_basis_grad(dir);
        const double* sh = cloud_.sh_of(i);
        double* g_sh = grads.cloud.sh.data() + i * kShWidth;
        Vec3 g_dir = Vec3::Zero();
        for (int c = 0; c < 3; ++c) {
          if (s.color_clamped[c]) continue;
          const double gc = pg.color[c];
          for (int l = 0; l < kShCoeffs; ++l) {
            g_sh[l * 3 + c] = basis[l] * gc;
            g_dir += gc * sh[l * 3 + c] * basis_grad[l];
          }
        }
        const Vec3 g_view = (g_dir - dir * dir.dot(g_dir)) / len;
        g_x += g_view;
        // centre = -W^T tau
        const Vec3 g_center = -g_view;
        g_tau += -(world_to_cam_ * g_center);
        g_w += -(cam_.translation * g_center.transpose());
      }

      // Conic -> 2D covariance -> (J W) and Sigma.
      Mat2 g_conic;
      g_conic << pg.q00, pg.q01, pg.q01, pg.q11;
      const Mat2 g_cov2d = -(s.conic * g_conic * s.conic);
      const Mat23 g_jw = (g_cov2d + g_cov2d.transpose()) * s.jw * s.cov3d;
      const Mat3 g_sigma = s.jw.transpose() * g_cov2d * s.jw;

      const Vec3& t = s.cam_point;
      const double iz = 1.0 / t.z(), iz2 = iz * iz, iz3 = iz2 * iz;
      const Eigen::Matrix<double, 2, 3> g_j = g_jw * world_to_cam_.transpose();
      Mat23 j;
      j << cam_.fx * iz, 0, -cam_.fx * t.x() * iz2, 0, cam_.fy * iz, -cam_.fy * t.y() * iz2;
      g_w += j.transpose() * g_jw;
      Vec3 g_t = Vec3::Zero();
      g_t.x() += -cam_.fx * iz2 * g_j(0, 2);
      g_t.y() += -cam_.fy * iz2 * g_j(1, 2);
      g_t.z() += -cam_.fx * iz2 * g_j(0, 0) + 2 * cam_.fx * t.x() * iz3 * g_j(0, 2) - cam_.fy * iz2 * g_j(1, 1) +
                 2 * cam_.fy * t.y() * iz3 * g_j(1, 2);
      // Mean projection.
      g_t.x() += pg.mean.x() * cam_.fx * iz;
      g_t.y() += pg.mean.y() * cam_.fy * iz;
      g_t.z() += -pg.mean.x() * cam_.fx * t.x() * iz2 - pg.mean.y() * cam_.fy * t.y() * iz2;

      const Vec3& x = cloud_.positions[i];
      g_x += world_to_cam_.transpose() * g_t;
      g_w += g_t * x.transpose();
      g_tau += g_t;
      grads.cloud.positions[i] = g_x;

      // Sigma = M M^T, M = R diag(s), R = R(q / |q|).
      const Vec4& q_raw = cloud_.rotations[i];
      const double qn = q_raw.norm();
      const Vec4 q = q_raw / qn;
      const Mat3 r = quat_to_rotation(q);
      const Vec3& scale = cloud_.scales[i];
      const Mat3 m = r * scale.asDiagonal();
      const Mat3 g_m = (g_sigma + g_sigma.transpose()) * m;
      const Mat3 g_r = g_m * scale.asDiagonal();
      Vec3 g_s;
      for (int col = 0; col < 3; ++col) g_s[col] = r.col(col).dot(g_m.col(col));
      grads.cloud.scales[i] = g_s;
      const auto dr = rotation_jacobian(q);
      Vec4 g_qhat;
      for (int c = 0; c < 4; ++c) g_qhat[c] = (dr[c].array() * g_r.array()).sum();
      grads.cloud.rotations[i] = (g_qhat - q * q.dot(g_qhat)) / qn;

      pose_rot[k] = g_w;
      pose_trans[k] = g_tau;
    }
  });
  for (std::size_t k = 0; k < splats_.size(); ++k) {
    grads.camera_rotation += pose_rot[k];
    grads.camera_translation += pose_trans[k];
  }
  return grads;
}

RenderOutput rasterize(const GaussianCloud& cloud, const CameraModel& cam, const Vec3& background, int threads) {
  return RenderPass(cloud, cam, RenderOptions{background, threads}).forward();
}

RenderGradients render_gradients(const GaussianCloud& cloud, const CameraModel& cam, const Vec3& background,
                                 std::span<const double> adjoint_rgb, int threads) {
  return RenderPass(cloud, cam, RenderOptions{background, threads}).backward(adjoint_rgb);
}

DepthNormal render_depth_normal(const RenderOutput& output, const CameraModel& cam) {
  DepthNormal out;
  out.width = output.width;
  out.height = output.height;
  out.depth = output.expected_depth;
  const int w = output.width, h = output.height;
  out.normals.assign(static_cast<std::size_t>(w) * h, Vec3(0, 0, 1));
  auto depth_at = [&](int x, int y) { return output.expected_depth[static_cast<std::size_t>(y) * w + x]; };
  auto point_at = [&](int x, int y) {
    const double z = depth_at(x, y);
    return Vec3((x + 0.5 - cam.cx) / cam.fx * z, (y + 0.5 - cam.cy) / cam.fy * z, z);
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (depth_at(x, y) <= 0.0) continue;
      const int xl = std::max(0, x - 1), xr = std::min(w - 1, x + 1);
      const int yu = std::max(0, y - 1), yd = std::min(h - 1, y + 1);
      if (xl == xr || yu == yd) continue;
      if (depth_at(xl, y) <= 0 || depth_at(xr, y) <= 0 || depth_at(x, yu) <= 0 || depth_at(x, yd) <= 0) continue;
      const Vec3 dx = point_at(xr, y) - point_at(xl, y);
      const Vec3 dy = point_at(x, yd) - point_at(x, yu);
      Vec3 n = dy.cross(dx);
      const double len = n.norm();
      if (!(len > 1e-12)) continue;
      n /= len;
      if (n.dot(point_at(x, y)) > 0) n = -n;
      out.normals[static_cast<std::size_t>(y) * w + x] = n;
    }
  }
  return out;
}

}  // namespace splatprobe
