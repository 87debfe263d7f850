#include "splatprobe/camera.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace splatprobe {

namespace {

// Forward-mode dual number carrying derivatives w.r.t. the six twist entries.
struct Dual {
  double v = 0.0;
  std::array<double, 6> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT(google-explicit-constructor)

  static Dual variable(double value, int index) {
    Dual out(value);
    out.d[index] = 1.0;
    return out;
  }
};

Dual operator+(const Dual& a, const Dual& b) {
  Dual o(a.v + b.v);
  for (int i = 0; i < 6; ++i) o.d[i] = a.d[i] + b.d[i];
  return o;
}
Dual operator-(const Dual& a, const Dual& b) {
  Dual o(a.v - b.v);
  for (int i = 0; i < 6; ++i) o.d[i] = a.d[i] - b.d[i];
  return o;
}
Dual operator-(const Dual& a) { return Dual(0.0) - a; }
Dual operator*(const Dual& a, const Dual& b) {
  Dual o(a.v * b.v);
  for (int i = 0; i < 6; ++i) o.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return o;
}
Dual operator/(const Dual& a, const Dual& b) {
  Dual o(a.v / b.v);
  const double inv2 = 1.0 / (b.v * b.v);
  for (int i = 0; i < 6; ++i) o.d[i] = (a.d[i] * b.v - a.v * b.d[i]) * inv2;
  return o;
}
Dual sin(const Dual& a) {
  Dual o(std::sin(a.v));
  const double c = std::cos(a.v);
  for (int i = 0; i < 6; ++i) o.d[i] = c * a.d[i];
  return o;
}
Dual cos(const Dual& a) {
  Dual o(std::cos(a.v));
  const double s = -std::sin(a.v);
  for (int i = 0; i < 6; ++i) o.d[i] = s * a.d[i];
  return o;
}
Dual sqrt(const Dual& a) {
  Dual o(std::sqrt(a.v));
  const double k = 0.5 / o.v;
  for (int i = 0; i < 6; ++i) o.d[i] = k * a.d[i];
  return o;
}
double value_of(const Dual& a) { return a.v; }
double value_of(double a) { return a; }

// R = I + A [w]x + B [w]x^2, V = I + B [w]x + C [w]x^2.
template <typename T>
void exp_map(const std::array<T, 6>& xi, std::array<T, 9>& rot, std::array<T, 3>& trans) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T wx = xi[0], wy = xi[1], wz = xi[2];
  const T theta2 = wx * wx + wy * wy + wz * wz;
  T a, b, c;
  if (value_of(theta2) < 1e-6) {
    const T t4 = theta2 * theta2;
    a = T(1.0) - theta2 / T(6.0) + t4 / T(120.0);
    b = T(0.5) - theta2 / T(24.0) + t4 / T(720.0);
    c = T(1.0 / 6.0) - theta2 / T(120.0) + t4 / T(5040.0);
  } else {
    const T theta = sqrt(theta2);
    const T s = sin(theta);
    const T co = cos(theta);
    a = s / theta;
    b = (T(1.0) - co) / theta2;
    c = (theta - s) / (theta2 * theta);
  }
  // K = [w]x, K2 = K*K = w w^T - theta2 I
  const std::array<T, 9> k{T(0.0), -wz, wy, wz, T(0.0), -wx, -wy, wx, T(0.0)};
  const std::array<T, 3> w{wx, wy, wz};
  std::array<T, 9> k2;
  for (int r = 0; r < 3; ++r) {
    for (int col = 0; col < 3; ++col) {
      k2[r * 3 + col] = w[r] * w[col] - (r == col ? theta2 : T(0.0));
    }
  }
  std::array<T, 9> v;
  for (int i = 0; i < 9; ++i) {
    const T id = (i % 4 == 0) ? T(1.0) : T(0.0);
    rot[i] = id + a * k[i] + b * k2[i];
    v[i] = id + b * k[i] + c * k2[i];
  }
  for (int r = 0; r < 3; ++r) {
    trans[r] = v[r * 3 + 0] * xi[3] + v[r * 3 + 1] * xi[4] + v[r * 3 + 2] * xi[5];
  }
}

}  // namespace

Vec3 CameraModel::unproject(double px, double py, double depth) const {
  const Vec3 cam((px - cx) / fx * depth, (py - cy) / fy * depth, depth);
  return rotation_matrix().transpose() * (cam - translation);
}

void CameraModel::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw DataError("camera focal lengths must be positive");
  if (!(near > 0)) throw DataError("camera near plane must be positive");
  if (width < 1 || height < 1) throw DataError("camera image size must be positive");
  if (!rotation.allFinite() || !translation.allFinite() || rotation.norm() < 1e-12) {
    throw DataError("camera pose is not finite");
  }
}

Se3 se3_exp(const Twist& xi) {
  std::array<double, 6> x{};
  for (int i = 0; i < 6; ++i) x[i] = xi[i];
  std::array<double, 9> r{};
  std::array<double, 3> t{};
  exp_map(x, r, t);
  Se3 out;
  for (int i = 0; i < 9; ++i) out.rotation(i / 3, i % 3) = r[i];
  out.translation = Vec3(t[0], t[1], t[2]);
  return out;
}

CameraModel se3_exp_apply(const Twist& xi, const CameraModel& cam) {
  if (xi.isZero(0.0)) return cam;
  const Se3 delta = se3_exp(xi);
  CameraModel out = cam;
  const Mat3 r = delta.rotation * cam.rotation_matrix();
  out.rotation = rotation_to_quat(r);
  out.translation = delta.rotation * cam.translation + delta.translation;
  return out;
}

Twist se3_pullback(const Twist& xi, const CameraModel& base, const Mat3& grad_rotation,
                   const Vec3& grad_translation) {
  std::array<Dual, 6> x;
  for (int i = 0; i < 6; ++i) x[i] = Dual::variable(xi[i], i);
  std::array<Dual, 9> r;
  std::array<Dual, 3> t;
  exp_map(x, r, t);
  const Mat3 r0 = base.rotation_matrix();
  const Vec3 t0 = base.translation;
  Twist g = Twist::Zero();
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) {
      // (R_delta * R0)[row, col]
      Dual rc(0.0);
      for (int k = 0; k < 3; ++k) rc = rc + r[row * 3 + k] * Dual(r0(k, col));
      for (int i = 0; i < 6; ++i) g[i] += grad_rotation(row, col) * rc.d[i];
    }
    Dual tr = t[row];
    for (int k = 0; k < 3; ++k) tr = tr + r[row * 3 + k] * Dual(t0[k]);
    for (int i = 0; i < 6; ++i) g[i] += grad_translation[row] * tr.d[i];
  }
  return g;
}

CameraModel look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_deg, int width, int height,
                    double near) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-12) x = z.cross(Vec3::UnitX());
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  CameraModel cam;
  cam.width = width;
  cam.height = height;
  cam.fy = 0.5 * height / std::tan(0.5 * fov_deg * std::numbers::pi / 180.0);
  cam.fx = cam.fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.rotation = rotation_to_quat(r);
  cam.translation = -(r * eye);
  cam.near = near;
  return cam;
}

double rotation_angle_deg(const CameraModel& a, const CameraModel& b) {
  const Mat3 rel = a.rotation_matrix() * b.rotation_matrix().transpose();
  const double c = std::clamp((rel.trace() - 1.0) * 0.5, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

}  // namespace splatprobe
