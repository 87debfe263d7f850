#pragma once

#include "splatprobe/common.hpp"

#include <vector>

namespace splatprobe {

/// Pinhole camera with a world-to-camera pose: x_cam = R * x_world + translation.
/// Pixel (x, y) samples the image plane at (x + 0.5, y + 0.5).
struct CameraModel {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  Vec4 rotation{1.0, 0.0, 0.0, 0.0};
  Vec3 translation = Vec3::Zero();
  double near = 0.01;

  Mat3 rotation_matrix() const { return quat_to_rotation(rotation); }
  /// Camera centre in world coordinates.
  Vec3 center() const { return -(rotation_matrix().transpose() * translation); }
  Vec3 to_camera(const Vec3& world) const { return rotation_matrix() * world + translation; }
  /// World point seen at pixel (px, py) with camera-space depth z.
  Vec3 unproject(double px, double py, double depth) const;

  void validate() const;
};

/// se(3) twist (omega, v): rotation part first.
using Twist = Eigen::Matrix<double, 6, 1>;

struct Se3 {
  Mat3 rotation;
  Vec3 translation;
};

/// Closed-form exponential map (Rodrigues rotation, left Jacobian for translation).
Se3 se3_exp(const Twist& xi);

/// Left-multiplies the camera pose by exp(xi).
CameraModel se3_exp_apply(const Twist& xi, const CameraModel& cam);

/// Chains gradients w.r.t. the refined camera's rotation matrix and translation
/// back to the twist applied to `base`.
Twist se3_pullback(const Twist& xi, const CameraModel& base, const Mat3& grad_rotation,
                   const Vec3& grad_translation);

/// Camera at `eye` looking at `target`, +y of the image pointing along -up.
CameraModel look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_deg, int width, int height,
                    double near = 0.01);

/// Angle of the relative rotation between two cameras, in degrees.
double rotation_angle_deg(const CameraModel& a, const CameraModel& b);

}  // namespace splatprobe
