#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "vsdock/errors.hpp"

// Frame conventions used throughout:
//   camera {C}: Z along the optical axis, X right, Y down
//   robot  {R}: X forward, Y left, Z up
//   target {T}: marker plane at Z=0, Z toward the approach side, Y down
// The default camera mount aligns camera Z with robot X (see
// RigidTransform::default_mount).

namespace vsdock {

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const;

  // Normalized-image bounds of the pixel rectangle inset by margin_px.
  Eigen::Vector2d normalized_min(double margin_px = 0.0) const;
  Eigen::Vector2d normalized_max(double margin_px = 0.0) const;
};

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  void validate(double tol = 1e-9) const;

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }
  RigidTransform inverse() const;
  RigidTransform operator*(const RigidTransform& rhs) const;

  // Fixed camera-in-robot pose with camera Z along robot X and the camera
  // optical center at `translation` (robot frame).
  static RigidTransform default_mount(
      const Eigen::Vector3d& translation = Eigen::Vector3d::Zero());
};

struct Twist {
  Eigen::Vector3d linear = Eigen::Vector3d::Zero();
  Eigen::Vector3d angular = Eigen::Vector3d::Zero();
};

struct RotationVector {
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();  // unit norm
  double angle = 0.0;                               // [0, pi]

  void validate() const;
};

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

// sin(x)/x with a series expansion below |x| < 1e-4.
double sinc(double x);

// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

Eigen::Matrix3d rotation_y(double angle);

// Rotation exponential/log maps. log_rotation returns theta*n with
// theta in [0, pi].
Eigen::Matrix3d exp_rotation(const Eigen::Vector3d& rotvec);
Eigen::Vector3d log_rotation(const Eigen::Matrix3d& R);

// Pinhole projection of a camera-frame point to pixel coordinates.
// Throws NonPositiveDepth for Z <= 1e-9.
Eigen::Vector2d project_point(const Eigen::Vector3d& p_cam,
                              const CameraIntrinsics& K);

// Normalized image coordinates (X/Z, Y/Z) of a camera-frame point.
Eigen::Vector2d project_normalized(const Eigen::Vector3d& p_cam);

// Pixel -> normalized image coordinates; exact inverse of the pixel stage
// of project_point.
Eigen::Vector2d normalize_pixel(const Eigen::Vector2d& pixel,
                                const CameraIntrinsics& K);

// Normalized image coordinates -> pixel.
Eigen::Vector2d denormalize_point(const Eigen::Vector2d& s,
                                  const CameraIntrinsics& K);

// Velocity-space change of frame: maps a camera twist to the equivalent
// robot-frame twist through [[R, [t]x R], [0, R]].
Twist twist_adjoint(const RigidTransform& x_rc, const Twist& v_cam);

// Rate of change of the rotation vector n*theta under camera angular
// velocity omega. Falls back to the identity map below angle 1e-8.
Eigen::Vector3d rotvec_rate(const RotationVector& r,
                            const Eigen::Vector3d& omega);

// Signed relative orientation about the camera Y axis of a target-to-camera
// rotation; zero at the frontal pose R^C_T = R_y(pi), rate +omega_y.
double extract_planar_theta(const Eigen::Matrix3d& r_ct);

}  // namespace vsdock
