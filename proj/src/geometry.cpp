#include "vsdock/geometry.hpp"

#include <cmath>

namespace vsdock {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw ConfigError("camera focal lengths must be positive");
  }
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw ConfigError("camera principal point must lie inside the image");
  }
}

Eigen::Vector2d CameraIntrinsics::normalized_min(double margin_px) const {
  return {(margin_px - cx) / fx, (margin_px - cy) / fy};
}

Eigen::Vector2d CameraIntrinsics::normalized_max(double margin_px) const {
  return {(width - margin_px - cx) / fx, (height - margin_px - cy) / fy};
}

void RigidTransform::validate(double tol) const {
  const Eigen::Matrix3d err =
      rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
  if (err.cwiseAbs().maxCoeff() > tol) {
    throw ConfigError("rotation matrix is not orthonormal");
  }
  if (std::abs(rotation.determinant() - 1.0) > tol) {
    throw ConfigError("rotation matrix determinant is not +1");
  }
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.transpose();
  out.translation = -(rotation.transpose() * translation);
  return out;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  RigidTransform out;
  out.rotation = rotation * rhs.rotation;
  out.translation = rotation * rhs.translation + translation;
  return out;
}

RigidTransform RigidTransform::default_mount(
    const Eigen::Vector3d& translation) {
  // Camera X -> robot -Y, camera Y -> robot -Z, camera Z -> robot X.
  RigidTransform x_rc;
  x_rc.rotation << 0.0, 0.0, 1.0,  //
      -1.0, 0.0, 0.0,              //
      0.0, -1.0, 0.0;
  x_rc.translation = translation;
  return x_rc;
}

void RotationVector::validate() const {
  if (std::abs(axis.norm() - 1.0) > 1e-9) {
    throw ConfigError("rotation axis must be a unit vector");
  }
  if (angle < 0.0 || angle > M_PI) {
    throw ConfigError("rotation angle must lie in [0, pi]");
  }
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),  //
      v.z(), 0.0, -v.x(),   //
      -v.y(), v.x(), 0.0;
  return m;
}

double sinc(double x) {
  if (std::abs(x) < 1e-4) {
    const double x2 = x * x;
    return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
  }
  return std::sin(x) / x;
}

double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * M_PI);
  if (w <= -M_PI) {
    w += 2.0 * M_PI;
  }
  return w;
}

Eigen::Matrix3d rotation_y(double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Eigen::Matrix3d m;
  m << c, 0.0, s,  //
      0.0, 1.0, 0.0,
      -s, 0.0, c;
  return m;
}

Eigen::Matrix3d exp_rotation(const Eigen::Vector3d& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-12) {
    return Eigen::Matrix3d::Identity() + skew(rotvec);
  }
  return Eigen::AngleAxisd(angle, rotvec / angle).toRotationMatrix();
}

Eigen::Vector3d log_rotation(const Eigen::Matrix3d& R) {
  const Eigen::AngleAxisd aa(R);
  double angle = aa.angle();
  Eigen::Vector3d axis = aa.axis();
  if (angle < 0.0) {  // AngleAxisd may return negative angles
    angle = -angle;
    axis = -axis;
  }
  return angle * axis;
}

Eigen::Vector2d project_point(const Eigen::Vector3d& p_cam,
                              const CameraIntrinsics& K) {
  if (p_cam.z() <= 1e-9) {
    throw NonPositiveDepth("point depth must be positive for projection");
  }
  const Eigen::Vector2d s = project_normalized(p_cam);
  return denormalize_point(s, K);
}

Eigen::Vector2d project_normalized(const Eigen::Vector3d& p_cam) {
  if (p_cam.z() <= 1e-9) {
    throw NonPositiveDepth("point depth must be positive for projection");
  }
  return {p_cam.x() / p_cam.z(), p_cam.y() / p_cam.z()};
}

Eigen::Vector2d normalize_pixel(const Eigen::Vector2d& pixel,
                                const CameraIntrinsics& K) {
  return {(pixel.x() - K.cx) / K.fx, (pixel.y() - K.cy) / K.fy};
}

Eigen::Vector2d denormalize_point(const Eigen::Vector2d& s,
                                  const CameraIntrinsics& K) {
  return {K.fx * s.x() + K.cx, K.fy * s.y() + K.cy};
}

Twist twist_adjoint(const RigidTransform& x_rc, const Twist& v_cam) {
  Twist out;
  out.angular = x_rc.rotation * v_cam.angular;
  out.linear = x_rc.rotation * v_cam.linear + skew(x_rc.translation) * out.angular;
  return out;
}

double extract_planar_theta(const Eigen::Matrix3d& r_ct) {
  return std::atan2(r_ct(0, 2) - r_ct(2, 0), -(r_ct(0, 0) + r_ct(2, 2)));
}

Eigen::Vector3d rotvec_rate(const RotationVector& r,
                            const Eigen::Vector3d& omega) {
  if (r.angle < 1e-8) {
    return omega;
  }
  const Eigen::Matrix3d nx = skew(r.axis);
  const double half = 0.5 * r.angle;
  const double c = 1.0 - sinc(r.angle) / (sinc(half) * sinc(half));
  const Eigen::Matrix3d m =
      Eigen::Matrix3d::Identity() - half * nx + c * nx * nx;
  return m * omega;
}

}  // namespace vsdock
