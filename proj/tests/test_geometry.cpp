#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>
#include <random>

#include "vsdock/geometry.hpp"

using namespace vsdock;

namespace {

CameraIntrinsics test_camera() {
  CameraIntrinsics K;
  K.fx = 500.0;
  K.fy = 500.0;
  K.cx = 640.0;
  K.cy = 512.0;
  K.width = 1280;
  K.height = 1024;
  return K;
}

RigidTransform random_transform(std::mt19937& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  const Eigen::Vector3d axis =
      Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
  std::uniform_real_distribution<double> angle(-M_PI, M_PI);
  RigidTransform out;
  out.rotation = Eigen::AngleAxisd(angle(rng), axis).toRotationMatrix();
  out.translation = {g(rng), g(rng), g(rng)};
  return out;
}

}  // namespace

TEST_CASE("projection at the principal point") {
  const auto K = test_camera();
  const Eigen::Vector2d px = project_point({0.0, 0.0, 2.0}, K);
  CHECK(px.x() == doctest::Approx(640.0));
  CHECK(px.y() == doctest::Approx(512.0));
}

TEST_CASE("projection off axis") {
  const auto K = test_camera();
  const Eigen::Vector2d px = project_point({1.0, 0.0, 2.0}, K);
  CHECK(px.x() == doctest::Approx(890.0));
  CHECK(px.y() == doctest::Approx(512.0));
}

TEST_CASE("projection rejects points behind the camera") {
  const auto K = test_camera();
  CHECK_THROWS_AS(project_point({0.0, 0.0, -1.0}, K), NonPositiveDepth);
  CHECK_THROWS_AS(project_point({0.0, 0.0, 0.0}, K), NonPositiveDepth);
}

TEST_CASE("normalize_pixel inverts the pixel stage") {
  const auto K = test_camera();
  const Eigen::Vector2d s0 = normalize_pixel({640.0, 512.0}, K);
  CHECK(s0.x() == doctest::Approx(0.0));
  CHECK(s0.y() == doctest::Approx(0.0));
  const Eigen::Vector2d s1 = normalize_pixel({890.0, 512.0}, K);
  CHECK(s1.x() == doctest::Approx(0.5));
  CHECK(s1.y() == doctest::Approx(0.0));
}

TEST_CASE("projection round trip is exact for depths in [0.1, 100]") {
  const auto K = test_camera();
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> xy(-3.0, 3.0);
  std::uniform_real_distribution<double> z(0.1, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d p(xy(rng), xy(rng), z(rng));
    const Eigen::Vector2d s = normalize_pixel(project_point(p, K), K);
    CHECK(std::abs(s.x() - p.x() / p.z()) < 1e-12);
    CHECK(std::abs(s.y() - p.y() / p.z()) < 1e-12);
  }
}

TEST_CASE("identity adjoint is the identity map") {
  RigidTransform id;
  Twist v;
  v.linear = {0.1, -0.2, 0.3};
  v.angular = {-0.4, 0.5, -0.6};
  const Twist out = twist_adjoint(id, v);
  CHECK((out.linear - v.linear).norm() == doctest::Approx(0.0));
  CHECK((out.angular - v.angular).norm() == doctest::Approx(0.0));
}

TEST_CASE("pure rotation rotates the linear part and keeps zero angular") {
  RigidTransform x;
  x.rotation = Eigen::AngleAxisd(0.7, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  Twist v;
  v.linear = {1.0, 0.0, 0.0};
  const Twist out = twist_adjoint(x, v);
  CHECK((out.linear - x.rotation * v.linear).norm() == doctest::Approx(0.0));
  CHECK(out.angular.norm() == doctest::Approx(0.0));
}

TEST_CASE("translation couples angular velocity into the linear part") {
  // [t]x R omega with t = (0,0,0.1), R = I, omega = (0,1,0):
  // (0,0,0.1) x (0,1,0) = (-0.1, 0, 0).
  RigidTransform x;
  x.translation = {0.0, 0.0, 0.1};
  Twist v;
  v.angular = {0.0, 1.0, 0.0};
  const Twist out = twist_adjoint(x, v);
  CHECK(out.linear.x() == doctest::Approx(-0.1));
  CHECK(out.linear.y() == doctest::Approx(0.0));
  CHECK(out.linear.z() == doctest::Approx(0.0));
  CHECK((out.angular - v.angular).norm() == doctest::Approx(0.0));
}

TEST_CASE("adjoint composes over transform composition") {
  std::mt19937 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform a = random_transform(rng);
    const RigidTransform b = random_transform(rng);
    Twist v;
    v.linear = {g(rng), g(rng), g(rng)};
    v.angular = {g(rng), g(rng), g(rng)};
    const Twist lhs = twist_adjoint(a * b, v);
    const Twist rhs = twist_adjoint(a, twist_adjoint(b, v));
    CHECK((lhs.linear - rhs.linear).norm() < 1e-9);
    CHECK((lhs.angular - rhs.angular).norm() < 1e-9);
  }
}

TEST_CASE("rotvec_rate small-angle limit is the identity") {
  RotationVector r;
  r.axis = Eigen::Vector3d::UnitX();
  r.angle = 1e-10;
  const Eigen::Vector3d w(0.3, -0.2, 0.5);
  CHECK((rotvec_rate(r, w) - w).norm() < 1e-12);
}

TEST_CASE("rotvec_rate is the identity for co-axial rotation") {
  RotationVector r;
  r.axis = Eigen::Vector3d::UnitY();
  r.angle = 1.3;
  const Eigen::Vector3d w(0.0, 0.7, 0.0);
  CHECK((rotvec_rate(r, w) - w).norm() < 1e-12);

  std::mt19937 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    RotationVector rr;
    rr.axis = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
    rr.angle = std::abs(g(rng));
    const Eigen::Vector3d ww = 0.9 * rr.axis;
    CHECK((rotvec_rate(rr, ww) - ww).norm() < 1e-12);
  }
}

TEST_CASE("rotvec_rate matches the finite-difference log-map rate") {
  // Oracle: integrate R(t+h) = exp(h*[w]x) * R(t) (spatial rate convention)
  // and difference the rotation vectors.
  std::mt19937 rng(19);
  std::normal_distribution<double> g(0.0, 1.0);
  const double h = 1e-6;
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d axis = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
    std::uniform_real_distribution<double> ang(0.05, 2.8);
    const double angle = ang(rng);
    const Eigen::Vector3d w(g(rng), g(rng), g(rng));

    const Eigen::Matrix3d R0 = exp_rotation(angle * axis);
    const Eigen::Matrix3d R1 = exp_rotation(h * w) * R0;
    const Eigen::Vector3d fd = (log_rotation(R1) - log_rotation(R0)) / h;

    RotationVector r;
    r.axis = axis;
    r.angle = angle;
    const Eigen::Vector3d predicted = rotvec_rate(r, w);
    CHECK((predicted - fd).norm() < 1e-4 * std::max(1.0, fd.norm()));
  }
}

TEST_CASE("default mount maps camera forward to robot forward") {
  const RigidTransform mount = RigidTransform::default_mount();
  mount.validate();
  CHECK((mount.rotation * Eigen::Vector3d::UnitZ() - Eigen::Vector3d::UnitX())
            .norm() == doctest::Approx(0.0));
  // camera Y (down) is anti-parallel to robot Z (up)
  CHECK((mount.rotation * Eigen::Vector3d::UnitY() + Eigen::Vector3d::UnitZ())
            .norm() == doctest::Approx(0.0));
}

TEST_CASE("extract_planar_theta is zero at the frontal pose and signed") {
  CHECK(extract_planar_theta(rotation_y(M_PI)) == doctest::Approx(0.0));
  for (double theta : {-0.8, -0.2, 0.3, 1.1}) {
    // R^C_T = R_y(pi - theta) under the planar convention.
    const Eigen::Matrix3d r_ct = rotation_y(M_PI - theta);
    CHECK(extract_planar_theta(r_ct) == doctest::Approx(theta));
  }
}

TEST_CASE("wrap_angle lands in (-pi, pi]") {
  CHECK(wrap_angle(3.1 - (-3.1)) == doctest::Approx(6.2 - 2.0 * M_PI));
  CHECK(wrap_angle(M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(-M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(0.1) == doctest::Approx(0.1));
}
