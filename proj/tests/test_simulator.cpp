#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vsdock/harness.hpp"
#include "vsdock/perception.hpp"
#include "vsdock/simulator.hpp"

using namespace vsdock;

namespace {

ScenarioConfig quiet_scenario() {
  ScenarioConfig cfg;
  cfg.initial = {0.0, 6.0, 0.0};
  return cfg;
}

bool records_equal(const TrialLog& a, const TrialLog& b) {
  if (a.records.size() != b.records.size()) return false;
  for (size_t i = 0; i < a.records.size(); ++i) {
    const TrialRecord& x = a.records[i];
    const TrialRecord& y = b.records[i];
    if (x.t != y.t || x.pose.x != y.pose.x || x.pose.z != y.pose.z ||
        x.pose.heading != y.pose.heading || x.Z_true != y.Z_true ||
        x.theta_true != y.theta_true || x.Z_meas != y.Z_meas ||
        x.theta_meas != y.theta_meas || x.Z_est != y.Z_est ||
        x.theta_est != y.theta_est || x.u.v_z != y.u.v_z ||
        x.u.omega_y != y.u.omega_y || x.cmd.v_R != y.cmd.v_R ||
        x.cmd.omega_R != y.cmd.omega_R) {
      return false;
    }
    for (size_t k = 0; k < x.pixels_true.size(); ++k) {
      if (x.pixels_true[k] != y.pixels_true[k]) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("unicycle straight-line step") {
  const RobotPose out = step_unicycle({0.0, 6.0, 0.0}, {1.0, 0.0}, 0.05);
  CHECK(out.x == doctest::Approx(0.0));
  CHECK(out.z == doctest::Approx(5.95));  // 0.05 m toward the marker
  CHECK(out.heading == doctest::Approx(0.0));
}

TEST_CASE("unicycle spins in place") {
  const RobotPose out = step_unicycle({1.0, 3.0, 0.2}, {0.0, 1.0}, 0.1);
  CHECK(out.x == doctest::Approx(1.0));
  CHECK(out.z == doctest::Approx(3.0));
  CHECK(out.heading == doctest::Approx(0.3));
}

TEST_CASE("unicycle closes a circle exactly") {
  const RobotPose start{0.5, 4.0, 0.3};
  // One exact-arc step over the whole revolution...
  RobotPose one = step_unicycle(start, {1.0, 1.0}, 2.0 * M_PI);
  CHECK(std::abs(one.x - start.x) < 1e-9);
  CHECK(std::abs(one.z - start.z) < 1e-9);
  // ...and the same circle composed from many steps.
  RobotPose pose = start;
  const int steps = 720;
  for (int i = 0; i < steps; ++i) {
    pose = step_unicycle(pose, {1.0, 1.0}, 2.0 * M_PI / steps);
  }
  CHECK(std::abs(pose.x - start.x) < 1e-9);
  CHECK(std::abs(pose.z - start.z) < 1e-9);
  CHECK(std::abs(wrap_angle(pose.heading - start.heading)) < 1e-9);
}

TEST_CASE("zero command preserves the pose exactly") {
  const RobotPose start{0.1, 2.0, -0.4};
  const RobotPose out = step_unicycle(start, {0.0, 0.0}, 1.0 / 60.0);
  CHECK(out.x == start.x);
  CHECK(out.z == start.z);
  CHECK(out.heading == start.heading);
}

TEST_CASE("relative orientation equals minus the heading") {
  const ScenarioConfig cfg = quiet_scenario();
  for (double heading : {-0.5, -0.1, 0.0, 0.2, 0.6}) {
    const HybridState s = true_hybrid_state({0.3, 5.0, heading}, cfg.marker,
                                            cfg.mount, cfg.robot_height);
    CHECK(s.theta == doctest::Approx(-heading).epsilon(1e-12));
  }
}

TEST_CASE("frontal render is symmetric about the principal point") {
  const ScenarioConfig cfg = quiet_scenario();
  const IdealRender r = render_markers_ideal({0.0, 2.0, 0.0}, cfg.marker,
                                             cfg.camera, cfg.mount, 0.0);
  REQUIRE(r.observation.size() == 4);
  // ids 0/1 mirror horizontally, 0/2 vertically
  const auto& px = r.observation.pixels;
  CHECK(px[0].x() - cfg.camera.cx == doctest::Approx(cfg.camera.cx - px[1].x()));
  CHECK(px[0].y() == doctest::Approx(px[1].y()));
  CHECK(px[0].x() == doctest::Approx(px[2].x()));
  CHECK(px[0].y() - cfg.camera.cy == doctest::Approx(cfg.camera.cy - px[3].y()));
}

TEST_CASE("raster render recovers ideal centroids within 0.1 px") {
  const ScenarioConfig cfg = quiet_scenario();
  const RobotPose pose{0.4, 3.0, -0.15};
  const IdealRender ideal = render_markers_ideal(pose, cfg.marker, cfg.camera,
                                                 cfg.mount, 0.0);
  REQUIRE(ideal.observation.size() == 4);
  const GrayImage img = render_markers_raster(pose, cfg.marker, cfg.camera,
                                              cfg.mount, 0.0, 1.5);
  const auto blobs = detect_blobs(threshold_image(img, 128), 3);
  REQUIRE(blobs.size() == 4);
  for (const auto& ideal_px : ideal.observation.pixels) {
    double best = 1e9;
    for (const auto& b : blobs) {
      best = std::min(best, (b.centroid - ideal_px).norm());
    }
    CHECK(best < 0.1);
  }
}

TEST_CASE("markers outside the image are flagged per point") {
  const ScenarioConfig cfg = quiet_scenario();
  // Close-in pose with lateral, height and yaw offsets: exactly one corner
  // crosses the image border.
  const IdealRender r = render_markers_ideal({0.3, 0.4, 0.16}, cfg.marker,
                                             cfg.camera, cfg.mount, 0.3);
  int visible = 0;
  int flagged = 0;
  for (const MarkerStatus s : r.status) {
    if (s == MarkerStatus::kVisible) ++visible;
    if (s == MarkerStatus::kOutOfFov) ++flagged;
  }
  CHECK(r.observation.size() == visible);
  CHECK(visible == 3);
  CHECK(flagged == 1);

  // Pure yaw drops whole columns and eventually puts markers behind the
  // camera; the flags follow.
  const IdealRender r2 = render_markers_ideal({0.8, 1.2, 0.45}, cfg.marker,
                                              cfg.camera, cfg.mount, 0.0);
  int out = 0;
  for (const MarkerStatus s : r2.status) {
    if (s == MarkerStatus::kOutOfFov) ++out;
  }
  CHECK(r2.observation.size() == 2);
  CHECK(out == 2);
}

TEST_CASE("measure with zero sigmas is the identity") {
  const ScenarioConfig cfg = quiet_scenario();
  const HybridState truth = true_hybrid_state(cfg.initial, cfg.marker,
                                              cfg.mount, 0.0);
  const HybridState out = measure(truth, NoiseModel{}, 17);
  CHECK((out.to_vector() - truth.to_vector()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("measurement noise matches the configured deviation") {
  NoiseModel noise;
  noise.sigma_theta = M_PI / 60.0;
  noise.seed = 99;
  HybridState truth;
  truth.features = {{0.0, 0.0}};
  truth.depth = 3.0;
  truth.theta = 0.0;
  double sum = 0.0;
  double sum2 = 0.0;
  const int n = 100000;
  for (int tick = 0; tick < n; ++tick) {
    const double draw = measure(truth, noise, tick).theta;
    sum += draw;
    sum2 += draw * draw;
  }
  const double mean = sum / n;
  const double stddev = std::sqrt(sum2 / n - mean * mean);
  CHECK(std::abs(stddev - M_PI / 60.0) < 0.02 * M_PI / 60.0);
}

TEST_CASE("measurement draws are deterministic per seed and tick") {
  NoiseModel noise;
  noise.sigma_feature = 0.001;
  noise.sigma_depth = 0.2;
  noise.sigma_theta = 0.05;
  noise.seed = 7;
  HybridState truth;
  truth.features = {{0.1, -0.1}, {0.2, 0.0}};
  truth.depth = 4.0;
  truth.theta = 0.1;
  const HybridState a = measure(truth, noise, 123);
  const HybridState b = measure(truth, noise, 123);
  CHECK((a.to_vector() - b.to_vector()).cwiseAbs().maxCoeff() == 0.0);
  const HybridState c = measure(truth, noise, 124);
  CHECK((a.to_vector() - c.to_vector()).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("measured depth clamps above 1 cm") {
  NoiseModel noise;
  noise.sigma_depth = 5.0;
  noise.seed = 3;
  HybridState truth;
  truth.features = {{0.0, 0.0}};
  truth.depth = 0.05;
  truth.theta = 0.0;
  for (int tick = 0; tick < 100; ++tick) {
    CHECK(measure(truth, noise, tick).depth >= 0.01);
  }
}

TEST_CASE("zero-noise docking trial converges from (6,0,0)") {
  const ScenarioConfig cfg = quiet_scenario();
  const TrialLog log = run_trial(cfg);
  const TrialMetrics m = compute_metrics(log, cfg);
  CHECK(m.e_n < 0.02);
  CHECK(m.e_t < 0.02);
  CHECK(m.e_theta < 0.5 * M_PI / 180.0);
  CHECK(log.fov_violations == 0);
  CHECK(log.converged);
}

TEST_CASE("theta departs and reconverges from a lateral start") {
  ScenarioConfig cfg = quiet_scenario();
  cfg.initial = {2.0, 8.0, 0.0};
  const TrialLog log = run_trial(cfg);
  double max_theta = 0.0;
  for (const TrialRecord& r : log.records) {
    max_theta = std::max(max_theta, std::abs(r.theta_true));
  }
  CHECK(max_theta > 5.0 * M_PI / 180.0);  // transient departure
  CHECK(std::abs(log.records.back().theta_true) < 1.0 * M_PI / 180.0);
  CHECK(log.fov_violations == 0);
}

TEST_CASE("trials are bitwise reproducible") {
  ScenarioConfig cfg = quiet_scenario();
  cfg.initial = {1.0, 7.0, -0.2};
  cfg.noise = {0.001, 0.2, M_PI / 60.0, 42};
  cfg.duration = 5.0;
  const TrialLog a = run_trial(cfg);
  const TrialLog b = run_trial(cfg);
  CHECK(records_equal(a, b));
}

TEST_CASE("ideal measurement equals the geometric ground truth") {
  ScenarioConfig cfg = quiet_scenario();
  cfg.duration = 1.0;
  const TrialLog log = run_trial(cfg);
  for (const TrialRecord& r : log.records) {
    CHECK(r.Z_meas == doctest::Approx(r.Z_true).epsilon(1e-12));
    CHECK(r.theta_meas == doctest::Approx(r.theta_true).epsilon(1e-12));
  }
}

TEST_CASE("losing the marker beyond the dropout budget aborts the trial") {
  ScenarioConfig cfg = quiet_scenario();
  cfg.initial = {0.0, 2.0, 1.5};  // marker far outside the field of view
  cfg.duration = 5.0;
  CHECK_THROWS_AS(run_trial(cfg), TrialAborted);
}

TEST_CASE("raster-mode trial matches the ideal-mode trajectory closely") {
  ScenarioConfig ideal = quiet_scenario();
  ideal.duration = 4.0;
  ScenarioConfig raster = ideal;
  raster.mode = MeasurementMode::kRaster;
  const TrialLog a = run_trial(ideal);
  const TrialLog b = run_trial(raster);
  REQUIRE(a.records.size() == b.records.size());
  CHECK(std::abs(a.records.back().pose.z - b.records.back().pose.z) < 0.02);
  CHECK(std::abs(a.records.back().pose.x - b.records.back().pose.x) < 0.02);
}

TEST_CASE("piecewise disturbance segments activate by time") {
  ScenarioConfig cfg = quiet_scenario();
  cfg.duration = 2.0;
  cfg.disturbance = {{1.0, 0.0, 0.0, 0.5, 0.0}};  // depth drift after 1 s
  const TrialLog log = run_trial(cfg);
  for (const TrialRecord& r : log.records) {
    if (r.t < 1.0 - 1e-9) {
      CHECK(r.Z_meas == doctest::Approx(r.Z_true).epsilon(1e-12));
    } else {
      CHECK(r.Z_meas == doctest::Approx(r.Z_true + 0.5).epsilon(1e-9));
    }
  }
}
