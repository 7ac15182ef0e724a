#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "vsdock/controller.hpp"
#include "vsdock/image.hpp"
#include "vsdock/observer.hpp"
#include "vsdock/perception.hpp"
#include "vsdock/servo_model.hpp"

namespace vsdock {

// Ground-plane pose in the target frame {T}: x lateral, z along the marker
// normal. heading 0 faces the marker; positive heading turns toward +x.
// The relative orientation state satisfies theta = -heading.
struct RobotPose {
  double x = 0.0;
  double z = 0.0;
  double heading = 0.0;
};

struct NoiseModel {
  double sigma_feature = 0.0;  // normalized-image std dev per coordinate
  double sigma_depth = 0.0;    // meters
  double sigma_theta = 0.0;    // radians
  std::uint64_t seed = 0;
};

enum class ControllerKind { kIbvs, kMpc, kOurs };
enum class MeasurementMode { kIdeal, kRaster };

// Piecewise-constant disturbance: a camera-twist bias acting on the true
// motion and a measurement drift on the depth/orientation channels.
struct DisturbanceSegment {
  double t_start = 0.0;
  double bias_v = 0.0;      // camera-frame m/s
  double bias_w = 0.0;      // camera-frame rad/s
  double drift_depth = 0.0;  // meters added to measured Z
  double drift_theta = 0.0;  // radians added to measured theta
};

struct ConvergenceCriteria {
  bool stop_on_converged = false;
  double depth_tol = 0.05;                // meters
  double pixel_tol = 5.0;                 // feature RMS px
  double theta_tol = 2.0 * M_PI / 180.0;  // radians
  double dwell = 0.5;                     // seconds
};

// Per-channel observer bandwidths: the depth channel carries by far the
// largest measurement noise and gets the slowest gains.
struct EsoParams {
  double omega_feature = 3.0;
  double omega_depth = 0.5;
  double omega_theta = 1.5;
  double alpha1 = 0.75;
  double alpha2 = 0.5;
  double delta = 0.01;
  bool compensate_disturbance = false;
};

struct ScenarioConfig {
  RobotPose initial{0.0, 6.0, 0.0};
  double desired_x = 0.0;
  double desired_z = 1.5;
  MarkerModel marker = MarkerModel::square(0.3);
  CameraIntrinsics camera{369.504, 369.504, 640.0, 512.0, 1280, 1024};
  RigidTransform mount = RigidTransform::default_mount();
  double robot_height = 0.0;  // camera/marker height difference (y_T)
  NoiseModel noise;
  ControllerKind controller = ControllerKind::kOurs;
  MeasurementMode mode = MeasurementMode::kIdeal;
  double duration = 30.0;
  int perception_hz = 60;
  int control_hz = 20;
  NmpcConfig nmpc = NmpcConfig::defaults(4);
  double fov_margin_px = 20.0;
  EsoParams eso;
  PerceptionParams perception;
  double ibvs_gain = 0.5;
  double spot_sigma_px = 1.5;
  std::vector<DisturbanceSegment> disturbance;
  ConvergenceCriteria convergence;
  int dropout_budget = 30;

  void validate() const;
};

struct TrialRecord {
  double t = 0.0;
  RobotPose pose;
  double Z_true = 0.0, theta_true = 0.0;
  double Z_meas = 0.0, theta_meas = 0.0;
  double Z_est = 0.0, theta_est = 0.0;
  ControlInput u;       // camera-frame command held over this tick
  ChassisCommand cmd;   // commanded chassis velocities
  std::vector<Eigen::Vector2d> pixels_true;  // id order, size n
  double solver_cost = 0.0;
  int solver_iters = 0;
};

struct TrialLog {
  int n_features = 0;
  double control_period = 0.05;
  std::vector<TrialRecord> records;
  int fov_violations = 0;  // perception ticks with a true feature outside (20c)
  bool converged = false;
  double t_task = 0.0;
};

// Exact-arc unicycle step (straight-line update below |omega| = 1e-9).
RobotPose step_unicycle(const RobotPose& pose, const ChassisCommand& cmd,
                        double dt);

// Camera pose in {T} for a ground-plane robot pose and mount.
RigidTransform camera_in_target(const RobotPose& pose,
                                const RigidTransform& mount,
                                double robot_height);

enum class MarkerStatus { kVisible, kOutOfFov, kBehindCamera };

struct IdealRender {
  FeatureObservation observation;          // visible subset, id order
  std::vector<MarkerStatus> status;        // per marker id
};

// Exact projected centroids of the marker array.
IdealRender render_markers_ideal(const RobotPose& pose,
                                 const MarkerModel& model,
                                 const CameraIntrinsics& K,
                                 const RigidTransform& mount,
                                 double robot_height);

// Gaussian-spot rasterization of the visible markers for perception tests.
GrayImage render_markers_raster(const RobotPose& pose,
                                const MarkerModel& model,
                                const CameraIntrinsics& K,
                                const RigidTransform& mount,
                                double robot_height, double sigma_px = 1.5,
                                double peak = 255.0);

// Additive Gaussian measurement noise, deterministic in (seed, tick).
// The measured depth is clamped above 0.01 m.
HybridState measure(const HybridState& true_state, const NoiseModel& noise,
                    std::uint64_t tick);

// Ground-truth hybrid state at a pose (requires every marker in front of
// the camera).
HybridState true_hybrid_state(const RobotPose& pose, const MarkerModel& model,
                              const RigidTransform& mount,
                              double robot_height);

// Desired docking state obtained by projecting the marker from the desired
// pose.
HybridState desired_state(const ScenarioConfig& cfg);

// Desired marker pixels at the docking pose, id order.
std::vector<Eigen::Vector2d> desired_pixels(const ScenarioConfig& cfg);

// Closed-loop docking trial: perception at perception_hz, control at
// control_hz with zero-order hold, disturbances on the true motion.
// Throws TrialAborted when tracking is lost beyond the dropout budget.
TrialLog run_trial(const ScenarioConfig& cfg);

}  // namespace vsdock
