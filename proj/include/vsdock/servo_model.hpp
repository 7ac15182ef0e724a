#pragma once

#include <Eigen/Core>
#include <vector>

#include "vsdock/geometry.hpp"
#include "vsdock/perception.hpp"

namespace vsdock {

// Extended visual-servoing state [x_1, y_1, ..., x_n, y_n, Z, theta]:
// normalized feature coordinates, shared depth, and the signed relative
// orientation about the camera Y axis (0 at the docked pose).
struct HybridState {
  std::vector<Eigen::Vector2d> features;
  double depth = 0.0;
  double theta = 0.0;

  int n() const { return int(features.size()); }
  int dim() const { return 2 * n() + 2; }

  Eigen::VectorXd to_vector() const;
  static HybridState from_vector(const Eigen::VectorXd& v);

  void validate() const;
};

// Camera-frame control input restricted by the planar mount: forward
// velocity along the optical axis and yaw rate about camera Y.
struct ControlInput {
  double v_z = 0.0;
  double omega_y = 0.0;

  Eigen::Vector2d vec() const { return {v_z, omega_y}; }
};

// 2x2 per-point interaction block for the reduced twist [v_z, omega_y].
Eigen::Matrix2d interaction_point(const Eigen::Vector2d& s, double Z);

// Depth kinematics: dZ/dt given the mean horizontal feature coordinate.
double depth_rate(double x_hat, double Z, const ControlInput& u);

// Stacked (2n+2)x2 interaction matrix: per-point blocks, a depth row
// [-1, x_hat*Z], and the orientation row [0, 1].
Eigen::MatrixXd build_extended_interaction(const HybridState& state);

// One forward-Euler step of the extended model with the interaction matrix
// frozen at the current state. `drift` (optional, state-units/s) adds a
// constant rate to every channel. Throws DepthUnderflow if the predicted
// depth is non-positive.
HybridState predict_state(const HybridState& state, const ControlInput& u,
                          double T_s);
HybridState predict_state(const HybridState& state, const ControlInput& u,
                          double T_s, const Eigen::VectorXd& drift);

// One-frame feature prediction in pixel coordinates for match gating.
FeatureObservation predict_features(const FeatureObservation& obs,
                                    const ControlInput& u, double f_c,
                                    double Z, double theta,
                                    const CameraIntrinsics& K);

// Componentwise state error with the orientation component wrapped into
// (-pi, pi]. Requires matching dimension and feature ordering.
Eigen::VectorXd state_error(const HybridState& state,
                            const HybridState& desired);

}  // namespace vsdock
