#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "vsdock/servo_model.hpp"

namespace vsdock {

struct NmpcConfig {
  int horizon = 20;  // prediction steps of T_s each
  double T_s = 0.2;  // Euler step of the prediction model
  // Inputs are optimized as horizon/move_block moves, each held for
  // move_block consecutive steps. The returned u_sequence is still one
  // input per step.
  int move_block = 1;
  Eigen::VectorXd P_diag;  // terminal weight diagonal, size 2n+2
  Eigen::Matrix2d R = Eigen::Matrix2d::Identity();
  Eigen::Vector2d s_min{-1.0, -1.0};
  Eigen::Vector2d s_max{1.0, 1.0};
  Eigen::Vector2d u_min{-0.8, -0.8};
  Eigen::Vector2d u_max{0.8, 0.8};
  Eigen::Vector2d du_min{-0.2, -0.2};
  Eigen::Vector2d du_max{0.2, 0.2};
  double Z_safe = 0.5;
  double Z_margin = 1e-3;  // Z_i >= Z_safe + margin
  int sqp_iters = 40;
  double tol = 1e-8;
  double penalty_init = 1e2;
  double penalty_growth = 10.0;
  double penalty_max = 1e12;

  void validate(int state_dim) const;

  // Default weights for an n-feature state: 50 per feature coordinate,
  // 10 on depth, 100 on orientation; R = I.
  static NmpcConfig defaults(int n_features);
};

enum class SolveStatus {
  kConverged,
  kMaxIterations,  // best-so-far returned
  kInfeasible,     // state constraints could not be met within tolerance
};

struct ControlSolution {
  std::vector<ControlInput> u_sequence;
  std::vector<HybridState> predicted_states;  // horizon + 1 entries
  double cost = 0.0;                          // terminal + control terms
  double kkt_residual = 0.0;
  int iterations = 0;
  SolveStatus status = SolveStatus::kConverged;
};

struct ChassisCommand {
  double v_R = 0.0;
  double omega_R = 0.0;
};

// Receding-horizon solve of the docking problem: terminal-cost objective
// over the Euler prediction model, with input and rate boxes enforced by
// projection and FOV/depth constraints by escalated hinge penalties.
// `drift` (optional, state-units/s) enters the prediction model as a
// constant rate on every channel. Deterministic.
ControlSolution solve_nmpc(const HybridState& initial,
                           const HybridState& desired,
                           const ControlInput& previous_u,
                           const NmpcConfig& cfg,
                           const std::vector<ControlInput>& warm_start = {},
                           const Eigen::VectorXd& drift = Eigen::VectorXd());

// Closed-loop warm start: drop the executed input, repeat the last one.
std::vector<ControlInput> shift_warm_start(const ControlSolution& previous);

// Maps the camera-frame input through the mount adjoint and extracts the
// unicycle pair (forward linear, vertical angular). Throws NonPlanarMount
// unless the camera Y axis is parallel to the robot Z axis.
ChassisCommand camera_to_chassis(const ControlInput& u,
                                 const RigidTransform& x_rc);

// Classic feature-error pseudo-inverse law u = -lambda * pinv(L) * e,
// clamped to the input box. Throws RankDeficient when L has column rank < 2.
ControlInput baseline_ibvs(const Eigen::VectorXd& error,
                           const Eigen::MatrixXd& L_stack, double lambda,
                           const Eigen::Vector2d& u_min,
                           const Eigen::Vector2d& u_max);

// Position-style baseline: identical solver, but the terminal cost
// penalizes the camera-frame marker position recovered from one point
// feature and the depth; the orientation stays uncontrolled.
ControlSolution baseline_mpc_position(
    const HybridState& initial, const HybridState& desired,
    const ControlInput& previous_u, const NmpcConfig& cfg,
    const std::vector<ControlInput>& warm_start = {});

}  // namespace vsdock
