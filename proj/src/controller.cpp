#include "vsdock/controller.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

namespace vsdock {

void NmpcConfig::validate(int state_dim) const {
  if (horizon < 1) throw ConfigError("NMPC horizon must be >= 1");
  if (!(T_s > 0.0)) throw ConfigError("NMPC period must be positive");
  if (move_block < 1 || horizon % move_block != 0) {
    throw ConfigError("move_block must divide the horizon");
  }
  if (P_diag.size() != state_dim) {
    throw DimensionMismatch("terminal weight size does not match state");
  }
  if ((P_diag.array() < 0.0).any()) {
    throw ConfigError("terminal weights must be non-negative");
  }
  Eigen::LLT<Eigen::Matrix2d> llt(R);
  if (llt.info() != Eigen::Success) {
    throw ConfigError("control weight R must be positive definite");
  }
  for (int c = 0; c < 2; ++c) {
    if (s_min(c) > s_max(c) || u_min(c) > u_max(c) || du_min(c) > du_max(c)) {
      throw ConfigError("constraint bounds must be ordered");
    }
  }
  if (!(Z_safe > 0.0)) throw ConfigError("Z_safe must be positive");
}

NmpcConfig NmpcConfig::defaults(int n_features) {
  NmpcConfig cfg;
  const int dim = 2 * n_features + 2;
  cfg.P_diag = Eigen::VectorXd::Constant(dim, 50.0);
  cfg.P_diag(dim - 2) = 10.0;
  cfg.P_diag(dim - 1) = 100.0;
  return cfg;
}

namespace {

constexpr double kDepthFloor = 1e-3;
constexpr double kConstraintTol = 1e-6;

struct Problem {
  int n = 0;        // feature count
  int m = 0;        // state dimension
  int np = 0;       // horizon steps
  int moves = 0;    // decision inputs (np / move_block)
  int block = 1;    // steps per move
  Eigen::VectorXd s0;
  Eigen::VectorXd sd;
  Eigen::Vector2d prev_u;
  Eigen::VectorXd drift;  // size m (zero when absent)
  const NmpcConfig* cfg = nullptr;
  Eigen::Matrix2d R_chol;  // upper factor, R = U^T U
  // Position-servo terminal cost (the ke2017-style baseline): penalizes
  // the camera-frame marker position (x_1*Z, Z) instead of the state
  // error; orientation stays uncontrolled.
  bool position_terminal = false;
  double w_lateral = 50.0;
  double w_depth = 10.0;
};

// Sequential clamp of the move vector onto the input box linked by the
// rate box; feasible by construction for prev inside the input box.
void project_controls(const Problem& pb, Eigen::VectorXd& u) {
  const NmpcConfig& cfg = *pb.cfg;
  Eigen::Vector2d prev = pb.prev_u;
  for (int i = 0; i < pb.moves; ++i) {
    for (int c = 0; c < 2; ++c) {
      const double lo = std::max(cfg.u_min(c), prev(c) + cfg.du_min(c));
      const double hi = std::min(cfg.u_max(c), prev(c) + cfg.du_max(c));
      u(2 * i + c) = std::clamp(u(2 * i + c), lo, hi);
    }
    prev = u.segment<2>(2 * i);
  }
}

// Extended-model rate L'(s)u + drift with the depth guarded away from zero
// for off-path iterates.
Eigen::VectorXd model_rate(const Problem& pb, const Eigen::VectorXd& s,
                           const Eigen::Vector2d& u) {
  const int n = pb.n;
  const double Z = std::max(s(2 * n), kDepthFloor);
  Eigen::VectorXd rate(pb.m);
  double x_hat = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = s(2 * i);
    const double y = s(2 * i + 1);
    rate(2 * i) = (x / Z) * u(0) - (1.0 + x * x) * u(1);
    rate(2 * i + 1) = (y / Z) * u(0) - x * y * u(1);
    x_hat += x;
  }
  x_hat /= double(n);
  rate(2 * n) = -u(0) + u(1) * x_hat * Z;
  rate(2 * n + 1) = u(1);
  return rate + pb.drift;
}

// d(rate)/ds at (s, u); the theta row is identically zero.
Eigen::MatrixXd model_rate_jacobian(const Problem& pb,
                                    const Eigen::VectorXd& s,
                                    const Eigen::Vector2d& u) {
  const int n = pb.n;
  const double Z = std::max(s(2 * n), kDepthFloor);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(pb.m, pb.m);
  double x_hat = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = s(2 * i);
    const double y = s(2 * i + 1);
    A(2 * i, 2 * i) = u(0) / Z - 2.0 * x * u(1);
    A(2 * i, 2 * n) = -x * u(0) / (Z * Z);
    A(2 * i + 1, 2 * i) = -y * u(1);
    A(2 * i + 1, 2 * i + 1) = u(0) / Z - x * u(1);
    A(2 * i + 1, 2 * n) = -y * u(0) / (Z * Z);
    A(2 * n, 2 * i) = u(1) * Z / double(n);
    x_hat += x;
  }
  x_hat /= double(n);
  A(2 * n, 2 * n) = u(1) * x_hat;
  return A;
}

Eigen::MatrixXd model_input_matrix(const Problem& pb,
                                   const Eigen::VectorXd& s) {
  const int n = pb.n;
  const double Z = std::max(s(2 * n), kDepthFloor);
  Eigen::MatrixXd B(pb.m, 2);
  double x_hat = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = s(2 * i);
    const double y = s(2 * i + 1);
    B(2 * i, 0) = x / Z;
    B(2 * i, 1) = -(1.0 + x * x);
    B(2 * i + 1, 0) = y / Z;
    B(2 * i + 1, 1) = -x * y;
    x_hat += x;
  }
  x_hat /= double(n);
  B(2 * n, 0) = -1.0;
  B(2 * n, 1) = x_hat * Z;
  B(2 * n + 1, 0) = 0.0;
  B(2 * n + 1, 1) = 1.0;
  return B;
}

struct Rollout {
  Eigen::MatrixXd states;                 // m x (np+1)
  std::vector<Eigen::MatrixXd> sens;      // per step: m x 2*moves (on demand)
};

void roll(const Problem& pb, const Eigen::VectorXd& u, Rollout& out,
          bool with_sensitivities) {
  const int m = pb.m;
  const int np = pb.np;
  out.states.resize(m, np + 1);
  out.states.col(0) = pb.s0;
  if (with_sensitivities) {
    out.sens.assign(np + 1, Eigen::MatrixXd::Zero(m, 2 * pb.moves));
  }
  const double dt = pb.cfg->T_s;
  for (int i = 0; i < np; ++i) {
    const int mi = i / pb.block;
    const Eigen::Vector2d ui = u.segment<2>(2 * mi);
    const Eigen::VectorXd si = out.states.col(i);
    out.states.col(i + 1) = si + dt * model_rate(pb, si, ui);
    if (with_sensitivities) {
      const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(m, m) +
                                dt * model_rate_jacobian(pb, si, ui);
      out.sens[i + 1] = A * out.sens[i];
      out.sens[i + 1].middleCols(2 * mi, 2) += dt * model_input_matrix(pb, si);
    }
  }
}

Eigen::VectorXd terminal_error(const Problem& pb, const Eigen::VectorXd& sN) {
  Eigen::VectorXd e = sN - pb.sd;
  e(pb.m - 1) = wrap_angle(e(pb.m - 1));
  return e;
}

// Ground-plane position of the robot in the target frame reconstructed
// from the mean feature bearing, the depth, and the orientation:
//   x_T =  cos(theta) * x_hat * Z + sin(theta) * Z
//   z_T = -sin(theta) * x_hat * Z + cos(theta) * Z
Eigen::Vector2d reconstructed_position(const Problem& pb,
                                       const Eigen::VectorXd& s) {
  double x_hat = 0.0;
  for (int i = 0; i < pb.n; ++i) x_hat += s(2 * i);
  x_hat /= double(pb.n);
  const double Z = s(2 * pb.n);
  const double theta = s(2 * pb.n + 1);
  const double c = std::cos(theta);
  const double sn = std::sin(theta);
  return {c * x_hat * Z + sn * Z, -sn * x_hat * Z + c * Z};
}

// Terminal residual of the position-servo baseline: reconstructed position
// relative to the docking point.
Eigen::Vector2d position_residual(const Problem& pb,
                                  const Eigen::VectorXd& sN) {
  return reconstructed_position(pb, sN) - reconstructed_position(pb, pb.sd);
}

// Rows of d(reconstructed position)/d(state).
Eigen::Matrix<double, 2, Eigen::Dynamic> position_jacobian(
    const Problem& pb, const Eigen::VectorXd& s) {
  double x_hat = 0.0;
  for (int i = 0; i < pb.n; ++i) x_hat += s(2 * i);
  x_hat /= double(pb.n);
  const double Z = s(2 * pb.n);
  const double theta = s(2 * pb.n + 1);
  const double c = std::cos(theta);
  const double sn = std::sin(theta);
  Eigen::Matrix<double, 2, Eigen::Dynamic> D(2, pb.m);
  D.setZero();
  for (int i = 0; i < pb.n; ++i) {
    D(0, 2 * i) = c * Z / double(pb.n);
    D(1, 2 * i) = -sn * Z / double(pb.n);
  }
  D(0, 2 * pb.n) = c * x_hat + sn;
  D(1, 2 * pb.n) = -sn * x_hat + c;
  D(0, 2 * pb.n + 1) = -sn * x_hat * Z + c * Z;
  D(1, 2 * pb.n + 1) = -c * x_hat * Z - sn * Z;
  return D;
}

double objective_cost(const Problem& pb, const Eigen::VectorXd& u,
                      const Eigen::MatrixXd& states) {
  double cost = 0.0;
  if (pb.position_terminal) {
    const Eigen::Vector2d e = position_residual(pb, states.col(pb.np));
    cost += pb.w_lateral * e(0) * e(0) + pb.w_depth * e(1) * e(1);
  } else {
    const Eigen::VectorXd e = terminal_error(pb, states.col(pb.np));
    cost += e.cwiseProduct(pb.cfg->P_diag).dot(e);
  }
  for (int i = 0; i < pb.moves; ++i) {
    const Eigen::Vector2d ui = u.segment<2>(2 * i);
    cost += pb.block * ui.dot(pb.cfg->R * ui);
  }
  return cost;
}

// Hinge violations of (20c) and (20f) over the predicted trajectory.
double max_violation(const Problem& pb, const Eigen::MatrixXd& states) {
  const NmpcConfig& cfg = *pb.cfg;
  double viol = 0.0;
  for (int i = 1; i <= pb.np; ++i) {
    for (int f = 0; f < pb.n; ++f) {
      for (int c = 0; c < 2; ++c) {
        const double s = states(2 * f + c, i);
        viol = std::max(viol, s - cfg.s_max(c));
        viol = std::max(viol, cfg.s_min(c) - s);
      }
    }
    viol = std::max(viol, cfg.Z_safe + cfg.Z_margin - states(2 * pb.n, i));
  }
  return std::max(viol, 0.0);
}

double merit(const Problem& pb, const Eigen::VectorXd& u,
             const Eigen::MatrixXd& states, double mu) {
  const NmpcConfig& cfg = *pb.cfg;
  double phi = objective_cost(pb, u, states);
  for (int i = 1; i <= pb.np; ++i) {
    for (int f = 0; f < pb.n; ++f) {
      for (int c = 0; c < 2; ++c) {
        const double s = states(2 * f + c, i);
        const double over = std::max(0.0, s - cfg.s_max(c));
        const double under = std::max(0.0, cfg.s_min(c) - s);
        phi += mu * (over * over + under * under);
      }
    }
    const double zv = std::max(0.0, cfg.Z_safe + cfg.Z_margin - states(2 * pb.n, i));
    phi += mu * zv * zv;
  }
  return phi;
}

// Stacked residual vector and Jacobian of the penalized least-squares
// problem at the current iterate.
void linearize(const Problem& pb, const Eigen::VectorXd& u,
               const Rollout& ro, double mu, Eigen::VectorXd& r,
               Eigen::MatrixXd& J) {
  const NmpcConfig& cfg = *pb.cfg;
  const int nu = 2 * pb.moves;

  // Count active hinge rows first.
  int active = 0;
  for (int i = 1; i <= pb.np; ++i) {
    for (int f = 0; f < pb.n; ++f) {
      for (int c = 0; c < 2; ++c) {
        const double s = ro.states(2 * f + c, i);
        if (s > cfg.s_max(c)) ++active;
        if (s < cfg.s_min(c)) ++active;
      }
    }
    if (ro.states(2 * pb.n, i) < cfg.Z_safe + cfg.Z_margin) ++active;
  }

  const int terminal_rows = pb.position_terminal ? 2 : pb.m;
  const int rows = terminal_rows + nu + active;
  r.resize(rows);
  J.resize(rows, nu);
  J.setZero();

  // Terminal block.
  if (pb.position_terminal) {
    const Eigen::VectorXd sN = ro.states.col(pb.np);
    const Eigen::Vector2d e = position_residual(pb, sN);
    r(0) = std::sqrt(pb.w_lateral) * e(0);
    r(1) = std::sqrt(pb.w_depth) * e(1);
    const Eigen::Matrix<double, 2, Eigen::Dynamic> D =
        position_jacobian(pb, sN);
    J.row(0) = std::sqrt(pb.w_lateral) * (D.row(0) * ro.sens[pb.np]);
    J.row(1) = std::sqrt(pb.w_depth) * (D.row(1) * ro.sens[pb.np]);
  } else {
    const Eigen::VectorXd sqrt_p = pb.cfg->P_diag.cwiseSqrt();
    const Eigen::VectorXd e = terminal_error(pb, ro.states.col(pb.np));
    r.head(pb.m) = sqrt_p.cwiseProduct(e);
    J.topRows(pb.m) = sqrt_p.asDiagonal() * ro.sens[pb.np];
  }

  // Control effort block (each move is held for `block` steps).
  const double sqrt_block = std::sqrt(double(pb.block));
  for (int i = 0; i < pb.moves; ++i) {
    r.segment<2>(terminal_rows + 2 * i) =
        sqrt_block * (pb.R_chol * u.segment<2>(2 * i));
    J.block<2, 2>(terminal_rows + 2 * i, 2 * i) = sqrt_block * pb.R_chol;
  }

  // Active hinge rows.
  const double sq_mu = std::sqrt(mu);
  int row = terminal_rows + nu;
  for (int i = 1; i <= pb.np; ++i) {
    for (int f = 0; f < pb.n; ++f) {
      for (int c = 0; c < 2; ++c) {
        const int k = 2 * f + c;
        const double s = ro.states(k, i);
        if (s > cfg.s_max(c)) {
          r(row) = sq_mu * (s - cfg.s_max(c));
          J.row(row) = sq_mu * ro.sens[i].row(k);
          ++row;
        }
        if (s < cfg.s_min(c)) {
          r(row) = sq_mu * (cfg.s_min(c) - s);
          J.row(row) = -sq_mu * ro.sens[i].row(k);
          ++row;
        }
      }
    }
    const double z = ro.states(2 * pb.n, i);
    if (z < cfg.Z_safe + cfg.Z_margin) {
      r(row) = sq_mu * (cfg.Z_safe + cfg.Z_margin - z);
      J.row(row) = -sq_mu * ro.sens[i].row(2 * pb.n);
      ++row;
    }
  }
}

ControlSolution run_solver(Problem& pb,
                           const std::vector<ControlInput>& warm_start);

ControlSolution pack_solution(const Problem& pb, const Eigen::VectorXd& u,
                              const Eigen::MatrixXd& states, double kkt,
                              int iters) {
  ControlSolution sol;
  sol.u_sequence.reserve(pb.np);
  for (int i = 0; i < pb.np; ++i) {
    const int mi = i / pb.block;
    sol.u_sequence.push_back({u(2 * mi), u(2 * mi + 1)});
  }
  sol.predicted_states.reserve(pb.np + 1);
  for (int i = 0; i <= pb.np; ++i) {
    sol.predicted_states.push_back(HybridState::from_vector(states.col(i)));
  }
  sol.cost = objective_cost(pb, u, states);
  sol.kkt_residual = kkt;
  sol.iterations = iters;
  const double viol = max_violation(pb, states);
  if (viol > kConstraintTol) {
    sol.status = SolveStatus::kInfeasible;
  }
  return sol;
}

Problem build_problem(const HybridState& initial, const HybridState& desired,
                      const ControlInput& previous_u, const NmpcConfig& cfg,
                      const Eigen::VectorXd& drift) {
  initial.validate();
  if (initial.n() != desired.n()) {
    throw DimensionMismatch("initial and desired feature counts differ");
  }
  cfg.validate(initial.dim());

  Problem pb;
  pb.n = initial.n();
  pb.m = initial.dim();
  pb.np = cfg.horizon;
  pb.block = cfg.move_block;
  pb.moves = cfg.horizon / cfg.move_block;
  pb.s0 = initial.to_vector();
  pb.sd = desired.to_vector();
  pb.prev_u = {std::clamp(previous_u.v_z, cfg.u_min(0), cfg.u_max(0)),
               std::clamp(previous_u.omega_y, cfg.u_min(1), cfg.u_max(1))};
  pb.drift = drift.size() > 0 ? drift : Eigen::VectorXd::Zero(pb.m);
  if (pb.drift.size() != pb.m) {
    throw DimensionMismatch("drift dimension does not match state");
  }
  pb.cfg = &cfg;
  pb.R_chol = Eigen::LLT<Eigen::Matrix2d>(cfg.R).matrixU();
  return pb;
}

ControlSolution run_solver(Problem& pb,
                           const std::vector<ControlInput>& warm_start) {
  const NmpcConfig& cfg = *pb.cfg;
  const int nu = 2 * pb.moves;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(nu);
  if (!warm_start.empty()) {
    if (int(warm_start.size()) != pb.np) {
      throw DimensionMismatch("warm start length does not match horizon");
    }
    for (int i = 0; i < pb.moves; ++i) {
      u(2 * i) = warm_start[size_t(i) * pb.block].v_z;
      u(2 * i + 1) = warm_start[size_t(i) * pb.block].omega_y;
    }
  }
  project_controls(pb, u);

  Rollout ro;
  roll(pb, u, ro, true);
  double mu = cfg.penalty_init;
  double kkt = std::numeric_limits<double>::infinity();
  int iter = 0;
  bool converged = false;

  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  for (iter = 0; iter < cfg.sqp_iters; ++iter) {
    linearize(pb, u, ro, mu, r, J);

    Eigen::MatrixXd H = J.transpose() * J;
    H.diagonal().array() += 1e-10 * (1.0 + H.diagonal().maxCoeff());
    const Eigen::VectorXd g = J.transpose() * r;
    const Eigen::VectorXd step = H.ldlt().solve(-g);

    // Projected-gradient stationarity measure.
    Eigen::VectorXd pg = u - 2.0 * g;
    project_controls(pb, pg);
    kkt = (pg - u).lpNorm<Eigen::Infinity>();

    const double phi0 = merit(pb, u, ro.states, mu);
    double alpha = 1.0;
    bool accepted = false;
    Eigen::VectorXd u_trial;
    Rollout ro_trial;
    for (int ls = 0; ls < 30; ++ls) {
      u_trial = u + alpha * step;
      project_controls(pb, u_trial);
      roll(pb, u_trial, ro_trial, false);
      if (merit(pb, u_trial, ro_trial.states, mu) < phi0) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }

    const double viol_now = max_violation(pb, ro.states);
    if (accepted) {
      u = u_trial;
      roll(pb, u, ro, true);
    }
    const double viol = max_violation(pb, ro.states);

    if (!accepted && viol <= 0.5 * kConstraintTol) {
      converged = true;
      ++iter;
      break;
    }
    if (accepted && kkt <= cfg.tol && viol <= 0.5 * kConstraintTol) {
      converged = true;
      ++iter;
      break;
    }
    if (viol > 0.5 * kConstraintTol || viol_now > 0.5 * kConstraintTol) {
      mu = std::min(mu * cfg.penalty_growth, cfg.penalty_max);
    } else if (!accepted) {
      converged = true;
      ++iter;
      break;
    }
  }

  ControlSolution sol = pack_solution(pb, u, ro.states, kkt, iter);
  if (sol.status != SolveStatus::kInfeasible && !converged) {
    sol.status = SolveStatus::kMaxIterations;
  }
  return sol;
}

}  // namespace

ControlSolution solve_nmpc(const HybridState& initial,
                           const HybridState& desired,
                           const ControlInput& previous_u,
                           const NmpcConfig& cfg,
                           const std::vector<ControlInput>& warm_start,
                           const Eigen::VectorXd& drift) {
  Problem pb = build_problem(initial, desired, previous_u, cfg, drift);
  return run_solver(pb, warm_start);
}

std::vector<ControlInput> shift_warm_start(const ControlSolution& previous) {
  std::vector<ControlInput> warm;
  if (previous.u_sequence.empty()) return warm;
  warm.assign(previous.u_sequence.begin() + 1, previous.u_sequence.end());
  warm.push_back(previous.u_sequence.back());
  return warm;
}

ChassisCommand camera_to_chassis(const ControlInput& u,
                                 const RigidTransform& x_rc) {
  const Eigen::Vector3d cam_y_in_robot = x_rc.rotation.col(1);
  if (cam_y_in_robot.cross(Eigen::Vector3d::UnitZ()).norm() > 1e-6) {
    throw NonPlanarMount("camera Y axis is not parallel to the robot Z axis");
  }
  Twist cam;
  cam.linear = {0.0, 0.0, u.v_z};
  cam.angular = {0.0, u.omega_y, 0.0};
  const Twist robot = twist_adjoint(x_rc, cam);
  return {robot.linear.x(), robot.angular.z()};
}

ControlInput baseline_ibvs(const Eigen::VectorXd& error,
                           const Eigen::MatrixXd& L_stack, double lambda,
                           const Eigen::Vector2d& u_min,
                           const Eigen::Vector2d& u_max) {
  if (L_stack.rows() != error.size() || L_stack.cols() != 2) {
    throw DimensionMismatch("IBVS stack must be (2n)x2 and match the error");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      L_stack, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (!(svd.singularValues()(0) > 1e-12)) {
    throw RankDeficient("IBVS interaction stack carries no signal");
  }
  // Truncated pseudo-inverse: a rank-1 stack (e.g. a single centered
  // point) still yields the minimum-norm command.
  svd.setThreshold(1e-9);
  const Eigen::Vector2d raw = -lambda * svd.solve(error);
  return {std::clamp(raw(0), u_min(0), u_max(0)),
          std::clamp(raw(1), u_min(1), u_max(1))};
}

ControlSolution baseline_mpc_position(
    const HybridState& initial, const HybridState& desired,
    const ControlInput& previous_u, const NmpcConfig& cfg,
    const std::vector<ControlInput>& warm_start) {
  Problem pb =
      build_problem(initial, desired, previous_u, cfg, Eigen::VectorXd());
  pb.position_terminal = true;
  pb.w_lateral = cfg.P_diag(0);
  pb.w_depth = cfg.P_diag(pb.m - 2);
  return run_solver(pb, warm_start);
}

}  // namespace vsdock
