#pragma once

#include <Eigen/Core>

#include "vsdock/servo_model.hpp"

namespace vsdock {

// Gains of the nonlinear extended state observer. beta vectors are
// per-channel; alpha exponents lie in (0,1) and delta widths bound the
// linear interval of fal.
struct EsoGains {
  Eigen::VectorXd beta1;
  Eigen::VectorXd beta2;
  double alpha1 = 0.75;
  double alpha2 = 0.5;
  double delta1 = 0.01;
  double delta2 = 0.01;

  void validate() const;

  // Bandwidth tuning: beta1 = 2*omega_o, beta2 = omega_o^2 on every channel.
  static EsoGains bandwidth(int dim, double omega_o, double alpha1 = 0.75,
                            double alpha2 = 0.5, double delta = 0.01);
};

// Observer state: filtered state estimate and estimated total disturbance
// (state-units per second).
struct EsoState {
  Eigen::VectorXd xi1;
  Eigen::VectorXd xi2;

  static EsoState from_measurement(const Eigen::VectorXd& measured);
};

// Piecewise correction function: |e|^alpha*sgn(e) outside the delta band,
// linear inside. Continuous and odd.
double fal(double eps, double alpha, double delta);

Eigen::VectorXd fal(const Eigen::VectorXd& eps, double alpha, double delta);

// One Euler step of the observer against a measured state vector. B is the
// nominal input matrix (dim x 2), u the applied control. theta_index, when
// >= 0, selects the channel whose innovation is wrapped as an angle;
// depth_index, when >= 0, selects the channel reset to the measurement on
// underflow.
EsoState eso_step(const EsoState& eso, const Eigen::VectorXd& measured,
                  const Eigen::Vector2d& u, const Eigen::MatrixXd& B,
                  const EsoGains& gains, double T_s, int theta_index = -1,
                  int depth_index = -1);

// Hybrid-state convenience wrapper; B defaults to the extended interaction
// matrix evaluated at the current estimate.
EsoState eso_step(const EsoState& eso, const HybridState& measured,
                  const ControlInput& u, const EsoGains& gains, double T_s);

// Open-loop propagation for dropout frames (zero innovation).
EsoState eso_predict(const EsoState& eso, const Eigen::Vector2d& u,
                     const Eigen::MatrixXd& B, double T_s);

}  // namespace vsdock
