#include "vsdock/observer.hpp"

#include <cmath>

namespace vsdock {

void EsoGains::validate() const {
  if (beta1.size() == 0 || beta1.size() != beta2.size()) {
    throw DimensionMismatch("ESO gain vectors must be non-empty and equal-sized");
  }
  if ((beta1.array() <= 0.0).any() || (beta2.array() <= 0.0).any()) {
    throw ConfigError("ESO gains must be positive");
  }
  if (!(alpha1 > 0.0 && alpha1 < 1.0) || !(alpha2 > 0.0 && alpha2 < 1.0)) {
    throw ConfigError("ESO exponents must lie in (0,1)");
  }
  if (!(delta1 > 0.0) || !(delta2 > 0.0)) {
    throw ConfigError("ESO linear widths must be positive");
  }
}

EsoGains EsoGains::bandwidth(int dim, double omega_o, double alpha1,
                             double alpha2, double delta) {
  EsoGains g;
  g.beta1 = Eigen::VectorXd::Constant(dim, 2.0 * omega_o);
  g.beta2 = Eigen::VectorXd::Constant(dim, omega_o * omega_o);
  g.alpha1 = alpha1;
  g.alpha2 = alpha2;
  g.delta1 = delta;
  g.delta2 = delta;
  return g;
}

EsoState EsoState::from_measurement(const Eigen::VectorXd& measured) {
  EsoState s;
  s.xi1 = measured;
  s.xi2 = Eigen::VectorXd::Zero(measured.size());
  return s;
}

double fal(double eps, double alpha, double delta) {
  if (std::abs(eps) > delta) {
    return std::pow(std::abs(eps), alpha) * (eps > 0.0 ? 1.0 : -1.0);
  }
  return eps / std::pow(delta, 1.0 - alpha);
}

Eigen::VectorXd fal(const Eigen::VectorXd& eps, double alpha, double delta) {
  Eigen::VectorXd out(eps.size());
  for (Eigen::Index i = 0; i < eps.size(); ++i) {
    out(i) = fal(eps(i), alpha, delta);
  }
  return out;
}

EsoState eso_step(const EsoState& eso, const Eigen::VectorXd& measured,
                  const Eigen::Vector2d& u, const Eigen::MatrixXd& B,
                  const EsoGains& gains, double T_s, int theta_index,
                  int depth_index) {
  if (eso.xi1.size() != measured.size() || B.rows() != measured.size()) {
    throw DimensionMismatch("observer dimensions disagree");
  }
  Eigen::VectorXd eps = eso.xi1 - measured;
  if (theta_index >= 0) {
    eps(theta_index) = wrap_angle(eps(theta_index));
  }
  EsoState out;
  out.xi1 = eso.xi1 +
            T_s * (eso.xi2 - gains.beta1.cwiseProduct(
                                 fal(eps, gains.alpha1, gains.delta1)) +
                   B * u);
  out.xi2 = eso.xi2 -
            T_s * gains.beta2.cwiseProduct(fal(eps, gains.alpha2, gains.delta2));
  if (depth_index >= 0 && !(out.xi1(depth_index) > 0.0)) {
    out.xi1(depth_index) = measured(depth_index);
  }
  return out;
}

EsoState eso_step(const EsoState& eso, const HybridState& measured,
                  const ControlInput& u, const EsoGains& gains, double T_s) {
  const HybridState estimate = HybridState::from_vector(eso.xi1);
  const Eigen::MatrixXd B = build_extended_interaction(estimate);
  const int dim = measured.dim();
  return eso_step(eso, measured.to_vector(), u.vec(), B, gains, T_s,
                  dim - 1, dim - 2);
}

EsoState eso_predict(const EsoState& eso, const Eigen::Vector2d& u,
                     const Eigen::MatrixXd& B, double T_s) {
  EsoState out;
  out.xi1 = eso.xi1 + T_s * (eso.xi2 + B * u);
  out.xi2 = eso.xi2;
  return out;
}

}  // namespace vsdock
