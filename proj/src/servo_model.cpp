#include "vsdock/servo_model.hpp"

#include <cmath>

namespace vsdock {

Eigen::VectorXd HybridState::to_vector() const {
  Eigen::VectorXd v(dim());
  for (int i = 0; i < n(); ++i) {
    v(2 * i) = features[i].x();
    v(2 * i + 1) = features[i].y();
  }
  v(2 * n()) = depth;
  v(2 * n() + 1) = theta;
  return v;
}

HybridState HybridState::from_vector(const Eigen::VectorXd& v) {
  if (v.size() < 4 || v.size() % 2 != 0) {
    throw DimensionMismatch("hybrid state vector must have even size >= 4");
  }
  HybridState s;
  const int n = int(v.size() / 2) - 1;
  s.features.resize(n);
  for (int i = 0; i < n; ++i) {
    s.features[i] = {v(2 * i), v(2 * i + 1)};
  }
  s.depth = v(2 * n);
  s.theta = v(2 * n + 1);
  return s;
}

void HybridState::validate() const {
  if (n() < 1) throw DimensionMismatch("hybrid state needs >= 1 feature");
  if (!(depth > 0.0)) throw NonPositiveDepth("hybrid state depth must be > 0");
  if (!(std::abs(theta) < M_PI)) {
    throw ConfigError("hybrid state theta must lie in (-pi, pi)");
  }
  if (!to_vector().allFinite()) {
    throw ConfigError("hybrid state has non-finite components");
  }
}

Eigen::Matrix2d interaction_point(const Eigen::Vector2d& s, double Z) {
  if (!(Z > 0.0)) {
    throw NonPositiveDepth("interaction matrix needs positive depth");
  }
  const double x = s.x();
  const double y = s.y();
  Eigen::Matrix2d L;
  L << x / Z, -(1.0 + x * x),  //
      y / Z, -x * y;
  return L;
}

double depth_rate(double x_hat, double Z, const ControlInput& u) {
  return -u.v_z + u.omega_y * x_hat * Z;
}

Eigen::MatrixXd build_extended_interaction(const HybridState& state) {
  const int n = state.n();
  Eigen::MatrixXd L(2 * n + 2, 2);
  double x_hat = 0.0;
  for (int i = 0; i < n; ++i) {
    L.block<2, 2>(2 * i, 0) = interaction_point(state.features[i], state.depth);
    x_hat += state.features[i].x();
  }
  x_hat /= double(n);
  L(2 * n, 0) = -1.0;
  L(2 * n, 1) = x_hat * state.depth;
  L(2 * n + 1, 0) = 0.0;
  L(2 * n + 1, 1) = 1.0;
  return L;
}

HybridState predict_state(const HybridState& state, const ControlInput& u,
                          double T_s) {
  return predict_state(state, u, T_s, Eigen::VectorXd());
}

HybridState predict_state(const HybridState& state, const ControlInput& u,
                          double T_s, const Eigen::VectorXd& drift) {
  if (!(T_s > 0.0)) throw ConfigError("prediction period must be positive");
  const Eigen::MatrixXd L = build_extended_interaction(state);
  Eigen::VectorXd v = state.to_vector() + T_s * (L * u.vec());
  if (drift.size() > 0) {
    if (drift.size() != v.size()) {
      throw DimensionMismatch("drift dimension does not match state");
    }
    v += T_s * drift;
  }
  if (!(v(2 * state.n()) > 0.0)) {
    throw DepthUnderflow("predicted depth is non-positive");
  }
  return HybridState::from_vector(v);
}

FeatureObservation predict_features(const FeatureObservation& obs,
                                    const ControlInput& u, double f_c,
                                    double Z, double /*theta*/,
                                    const CameraIntrinsics& K) {
  if (!(f_c > 0.0)) throw ConfigError("frame rate must be positive");
  FeatureObservation out = obs;
  for (int i = 0; i < obs.size(); ++i) {
    const Eigen::Matrix2d L = interaction_point(obs.normalized[i], Z);
    out.normalized[i] = obs.normalized[i] + (L * u.vec()) / f_c;
    out.pixels[i] = denormalize_point(out.normalized[i], K);
  }
  return out;
}

Eigen::VectorXd state_error(const HybridState& state,
                            const HybridState& desired) {
  if (state.n() != desired.n()) {
    throw DimensionMismatch("state and desired feature counts differ");
  }
  Eigen::VectorXd e = state.to_vector() - desired.to_vector();
  e(e.size() - 1) = wrap_angle(state.theta - desired.theta);
  return e;
}

}  // namespace vsdock
