#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "vsdock/observer.hpp"

using namespace vsdock;

TEST_CASE("fal hand evaluations") {
  CHECK(fal(0.0, 0.5, 0.01) == doctest::Approx(0.0));
  CHECK(fal(0.04, 0.5, 0.01) == doctest::Approx(0.2));    // |e|^0.5 branch
  CHECK(fal(0.005, 0.5, 0.01) == doctest::Approx(0.05));  // linear branch
}

TEST_CASE("fal is continuous at the switching boundary") {
  for (double alpha : {0.25, 0.5, 0.75}) {
    for (double delta : {0.001, 0.01, 0.1}) {
      const double at_delta = fal(delta, alpha, delta);
      const double expected = std::pow(delta, alpha);
      CHECK(std::abs(at_delta - expected) < 1e-12);
      const double just_above = fal(delta * (1.0 + 1e-12), alpha, delta);
      CHECK(std::abs(just_above - at_delta) < 1e-9);
    }
  }
}

TEST_CASE("fal is odd") {
  std::mt19937 rng(61);
  std::uniform_real_distribution<double> e(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = e(rng);
    CHECK(fal(-x, 0.75, 0.01) == doctest::Approx(-fal(x, 0.75, 0.01)));
  }
}

TEST_CASE("observer is stationary at equilibrium") {
  const int dim = 4;
  const Eigen::VectorXd meas = Eigen::VectorXd::Constant(dim, 2.0);
  EsoState eso = EsoState::from_measurement(meas);
  const EsoGains gains = EsoGains::bandwidth(dim, 10.0);
  const Eigen::MatrixXd B = Eigen::MatrixXd::Zero(dim, 2);
  const EsoState next =
      eso_step(eso, meas, Eigen::Vector2d::Zero(), B, gains, 1.0 / 60.0);
  CHECK((next.xi1 - eso.xi1).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK((next.xi2 - eso.xi2).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("constant disturbance is estimated on the scalar plant") {
  // Plant: s_dot = u + d with d = 0.1, u = 0, measured without noise.
  const double d = 0.1;
  const double dt = 1.0 / 60.0;
  const EsoGains gains = EsoGains::bandwidth(1, 10.0);
  Eigen::MatrixXd B(1, 2);
  B << 1.0, 0.0;

  double s = 0.0;
  EsoState eso = EsoState::from_measurement(Eigen::VectorXd::Zero(1));
  bool converged_by_two_seconds = true;
  for (int k = 1; k <= 60 * 6; ++k) {
    s += d * dt;
    Eigen::VectorXd meas(1);
    meas << s;
    eso = eso_step(eso, meas, Eigen::Vector2d::Zero(), B, gains, dt);
    const double t = k * dt;
    if (t >= 2.0 && std::abs(eso.xi2(0) - d) > 0.1 * d) {
      converged_by_two_seconds = false;
    }
  }
  CHECK(converged_by_two_seconds);
  CHECK(eso.xi2(0) == doctest::Approx(d).epsilon(0.05));
}

TEST_CASE("filtered state variance is below raw measurement variance") {
  // White measurement noise comparable to the depth channel of the noise
  // model; the estimate must beat the raw measurement in variance.
  const double sigma = 0.2;
  const double dt = 1.0 / 60.0;
  const EsoGains gains = EsoGains::bandwidth(1, 10.0);
  Eigen::MatrixXd B(1, 2);
  B << 1.0, 0.0;

  std::mt19937 rng(67);
  std::normal_distribution<double> noise(0.0, sigma);
  const double truth = 5.0;
  EsoState eso = EsoState::from_measurement(Eigen::VectorXd::Constant(1, truth));
  double est_var = 0.0;
  double meas_var = 0.0;
  int count = 0;
  for (int k = 0; k < 11000; ++k) {
    Eigen::VectorXd meas(1);
    meas << truth + noise(rng);
    eso = eso_step(eso, meas, Eigen::Vector2d::Zero(), B, gains, dt);
    if (k >= 1000) {  // steady state
      est_var += (eso.xi1(0) - truth) * (eso.xi1(0) - truth);
      meas_var += (meas(0) - truth) * (meas(0) - truth);
      ++count;
    }
  }
  est_var /= count;
  meas_var /= count;
  CHECK(est_var < meas_var);
}

TEST_CASE("estimate converges from a 10 percent offset within one second") {
  HybridState truth;
  truth.features = {{0.1, 0.05}, {-0.1, 0.05}, {0.1, -0.05}, {-0.1, -0.05}};
  truth.depth = 4.0;
  truth.theta = 0.1;
  const int dim = truth.dim();
  const double dt = 1.0 / 60.0;
  const EsoGains gains = EsoGains::bandwidth(dim, 10.0);

  EsoState eso;
  eso.xi1 = 1.1 * truth.to_vector();
  eso.xi2 = Eigen::VectorXd::Zero(dim);
  for (int k = 0; k < 60; ++k) {
    eso = eso_step(eso, truth, ControlInput{0.0, 0.0}, gains, dt);
  }
  CHECK((eso.xi1 - truth.to_vector()).norm() < 1e-3);
}

TEST_CASE("observer tracks the moving model state with exact inputs") {
  HybridState truth;
  truth.features = {{0.1, 0.05}, {-0.1, 0.05}, {0.1, -0.05}, {-0.1, -0.05}};
  truth.depth = 6.0;
  truth.theta = 0.05;
  const double dt = 1.0 / 60.0;
  const EsoGains gains = EsoGains::bandwidth(truth.dim(), 10.0);
  const ControlInput u{0.4, 0.05};

  EsoState eso = EsoState::from_measurement(truth.to_vector());
  for (int k = 0; k < 120; ++k) {
    // measure the current state, then advance the world one step
    eso = eso_step(eso, truth, u, gains, dt);
    truth = predict_state(truth, u, dt);
  }
  CHECK((eso.xi1 - truth.to_vector()).norm() < 2e-3);
}

TEST_CASE("theta innovation wraps across the branch cut") {
  HybridState meas;
  meas.features = {{0.0, 0.0}};
  meas.depth = 2.0;
  meas.theta = 3.1;
  EsoState eso;
  eso.xi1 = meas.to_vector();
  eso.xi1(3) = -3.1;  // equivalent angle across the cut
  eso.xi2 = Eigen::VectorXd::Zero(4);
  const EsoGains gains = EsoGains::bandwidth(4, 10.0);
  const EsoState next = eso_step(eso, meas, ControlInput{0.0, 0.0}, gains,
                                 1.0 / 60.0);
  // A wrapped innovation (~ -0.08 rad) must not slew theta by ~6 rad.
  CHECK(std::abs(next.xi1(3) - (-3.1)) < 0.2);
}

TEST_CASE("depth component resets to the measurement on underflow") {
  HybridState meas;
  meas.features = {{0.0, 0.0}};
  meas.depth = 0.05;
  meas.theta = 0.0;
  EsoState eso;
  eso.xi1 = meas.to_vector();
  eso.xi2 = Eigen::VectorXd::Zero(4);
  eso.xi2(2) = -100.0;  // large negative depth-rate disturbance estimate
  const EsoGains gains = EsoGains::bandwidth(4, 10.0);
  const EsoState next =
      eso_step(eso, meas, ControlInput{0.0, 0.0}, gains, 1.0 / 60.0);
  CHECK(next.xi1(2) == doctest::Approx(0.05));
}

TEST_CASE("gain validation rejects out-of-range parameters") {
  EsoGains g = EsoGains::bandwidth(4, 10.0);
  g.validate();
  EsoGains bad = g;
  bad.alpha1 = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = g;
  bad.delta2 = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = g;
  bad.beta1(0) = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
