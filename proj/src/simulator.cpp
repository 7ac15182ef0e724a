#include "vsdock/simulator.hpp"

#include <algorithm>
#include <cmath>

namespace vsdock {

void ScenarioConfig::validate() const {
  camera.validate();
  mount.validate(1e-9);
  marker.validate();
  if (perception_hz <= 0 || control_hz <= 0 ||
      perception_hz % control_hz != 0) {
    throw ConfigError("perception rate must be an integer multiple of the control rate");
  }
  if (!(duration > 0.0)) throw ConfigError("trial duration must be positive");
  if (noise.sigma_feature < 0.0 || noise.sigma_depth < 0.0 ||
      noise.sigma_theta < 0.0) {
    throw ConfigError("noise deviations must be non-negative");
  }
}

RobotPose step_unicycle(const RobotPose& pose, const ChassisCommand& cmd,
                        double dt) {
  if (!(dt > 0.0)) throw ConfigError("integration step must be positive");
  RobotPose out = pose;
  const double v = cmd.v_R;
  const double w = cmd.omega_R;
  if (std::abs(w) < 1e-9) {
    out.x += v * dt * std::sin(pose.heading);
    out.z -= v * dt * std::cos(pose.heading);
    out.heading += w * dt;
    return out;
  }
  const double h1 = pose.heading + w * dt;
  out.x += (v / w) * (std::cos(pose.heading) - std::cos(h1));
  out.z -= (v / w) * (std::sin(h1) - std::sin(pose.heading));
  out.heading = h1;
  return out;
}

RigidTransform camera_in_target(const RobotPose& pose,
                                const RigidTransform& mount,
                                double robot_height) {
  const double sh = std::sin(pose.heading);
  const double ch = std::cos(pose.heading);
  RigidTransform robot_in_target;
  robot_in_target.rotation << sh, ch, 0.0,  //
      0.0, 0.0, -1.0,                       //
      -ch, sh, 0.0;
  robot_in_target.translation = {pose.x, robot_height, pose.z};
  return robot_in_target * mount;
}

IdealRender render_markers_ideal(const RobotPose& pose,
                                 const MarkerModel& model,
                                 const CameraIntrinsics& K,
                                 const RigidTransform& mount,
                                 double robot_height) {
  const RigidTransform target_in_camera =
      camera_in_target(pose, mount, robot_height).inverse();
  IdealRender out;
  out.status.assign(model.size(), MarkerStatus::kVisible);
  for (int id = 0; id < model.size(); ++id) {
    const Eigen::Vector3d pc = target_in_camera.apply(model.points_target[id]);
    if (pc.z() <= 1e-9) {
      out.status[id] = MarkerStatus::kBehindCamera;
      continue;
    }
    const Eigen::Vector2d px = project_point(pc, K);
    if (px.x() < 0.0 || px.x() >= K.width || px.y() < 0.0 ||
        px.y() >= K.height) {
      out.status[id] = MarkerStatus::kOutOfFov;
      continue;
    }
    out.observation.ids.push_back(id);
    out.observation.pixels.push_back(px);
    out.observation.normalized.push_back(project_normalized(pc));
  }
  return out;
}

GrayImage render_markers_raster(const RobotPose& pose,
                                const MarkerModel& model,
                                const CameraIntrinsics& K,
                                const RigidTransform& mount,
                                double robot_height, double sigma_px,
                                double peak) {
  const IdealRender ideal =
      render_markers_ideal(pose, model, K, mount, robot_height);
  GrayImage img(K.width, K.height);
  const int radius = int(std::ceil(5.0 * sigma_px));
  const double inv2s2 = 1.0 / (2.0 * sigma_px * sigma_px);
  for (const Eigen::Vector2d& c : ideal.observation.pixels) {
    const int u0 = int(std::floor(c.x()));
    const int v0 = int(std::floor(c.y()));
    for (int v = v0 - radius; v <= v0 + radius + 1; ++v) {
      for (int u = u0 - radius; u <= u0 + radius + 1; ++u) {
        if (!img.inside(u, v)) continue;
        const double du = u - c.x();
        const double dv = v - c.y();
        const double value = peak * std::exp(-(du * du + dv * dv) * inv2s2);
        const int sum = int(img.at(u, v)) + int(std::lround(value));
        img.at(u, v) = std::uint8_t(std::min(sum, 255));
      }
    }
  }
  return img;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& s) {
  s += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = s;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic Gaussian stream keyed by (seed, tick).
class GaussianStream {
 public:
  GaussianStream(std::uint64_t seed, std::uint64_t tick)
      : state_(seed ^ (0x9e3779b97f4a7c15ULL * (tick + 1))) {
    splitmix64(state_);
    splitmix64(state_);
  }

  double uniform() {
    const std::uint64_t bits = splitmix64(state_) >> 11;  // 53 bits
    return (double(bits) + 0.5) * (1.0 / 9007199254740992.0);  // (0,1)
  }

  double gaussian() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace

HybridState measure(const HybridState& true_state, const NoiseModel& noise,
                    std::uint64_t tick) {
  GaussianStream rng(noise.seed, tick);
  HybridState out = true_state;
  for (auto& f : out.features) {
    f.x() += noise.sigma_feature * rng.gaussian();
    f.y() += noise.sigma_feature * rng.gaussian();
  }
  out.depth = std::max(0.01, out.depth + noise.sigma_depth * rng.gaussian());
  out.theta = out.theta + noise.sigma_theta * rng.gaussian();
  return out;
}

HybridState true_hybrid_state(const RobotPose& pose, const MarkerModel& model,
                              const RigidTransform& mount,
                              double robot_height) {
  const RigidTransform target_in_camera =
      camera_in_target(pose, mount, robot_height).inverse();
  HybridState s;
  s.features.resize(model.size());
  double depth = 0.0;
  for (int id = 0; id < model.size(); ++id) {
    const Eigen::Vector3d pc = target_in_camera.apply(model.points_target[id]);
    if (pc.z() <= 1e-9) {
      throw MarkerBehindCamera("marker " + std::to_string(id) +
                               " is behind the camera");
    }
    s.features[id] = project_normalized(pc);
    depth += pc.z();
  }
  s.depth = depth / double(model.size());
  s.theta = extract_planar_theta(target_in_camera.rotation);
  return s;
}

HybridState desired_state(const ScenarioConfig& cfg) {
  const RobotPose desired{cfg.desired_x, cfg.desired_z, 0.0};
  return true_hybrid_state(desired, cfg.marker, cfg.mount, cfg.robot_height);
}

std::vector<Eigen::Vector2d> desired_pixels(const ScenarioConfig& cfg) {
  const HybridState sd = desired_state(cfg);
  std::vector<Eigen::Vector2d> px(sd.features.size());
  for (size_t i = 0; i < sd.features.size(); ++i) {
    px[i] = denormalize_point(sd.features[i], cfg.camera);
  }
  return px;
}

namespace {

DisturbanceSegment active_segment(const std::vector<DisturbanceSegment>& segs,
                                  double t) {
  DisturbanceSegment active;  // zero disturbance before the first segment
  for (const auto& s : segs) {
    if (t + 1e-12 >= s.t_start) active = s;
  }
  return active;
}

struct FeatureRms {
  static double pixels(const HybridState& a, const HybridState& b,
                       const CameraIntrinsics& K) {
    double acc = 0.0;
    for (int i = 0; i < a.n(); ++i) {
      const Eigen::Vector2d d = denormalize_point(a.features[i], K) -
                                denormalize_point(b.features[i], K);
      acc += d.squaredNorm();
    }
    return std::sqrt(acc / double(a.n()));
  }
};

}  // namespace

TrialLog run_trial(const ScenarioConfig& cfg) {
  cfg.validate();
  const int n = cfg.marker.size();
  const int dim = 2 * n + 2;
  const double dt = 1.0 / double(cfg.perception_hz);
  const int ticks_per_control = cfg.perception_hz / cfg.control_hz;
  const int total_ticks = int(std::llround(cfg.duration * cfg.perception_hz));
  // The receding plan advances one prediction step per solve, so commands
  // are re-planned every T_s of wall time and held in between.
  const int controls_per_solve = std::max(
      1, int(std::llround(cfg.nmpc.T_s * cfg.control_hz)));

  NmpcConfig nmpc = cfg.nmpc;
  if (nmpc.P_diag.size() != dim) {
    nmpc = NmpcConfig::defaults(n);
  }
  nmpc.s_min = cfg.camera.normalized_min(cfg.fov_margin_px);
  nmpc.s_max = cfg.camera.normalized_max(cfg.fov_margin_px);

  const HybridState sd = desired_state(cfg);

  EsoGains gains = EsoGains::bandwidth(dim, cfg.eso.omega_feature,
                                       cfg.eso.alpha1, cfg.eso.alpha2,
                                       cfg.eso.delta);
  gains.beta1(dim - 2) = 2.0 * cfg.eso.omega_depth;
  gains.beta2(dim - 2) = cfg.eso.omega_depth * cfg.eso.omega_depth;
  gains.beta1(dim - 1) = 2.0 * cfg.eso.omega_theta;
  gains.beta2(dim - 1) = cfg.eso.omega_theta * cfg.eso.omega_theta;

  PerceptionPipeline pipeline(cfg.marker, cfg.camera, cfg.perception);

  TrialLog log;
  log.n_features = n;
  log.control_period = 1.0 / double(cfg.control_hz);
  log.records.reserve(total_ticks);

  RobotPose pose = cfg.initial;
  ControlInput u_cam;       // command held between control ticks
  ChassisCommand cmd;       // commanded chassis velocities
  std::vector<ControlInput> warm;
  bool mpc_orienting = false;  // baseline phase: position servo vs rotation
  double mpc_phase_since = 0.0;
  EsoState eso;
  bool eso_ready = false;
  HybridState measured = sd;  // placeholder until first measurement
  bool have_measurement = false;
  int lost_streak = 0;
  double converged_since = -1.0;
  double last_cost = 0.0;
  int last_iters = 0;

  for (int tick = 0; tick < total_ticks; ++tick) {
    const double t = tick * dt;
    const DisturbanceSegment dist = active_segment(cfg.disturbance, t);

    // Ground truth at this tick.
    HybridState truth;
    bool truth_ok = true;
    try {
      truth = true_hybrid_state(pose, cfg.marker, cfg.mount, cfg.robot_height);
    } catch (const MarkerBehindCamera&) {
      truth_ok = false;
    }
    if (!truth_ok) {
      throw TrialAborted("marker behind camera at t=" + std::to_string(t));
    }

    const IdealRender ideal = render_markers_ideal(
        pose, cfg.marker, cfg.camera, cfg.mount, cfg.robot_height);

    // Measurement path.
    bool lost = false;
    if (cfg.mode == MeasurementMode::kIdeal) {
      if (ideal.observation.size() < n) {
        lost = true;
      } else {
        measured = measure(truth, cfg.noise, std::uint64_t(tick));
        have_measurement = true;
      }
    } else {
      const GrayImage frame = render_markers_raster(
          pose, cfg.marker, cfg.camera, cfg.mount, cfg.robot_height,
          cfg.spot_sigma_px);
      try {
        const PerceptionResult res =
            pipeline.process(frame, u_cam.vec(), double(cfg.perception_hz), t);
        if (res.observation.size() < n) {
          lost = true;
        } else {
          HybridState from_pipeline;
          from_pipeline.features = res.observation.normalized;
          from_pipeline.depth = res.pose.depth;
          from_pipeline.theta = res.pose.theta;
          measured = measure(from_pipeline, cfg.noise, std::uint64_t(tick));
          have_measurement = true;
        }
      } catch (const Error&) {
        lost = true;
      }
    }
    if (!lost) {
      measured.depth = std::max(0.01, measured.depth + dist.drift_depth);
      measured.theta = wrap_angle(measured.theta + dist.drift_theta);
      lost_streak = 0;
    } else {
      ++lost_streak;
      if (lost_streak > cfg.dropout_budget) {
        throw TrialAborted("tracking lost beyond the dropout budget at t=" +
                           std::to_string(t));
      }
    }
    if (!have_measurement) {
      // Nothing observed yet; hold zero commands and keep integrating.
      log.records.push_back(TrialRecord{
          t, pose, truth.depth, truth.theta, 0.0, 0.0, 0.0, 0.0, u_cam, cmd,
          {}, 0.0, 0});
      pose = step_unicycle(pose,
                           camera_to_chassis(
                               ControlInput{u_cam.v_z + dist.bias_v,
                                            u_cam.omega_y + dist.bias_w},
                               cfg.mount),
                           dt);
      continue;
    }

    // Observer.
    if (!eso_ready) {
      eso = EsoState::from_measurement(measured.to_vector());
      eso_ready = true;
    } else if (lost) {
      const HybridState est = HybridState::from_vector(eso.xi1);
      eso = eso_predict(eso, u_cam.vec(), build_extended_interaction(est), dt);
      if (!(eso.xi1(2 * n) > 0.01)) {
        eso.xi1(2 * n) = std::max(0.01, measured.depth);
      }
    } else {
      eso = eso_step(eso, measured, u_cam, gains, dt);
    }
    const HybridState estimate = HybridState::from_vector(eso.xi1);

    // Control update. The reactive IBVS law runs at the control rate; the
    // predictive controllers re-plan once per prediction step and hold the
    // command in between (the executed step is dropped from the next warm
    // start).
    if (tick % ticks_per_control == 0) {
      const bool solve_tick =
          tick % (ticks_per_control * controls_per_solve) == 0;
      switch (cfg.controller) {
        case ControllerKind::kOurs: {
          if (!solve_tick) break;
          const Eigen::VectorXd drift = cfg.eso.compensate_disturbance
                                            ? eso.xi2
                                            : Eigen::VectorXd::Zero(dim);
          const ControlSolution sol =
              solve_nmpc(estimate, sd, u_cam, nmpc, warm, drift);
          u_cam = sol.u_sequence.front();
          warm = shift_warm_start(sol);
          last_cost = sol.cost;
          last_iters = sol.iterations;
          break;
        }
        case ControllerKind::kMpc: {
          if (!solve_tick) break;
          // Position-first scheme: servo the relative marker position from
          // one feature and the depth, then adjust the orientation in
          // place; the phases alternate as the measurements drift.
          const double lat = measured.features[0].x() * measured.depth -
                             sd.features[0].x() * sd.depth;
          const double dep = measured.depth - sd.depth;
          const double theta_err = wrap_angle(measured.theta - sd.theta);
          const bool near_position =
              std::abs(lat) < 0.10 && std::abs(dep) < 0.10;
          if (mpc_orienting) {
            if (std::abs(theta_err) < 0.02 || t - mpc_phase_since > 2.0) {
              mpc_orienting = false;
              mpc_phase_since = t;
            }
          } else if (near_position && std::abs(theta_err) > 0.03) {
            mpc_orienting = true;
            mpc_phase_since = t;
          }
          if (mpc_orienting) {
            u_cam = ControlInput{
                0.0, std::clamp(-2.0 * theta_err, nmpc.u_min(1),
                                nmpc.u_max(1))};
            warm.clear();
            last_cost = theta_err * theta_err;
            last_iters = 0;
          } else {
            const ControlSolution sol =
                baseline_mpc_position(measured, sd, u_cam, nmpc, warm);
            u_cam = sol.u_sequence.front();
            warm = shift_warm_start(sol);
            last_cost = sol.cost;
            last_iters = sol.iterations;
          }
          break;
        }
        case ControllerKind::kIbvs: {
          Eigen::VectorXd e(2 * n);
          Eigen::MatrixXd L(2 * n, 2);
          for (int i = 0; i < n; ++i) {
            e.segment<2>(2 * i) = measured.features[i] - sd.features[i];
            L.block<2, 2>(2 * i, 0) =
                interaction_point(measured.features[i], measured.depth);
          }
          u_cam = baseline_ibvs(e, L, cfg.ibvs_gain, nmpc.u_min, nmpc.u_max);
          last_cost = e.squaredNorm();
          last_iters = 1;
          break;
        }
      }
      cmd = camera_to_chassis(u_cam, cfg.mount);
    }

    // Log the tick.
    TrialRecord rec;
    rec.t = t;
    rec.pose = pose;
    rec.Z_true = truth.depth;
    rec.theta_true = truth.theta;
    rec.Z_meas = measured.depth;
    rec.theta_meas = measured.theta;
    rec.Z_est = estimate.depth;
    rec.theta_est = estimate.theta;
    rec.u = u_cam;
    rec.cmd = cmd;
    rec.pixels_true.resize(n);
    for (int i = 0; i < n; ++i) {
      rec.pixels_true[i] = denormalize_point(truth.features[i], cfg.camera);
    }
    rec.solver_cost = last_cost;
    rec.solver_iters = last_iters;
    log.records.push_back(std::move(rec));

    // FOV bookkeeping against the controller's visibility box.
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector2d& s = truth.features[i];
      if (s.x() < nmpc.s_min.x() || s.x() > nmpc.s_max.x() ||
          s.y() < nmpc.s_min.y() || s.y() > nmpc.s_max.y()) {
        ++log.fov_violations;
        break;
      }
    }

    // Convergence proxy on the measured state.
    const bool near = std::abs(measured.depth - sd.depth) <=
                          cfg.convergence.depth_tol &&
                      std::abs(wrap_angle(measured.theta - sd.theta)) <=
                          cfg.convergence.theta_tol &&
                      FeatureRms::pixels(measured, sd, cfg.camera) <=
                          cfg.convergence.pixel_tol;
    if (near) {
      if (converged_since < 0.0) converged_since = t;
    } else {
      converged_since = -1.0;
    }
    if (cfg.convergence.stop_on_converged && converged_since >= 0.0 &&
        t - converged_since >= cfg.convergence.dwell) {
      break;
    }

    // True motion: commanded twist plus the disturbance bias.
    const ChassisCommand executed = camera_to_chassis(
        ControlInput{u_cam.v_z + dist.bias_v, u_cam.omega_y + dist.bias_w},
        cfg.mount);
    pose = step_unicycle(pose, executed, dt);
  }

  if (log.records.empty()) {
    throw TrialAborted("trial produced no records");
  }
  log.t_task = log.records.back().t - log.records.front().t + dt;

  // Terminal convergence flag from the true state.
  const TrialRecord& last = log.records.back();
  HybridState terminal_truth = true_hybrid_state(last.pose, cfg.marker,
                                                 cfg.mount, cfg.robot_height);
  log.converged =
      std::abs(terminal_truth.depth - sd.depth) <= cfg.convergence.depth_tol &&
      std::abs(wrap_angle(terminal_truth.theta - sd.theta)) <=
          cfg.convergence.theta_tol &&
      FeatureRms::pixels(terminal_truth, sd, cfg.camera) <=
          cfg.convergence.pixel_tol;
  return log;
}

}  // namespace vsdock
