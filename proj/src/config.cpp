#include "vsdock/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace vsdock {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

class ConfigMap {
 public:
  explicit ConfigMap(const std::string& path) : path_(path) {
    std::ifstream in(path);
    if (!in) {
      throw IoError("cannot open config file: " + path);
    }
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(path + ":" + std::to_string(lineno) +
                          ": expected key = value");
      }
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) {
        throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
      }
      values_[key] = value;
    }
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    consumed_.insert({key, true});
    return it->second;
  }

  double get_double(const std::string& key, double fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    consumed_.insert({key, true});
    try {
      size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (trim(it->second.substr(pos)).empty()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(path_ + ": key '" + key + "' is not a number: " +
                      it->second);
  }

  int get_int(const std::string& key, int fallback) {
    const double v = get_double(key, double(fallback));
    const int i = int(std::llround(v));
    if (std::abs(v - i) > 1e-12) {
      throw ConfigError(path_ + ": key '" + key + "' must be an integer");
    }
    return i;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    consumed_.insert({key, true});
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw ConfigError(path_ + ": key '" + key + "' is not an unsigned integer");
    }
  }

  bool get_bool(const std::string& key, bool fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    consumed_.insert({key, true});
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError(path_ + ": key '" + key + "' must be true/false");
  }

  std::vector<double> get_list(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) return {};
    consumed_.insert({key, true});
    std::vector<double> out;
    std::istringstream ss(it->second);
    std::string tok;
    while (ss >> tok) {
      try {
        out.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw ConfigError(path_ + ": key '" + key + "' has a non-numeric entry: " + tok);
      }
    }
    return out;
  }

  void check_consumed() const {
    for (const auto& [key, value] : values_) {
      if (!consumed_.count(key)) {
        throw ConfigError(path_ + ": unknown key '" + key + "'");
      }
    }
  }

 private:
  std::string path_;
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> consumed_;
};

constexpr double kDegToRad = M_PI / 180.0;

}  // namespace

ControllerKind controller_from_name(const std::string& name) {
  if (name == "ibvs") return ControllerKind::kIbvs;
  if (name == "mpc") return ControllerKind::kMpc;
  if (name == "ours") return ControllerKind::kOurs;
  throw ConfigError("unknown controller '" + name + "' (expected ibvs|mpc|ours)");
}

std::string controller_name(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::kIbvs: return "ibvs";
    case ControllerKind::kMpc: return "mpc";
    case ControllerKind::kOurs: return "ours";
  }
  return "?";
}

ScenarioConfig load_scenario(const std::string& path) {
  ConfigMap map(path);
  ScenarioConfig cfg;

  cfg.initial.x = map.get_double("initial.x", cfg.initial.x);
  cfg.initial.z = map.get_double("initial.z", cfg.initial.z);
  // Configured as the initial relative orientation; heading = -theta.
  cfg.initial.heading =
      -kDegToRad * map.get_double("initial.theta_deg", 0.0);
  cfg.desired_x = map.get_double("desired.x", cfg.desired_x);
  cfg.desired_z = map.get_double("desired.z", cfg.desired_z);

  const auto marker_points = map.get_list("marker.points");
  if (!marker_points.empty()) {
    if (marker_points.size() % 3 != 0 || marker_points.size() < 12) {
      throw ConfigError("marker.points needs 3 numbers per point, >= 4 points");
    }
    cfg.marker.points_target.clear();
    for (size_t i = 0; i < marker_points.size(); i += 3) {
      cfg.marker.points_target.emplace_back(
          marker_points[i], marker_points[i + 1], marker_points[i + 2]);
    }
  } else {
    cfg.marker = MarkerModel::square(map.get_double("marker.side", 0.3));
  }

  cfg.camera.fx = map.get_double("camera.fx", cfg.camera.fx);
  cfg.camera.fy = map.get_double("camera.fy", cfg.camera.fy);
  cfg.camera.cx = map.get_double("camera.cx", cfg.camera.cx);
  cfg.camera.cy = map.get_double("camera.cy", cfg.camera.cy);
  cfg.camera.width = map.get_int("camera.width", cfg.camera.width);
  cfg.camera.height = map.get_int("camera.height", cfg.camera.height);

  const auto mount_t = map.get_list("mount.translation");
  if (!mount_t.empty()) {
    if (mount_t.size() != 3) {
      throw ConfigError("mount.translation needs exactly 3 numbers");
    }
    cfg.mount = RigidTransform::default_mount({mount_t[0], mount_t[1], mount_t[2]});
  }
  cfg.robot_height = map.get_double("robot_height", cfg.robot_height);

  cfg.noise.sigma_feature = map.get_double("noise.sigma_feature", cfg.noise.sigma_feature);
  cfg.noise.sigma_depth = map.get_double("noise.sigma_depth", cfg.noise.sigma_depth);
  cfg.noise.sigma_theta = map.get_double("noise.sigma_theta", cfg.noise.sigma_theta);
  cfg.noise.seed = map.get_u64("noise.seed", cfg.noise.seed);

  cfg.controller = controller_from_name(map.get_string("controller", "ours"));
  const std::string mode = map.get_string("mode", "ideal");
  if (mode == "ideal") {
    cfg.mode = MeasurementMode::kIdeal;
  } else if (mode == "raster") {
    cfg.mode = MeasurementMode::kRaster;
  } else {
    throw ConfigError("mode must be ideal|raster");
  }

  cfg.duration = map.get_double("duration", cfg.duration);
  cfg.perception_hz = map.get_int("rates.perception_hz", cfg.perception_hz);
  cfg.control_hz = map.get_int("rates.control_hz", cfg.control_hz);

  const int n = cfg.marker.size();
  cfg.nmpc = NmpcConfig::defaults(n);
  cfg.nmpc.horizon = map.get_int("nmpc.horizon", cfg.nmpc.horizon);
  cfg.nmpc.T_s = map.get_double("nmpc.ts", cfg.nmpc.T_s);
  cfg.nmpc.move_block = map.get_int("nmpc.move_block", cfg.nmpc.move_block);
  const double w_feat = map.get_double("nmpc.weight_feature", 50.0);
  const double w_depth = map.get_double("nmpc.weight_depth", 10.0);
  const double w_theta = map.get_double("nmpc.weight_theta", 100.0);
  cfg.nmpc.P_diag = Eigen::VectorXd::Constant(2 * n + 2, w_feat);
  cfg.nmpc.P_diag(2 * n) = w_depth;
  cfg.nmpc.P_diag(2 * n + 1) = w_theta;
  const auto r_diag = map.get_list("nmpc.r_diag");
  if (!r_diag.empty()) {
    if (r_diag.size() != 2) throw ConfigError("nmpc.r_diag needs 2 numbers");
    cfg.nmpc.R = Eigen::Vector2d(r_diag[0], r_diag[1]).asDiagonal();
  }
  auto symmetric_box = [&](const std::string& key, Eigen::Vector2d fallback_hi) {
    const auto v = map.get_list(key);
    if (v.empty()) return fallback_hi;
    if (v.size() != 2) throw ConfigError(key + " needs 2 numbers");
    return Eigen::Vector2d(v[0], v[1]);
  };
  cfg.nmpc.u_max = symmetric_box("nmpc.u_max", cfg.nmpc.u_max);
  cfg.nmpc.u_min = -cfg.nmpc.u_max;
  cfg.nmpc.du_max = symmetric_box("nmpc.du_max", cfg.nmpc.du_max);
  cfg.nmpc.du_min = -cfg.nmpc.du_max;
  cfg.nmpc.Z_safe = map.get_double("nmpc.z_safe", cfg.nmpc.Z_safe);
  cfg.nmpc.sqp_iters = map.get_int("nmpc.sqp_iters", cfg.nmpc.sqp_iters);
  cfg.nmpc.tol = map.get_double("nmpc.tol", cfg.nmpc.tol);
  cfg.fov_margin_px = map.get_double("fov_margin_px", cfg.fov_margin_px);

  cfg.eso.omega_feature =
      map.get_double("eso.omega_feature", cfg.eso.omega_feature);
  cfg.eso.omega_depth = map.get_double("eso.omega_depth", cfg.eso.omega_depth);
  cfg.eso.omega_theta = map.get_double("eso.omega_theta", cfg.eso.omega_theta);
  cfg.eso.alpha1 = map.get_double("eso.alpha1", cfg.eso.alpha1);
  cfg.eso.alpha2 = map.get_double("eso.alpha2", cfg.eso.alpha2);
  cfg.eso.delta = map.get_double("eso.delta", cfg.eso.delta);
  cfg.eso.compensate_disturbance =
      map.get_bool("eso.compensation", cfg.eso.compensate_disturbance);

  cfg.perception.lambda = map.get_int("perception.lambda", cfg.perception.lambda);
  cfg.perception.min_area = map.get_int("perception.min_area", cfg.perception.min_area);
  cfg.perception.gate_px = map.get_double("perception.gate_px", cfg.perception.gate_px);
  cfg.perception.init_rms_px =
      map.get_double("perception.init_rms_px", cfg.perception.init_rms_px);

  cfg.ibvs_gain = map.get_double("ibvs.gain", cfg.ibvs_gain);
  cfg.spot_sigma_px = map.get_double("spot_sigma_px", cfg.spot_sigma_px);

  // Indexed disturbance segments: 5 numbers each
  // (t_start, bias_v, bias_w, drift_depth, drift_theta).
  cfg.disturbance.clear();
  for (int i = 0;; ++i) {
    const std::string key = "disturbance." + std::to_string(i);
    if (!map.has(key)) break;
    const auto v = map.get_list(key);
    if (v.size() != 5) {
      throw ConfigError(key + " needs 5 numbers: t_start bias_v bias_w drift_depth drift_theta");
    }
    cfg.disturbance.push_back({v[0], v[1], v[2], v[3], v[4]});
  }

  cfg.convergence.stop_on_converged =
      map.get_bool("stop_on_converged", cfg.convergence.stop_on_converged);
  cfg.convergence.depth_tol =
      map.get_double("convergence.depth_tol", cfg.convergence.depth_tol);
  cfg.convergence.pixel_tol =
      map.get_double("convergence.pixel_tol", cfg.convergence.pixel_tol);
  cfg.convergence.theta_tol =
      kDegToRad * map.get_double("convergence.theta_tol_deg",
                                 cfg.convergence.theta_tol / kDegToRad);
  cfg.convergence.dwell = map.get_double("convergence.dwell", cfg.convergence.dwell);
  cfg.dropout_budget = map.get_int("dropout_budget", cfg.dropout_budget);

  map.check_consumed();
  cfg.validate();
  return cfg;
}

void save_scenario(const ScenarioConfig& cfg, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open config for writing: " + path);
  auto num = [&](const char* key, double v) {
    std::fprintf(f, "%s = %.17g\n", key, v);
  };
  auto integer = [&](const char* key, long long v) {
    std::fprintf(f, "%s = %lld\n", key, v);
  };
  std::fprintf(f, "# vsdock scenario (effective configuration)\n");
  num("initial.x", cfg.initial.x);
  num("initial.z", cfg.initial.z);
  num("initial.theta_deg", -cfg.initial.heading * 180.0 / M_PI);
  num("desired.x", cfg.desired_x);
  num("desired.z", cfg.desired_z);
  std::fprintf(f, "marker.points =");
  for (const auto& p : cfg.marker.points_target) {
    std::fprintf(f, " %.17g %.17g %.17g", p.x(), p.y(), p.z());
  }
  std::fprintf(f, "\n");
  num("camera.fx", cfg.camera.fx);
  num("camera.fy", cfg.camera.fy);
  num("camera.cx", cfg.camera.cx);
  num("camera.cy", cfg.camera.cy);
  integer("camera.width", cfg.camera.width);
  integer("camera.height", cfg.camera.height);
  std::fprintf(f, "mount.translation = %.17g %.17g %.17g\n",
               cfg.mount.translation.x(), cfg.mount.translation.y(),
               cfg.mount.translation.z());
  num("robot_height", cfg.robot_height);
  num("noise.sigma_feature", cfg.noise.sigma_feature);
  num("noise.sigma_depth", cfg.noise.sigma_depth);
  num("noise.sigma_theta", cfg.noise.sigma_theta);
  std::fprintf(f, "noise.seed = %llu\n",
               (unsigned long long)cfg.noise.seed);
  std::fprintf(f, "controller = %s\n", controller_name(cfg.controller).c_str());
  std::fprintf(f, "mode = %s\n",
               cfg.mode == MeasurementMode::kIdeal ? "ideal" : "raster");
  num("duration", cfg.duration);
  integer("rates.perception_hz", cfg.perception_hz);
  integer("rates.control_hz", cfg.control_hz);
  integer("nmpc.horizon", cfg.nmpc.horizon);
  num("nmpc.ts", cfg.nmpc.T_s);
  integer("nmpc.move_block", cfg.nmpc.move_block);
  num("nmpc.weight_feature", cfg.nmpc.P_diag(0));
  num("nmpc.weight_depth", cfg.nmpc.P_diag(cfg.nmpc.P_diag.size() - 2));
  num("nmpc.weight_theta", cfg.nmpc.P_diag(cfg.nmpc.P_diag.size() - 1));
  std::fprintf(f, "nmpc.r_diag = %.17g %.17g\n", cfg.nmpc.R(0, 0), cfg.nmpc.R(1, 1));
  std::fprintf(f, "nmpc.u_max = %.17g %.17g\n", cfg.nmpc.u_max(0), cfg.nmpc.u_max(1));
  std::fprintf(f, "nmpc.du_max = %.17g %.17g\n", cfg.nmpc.du_max(0), cfg.nmpc.du_max(1));
  num("nmpc.z_safe", cfg.nmpc.Z_safe);
  integer("nmpc.sqp_iters", cfg.nmpc.sqp_iters);
  num("nmpc.tol", cfg.nmpc.tol);
  num("fov_margin_px", cfg.fov_margin_px);
  num("eso.omega_feature", cfg.eso.omega_feature);
  num("eso.omega_depth", cfg.eso.omega_depth);
  num("eso.omega_theta", cfg.eso.omega_theta);
  num("eso.alpha1", cfg.eso.alpha1);
  num("eso.alpha2", cfg.eso.alpha2);
  num("eso.delta", cfg.eso.delta);
  std::fprintf(f, "eso.compensation = %s\n",
               cfg.eso.compensate_disturbance ? "true" : "false");
  integer("perception.lambda", cfg.perception.lambda);
  integer("perception.min_area", cfg.perception.min_area);
  num("perception.gate_px", cfg.perception.gate_px);
  num("perception.init_rms_px", cfg.perception.init_rms_px);
  num("ibvs.gain", cfg.ibvs_gain);
  num("spot_sigma_px", cfg.spot_sigma_px);
  for (size_t i = 0; i < cfg.disturbance.size(); ++i) {
    const auto& d = cfg.disturbance[i];
    std::fprintf(f, "disturbance.%zu = %.17g %.17g %.17g %.17g %.17g\n", i,
                 d.t_start, d.bias_v, d.bias_w, d.drift_depth, d.drift_theta);
  }
  std::fprintf(f, "stop_on_converged = %s\n",
               cfg.convergence.stop_on_converged ? "true" : "false");
  num("convergence.depth_tol", cfg.convergence.depth_tol);
  num("convergence.pixel_tol", cfg.convergence.pixel_tol);
  num("convergence.theta_tol_deg", cfg.convergence.theta_tol * 180.0 / M_PI);
  num("convergence.dwell", cfg.convergence.dwell);
  integer("dropout_budget", cfg.dropout_budget);
  std::fclose(f);
}

}  // namespace vsdock
