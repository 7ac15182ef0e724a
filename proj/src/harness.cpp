#include "vsdock/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "vsdock/config.hpp"

namespace vsdock {

std::pair<double, double> compute_position_error(const TrialLog& log,
                                                 const RobotPose& desired) {
  if (log.records.empty()) throw EmptyLog("trial log has no records");
  const RobotPose& end = log.records.back().pose;
  return {std::abs(end.z - desired.z), std::abs(end.x - desired.x)};
}

std::tuple<double, double, double> compute_state_error(
    const TrialLog& log, const HybridState& desired,
    const CameraIntrinsics& K) {
  if (log.records.empty()) throw EmptyLog("trial log has no records");
  const TrialRecord& end = log.records.back();
  if (int(end.pixels_true.size()) != desired.n()) {
    throw MissingFeatures("terminal record lacks the full feature set");
  }
  const double e_z = std::abs(end.Z_true - desired.depth);
  const double e_theta = std::abs(wrap_angle(end.theta_true - desired.theta));
  double acc = 0.0;
  for (int i = 0; i < desired.n(); ++i) {
    const Eigen::Vector2d pd = denormalize_point(desired.features[i], K);
    acc += (end.pixels_true[i] - pd).squaredNorm();
  }
  const double e_p = std::sqrt(acc / double(desired.n()));
  return {e_z, e_theta, e_p};
}

std::pair<double, double> compute_smoothness(const TrialLog& log) {
  if (log.records.size() < 2) {
    throw InsufficientData("smoothness needs at least two records");
  }
  double sum_v = 0.0;
  double sum_w = 0.0;
  for (size_t i = 1; i < log.records.size(); ++i) {
    const double dv = log.records[i].cmd.v_R - log.records[i - 1].cmd.v_R;
    const double dw = log.records[i].cmd.omega_R - log.records[i - 1].cmd.omega_R;
    sum_v += dv * dv;
    sum_w += dw * dw;
  }
  return {std::sqrt(sum_v / log.t_task), std::sqrt(sum_w / log.t_task)};
}

TrialMetrics compute_metrics(const TrialLog& log, const ScenarioConfig& cfg) {
  TrialMetrics m;
  const RobotPose desired_pose{cfg.desired_x, cfg.desired_z, 0.0};
  std::tie(m.e_n, m.e_t) = compute_position_error(log, desired_pose);
  const HybridState sd = desired_state(cfg);
  std::tie(m.e_z, m.e_theta, m.e_p) = compute_state_error(log, sd, cfg.camera);
  std::tie(m.m_sm_v, m.m_sm_w) = compute_smoothness(log);
  m.converged = log.converged;
  m.t_task = log.t_task;
  return m;
}

void write_trial_csv(const TrialLog& log, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open for writing: " + path);
  const int n = log.n_features;
  std::fprintf(f, "t,x_T,z_T,theta_R,Z_true,theta_true,Z_meas,theta_meas,Z_est,theta_est,v_z,omega_y,v_R,omega_R");
  for (int i = 1; i <= n; ++i) std::fprintf(f, ",u%d", i);
  for (int i = 1; i <= n; ++i) std::fprintf(f, ",v%d", i);
  std::fprintf(f, ",solver_cost,solver_iters\n");
  for (const TrialRecord& r : log.records) {
    std::fprintf(f, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                 r.t, r.pose.x, r.pose.z, r.pose.heading, r.Z_true,
                 r.theta_true, r.Z_meas, r.theta_meas, r.Z_est, r.theta_est,
                 r.u.v_z, r.u.omega_y, r.cmd.v_R, r.cmd.omega_R);
    for (int i = 0; i < n; ++i) {
      std::fprintf(f, ",%.17g", i < int(r.pixels_true.size()) ? r.pixels_true[i].x() : 0.0);
    }
    for (int i = 0; i < n; ++i) {
      std::fprintf(f, ",%.17g", i < int(r.pixels_true.size()) ? r.pixels_true[i].y() : 0.0);
    }
    std::fprintf(f, ",%.17g,%d\n", r.solver_cost, r.solver_iters);
  }
  std::fclose(f);
}

TrialLog read_trial_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string header;
  if (!std::getline(in, header)) throw IoError("empty CSV: " + path);
  int n = 0;
  {
    std::stringstream ss(header);
    std::string col;
    while (std::getline(ss, col, ',')) {
      if (!col.empty() && col[0] == 'u' && std::isdigit(col[1])) ++n;
    }
  }
  TrialLog log;
  log.n_features = n;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> vals;
    while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
    if (int(vals.size()) != 14 + 2 * n + 2) {
      throw IoError("malformed CSV row in " + path);
    }
    TrialRecord r;
    int k = 0;
    r.t = vals[k++];
    r.pose.x = vals[k++];
    r.pose.z = vals[k++];
    r.pose.heading = vals[k++];
    r.Z_true = vals[k++];
    r.theta_true = vals[k++];
    r.Z_meas = vals[k++];
    r.theta_meas = vals[k++];
    r.Z_est = vals[k++];
    r.theta_est = vals[k++];
    r.u.v_z = vals[k++];
    r.u.omega_y = vals[k++];
    r.cmd.v_R = vals[k++];
    r.cmd.omega_R = vals[k++];
    r.pixels_true.resize(n);
    for (int i = 0; i < n; ++i) r.pixels_true[i].x() = vals[k++];
    for (int i = 0; i < n; ++i) r.pixels_true[i].y() = vals[k++];
    r.solver_cost = vals[k++];
    r.solver_iters = int(std::llround(vals[k++]));
    log.records.push_back(std::move(r));
  }
  if (log.records.empty()) throw EmptyLog("CSV has no data rows: " + path);
  const double dt = log.records.size() > 1
                        ? log.records[1].t - log.records[0].t
                        : 0.0;
  log.t_task = log.records.back().t - log.records.front().t + dt;
  return log;
}

std::vector<GridCell> paper_grid() {
  const std::vector<std::pair<double, double>> positions = {
      {8.0, 2.0}, {7.0, 1.0}, {6.0, 0.0}, {7.0, -1.0}, {8.0, -2.0}};
  const std::vector<double> orientations = {-35.0, -17.5, 0.0, 17.5, 35.0};
  std::vector<GridCell> grid;
  for (const auto& [z, x] : positions) {
    for (double th : orientations) {
      GridCell cell;
      cell.z = z;
      cell.x = x;
      cell.theta_deg = th;
      char buf[64];
      std::snprintf(buf, sizeof(buf), "z%g_x%g_th%g", z, x, th);
      cell.name = buf;
      grid.push_back(cell);
    }
  }
  return grid;
}

std::uint64_t trial_seed(std::uint64_t base_seed, int cell_index) {
  std::uint64_t z = base_seed + 0x9e3779b97f4a7c15ULL * (cell_index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

int resolve_threads(int requested) {
  int threads = requested;
  if (threads <= 0) {
    threads = int(std::thread::hardware_concurrency());
    if (threads <= 0) threads = 1;
  }
  if (const char* cap = std::getenv("VSDOCK_THREADS")) {
    const int c = std::atoi(cap);
    if (c > 0) threads = std::min(threads, c);
  }
  return std::max(1, threads);
}

SweepSummaryRow summarize_controller(ControllerKind kind,
                                     const std::vector<SweepTrial>& trials) {
  SweepSummaryRow row;
  row.controller = kind;
  TrialMetrics acc;
  for (const SweepTrial& t : trials) {
    if (t.controller != kind) continue;
    ++row.trials;
    if (t.aborted) {
      ++row.aborted;
      continue;
    }
    acc.e_n += t.metrics.e_n;
    acc.e_t += t.metrics.e_t;
    acc.e_z += t.metrics.e_z;
    acc.e_theta += t.metrics.e_theta;
    acc.e_p += t.metrics.e_p;
    acc.m_sm_v += t.metrics.m_sm_v;
    acc.m_sm_w += t.metrics.m_sm_w;
    acc.t_task += t.metrics.t_task;
    if (t.metrics.converged) ++row.converged;
  }
  const int ok = row.trials - row.aborted;
  if (ok > 0) {
    const double inv = 1.0 / double(ok);
    acc.e_n *= inv;
    acc.e_t *= inv;
    acc.e_z *= inv;
    acc.e_theta *= inv;
    acc.e_p *= inv;
    acc.m_sm_v *= inv;
    acc.m_sm_w *= inv;
    acc.t_task *= inv;
  }
  row.mean = acc;
  return row;
}

}  // namespace

SweepResult run_sweep(const ScenarioConfig& base,
                      const std::vector<ControllerKind>& controllers,
                      const std::vector<GridCell>& grid,
                      const std::string& out_dir, int threads) {
  if (grid.empty() || controllers.empty()) {
    throw ConfigError("sweep needs a non-empty grid and controller list");
  }
  std::filesystem::create_directories(out_dir);
  save_scenario(base, out_dir + "/config.cfg");

  SweepResult result;
  for (const ControllerKind kind : controllers) {
    for (size_t ci = 0; ci < grid.size(); ++ci) {
      SweepTrial trial;
      trial.controller = kind;
      trial.cell = grid[ci];
      trial.name = controller_name(kind) + "_" + grid[ci].name;
      trial.seed = trial_seed(base.noise.seed, int(ci));
      trial.csv_path = out_dir + "/trial_" + trial.name + ".csv";
      result.trials.push_back(std::move(trial));
    }
  }

  const int workers = resolve_threads(threads);
  std::atomic<size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const size_t idx = next.fetch_add(1);
      if (idx >= result.trials.size()) return;
      SweepTrial& t = result.trials[idx];
      ScenarioConfig cfg = base;
      cfg.controller = t.controller;
      cfg.initial.x = t.cell.x;
      cfg.initial.z = t.cell.z;
      cfg.initial.heading = -t.cell.theta_deg * M_PI / 180.0;
      cfg.noise.seed = t.seed;
      try {
        const TrialLog log = run_trial(cfg);
        write_trial_csv(log, t.csv_path);
        t.metrics = compute_metrics(log, cfg);
        t.fov_violations = log.fov_violations;
      } catch (const Error& e) {
        t.aborted = true;
        t.error = e.what();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  for (const ControllerKind kind : controllers) {
    result.summary.push_back(summarize_controller(kind, result.trials));
  }
  for (const SweepTrial& t : result.trials) {
    if (t.aborted) result.any_aborted = true;
  }
  write_summary_csv(result, out_dir + "/summary.csv");
  return result;
}

SweepResult summarize_directory(const std::string& dir) {
  const ScenarioConfig base = load_scenario(dir + "/config.cfg");
  SweepResult result;
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("trial_", 0) == 0 && entry.path().extension() == ".csv") {
      files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<ControllerKind> seen;
  for (const std::string& path : files) {
    const std::string stem = std::filesystem::path(path).stem().string();
    // trial_<controller>_<cell>
    const auto first = stem.find('_');
    const auto second = stem.find('_', first + 1);
    if (first == std::string::npos || second == std::string::npos) continue;
    SweepTrial t;
    t.controller = controller_from_name(stem.substr(first + 1, second - first - 1));
    t.name = stem.substr(first + 1);
    t.csv_path = path;
    ScenarioConfig cfg = base;
    cfg.controller = t.controller;
    const TrialLog log = read_trial_csv(path);
    t.metrics = compute_metrics(log, cfg);
    result.trials.push_back(std::move(t));
    if (std::find(seen.begin(), seen.end(), result.trials.back().controller) ==
        seen.end()) {
      seen.push_back(result.trials.back().controller);
    }
  }
  if (result.trials.empty()) {
    throw EmptyLog("no trial CSVs found in " + dir);
  }
  for (const ControllerKind kind : seen) {
    result.summary.push_back(summarize_controller(kind, result.trials));
  }
  return result;
}

std::string format_summary(const SweepResult& result) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-6s %8s %8s %8s %10s %8s %9s %9s %6s\n",
                "method", "e_n[cm]", "e_t[cm]", "e_Z[cm]", "e_th[deg]",
                "e_p[px]", "M_sm_v", "M_sm_w", "conv");
  out << line;
  for (const SweepSummaryRow& row : result.summary) {
    std::snprintf(line, sizeof(line),
                  "%-6s %8.3f %8.3f %8.3f %10.3f %8.3f %9.4f %9.4f %3d/%-3d\n",
                  controller_name(row.controller).c_str(), 100.0 * row.mean.e_n,
                  100.0 * row.mean.e_t, 100.0 * row.mean.e_z,
                  row.mean.e_theta * 180.0 / M_PI, row.mean.e_p,
                  row.mean.m_sm_v, row.mean.m_sm_w, row.converged,
                  row.trials - row.aborted);
    out << line;
    if (row.aborted > 0) {
      std::snprintf(line, sizeof(line), "       (%d aborted)\n", row.aborted);
      out << line;
    }
  }
  return out.str();
}

void write_summary_csv(const SweepResult& result, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open for writing: " + path);
  std::fprintf(f,
               "controller,trials,aborted,converged,e_n_m,e_t_m,e_Z_m,"
               "e_theta_deg,e_p_px,M_sm_v,M_sm_w,t_task_s\n");
  for (const SweepSummaryRow& row : result.summary) {
    std::fprintf(f, "%s,%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                 controller_name(row.controller).c_str(), row.trials,
                 row.aborted, row.converged, row.mean.e_n, row.mean.e_t,
                 row.mean.e_z, row.mean.e_theta * 180.0 / M_PI, row.mean.e_p,
                 row.mean.m_sm_v, row.mean.m_sm_w, row.mean.t_task);
  }
  std::fclose(f);
}

}  // namespace vsdock
