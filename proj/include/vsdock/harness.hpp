#pragma once

#include <string>
#include <vector>

#include "vsdock/simulator.hpp"

namespace vsdock {

struct TrialMetrics {
  double e_n = 0.0;       // |z_end - z_d|, meters
  double e_t = 0.0;       // |x_end - x_d|, meters
  double e_z = 0.0;       // |Z_end - Z_d|, meters
  double e_theta = 0.0;   // |theta_end - theta_d|, radians
  double e_p = 0.0;       // feature RMS distance, pixels
  double m_sm_v = 0.0;    // command-variation RMS, linear channel
  double m_sm_w = 0.0;    // command-variation RMS, angular channel
  bool converged = false;
  double t_task = 0.0;
};

// Terminal docking error in the target frame: (normal, tangential).
std::pair<double, double> compute_position_error(const TrialLog& log,
                                                 const RobotPose& desired);

// Terminal state error (e_Z, e_theta, e_p); e_p compares the logged true
// feature pixels with the desired projection. Throws MissingFeatures when
// the terminal record lacks features.
std::tuple<double, double, double> compute_state_error(
    const TrialLog& log, const HybridState& desired,
    const CameraIntrinsics& K);

// RMS of the executed chassis command variation over the task time.
std::pair<double, double> compute_smoothness(const TrialLog& log);

TrialMetrics compute_metrics(const TrialLog& log, const ScenarioConfig& cfg);

// Pinned per-trial CSV schema (one row per perception tick):
// t,x_T,z_T,theta_R,Z_true,theta_true,Z_meas,theta_meas,Z_est,theta_est,
// v_z,omega_y,v_R,omega_R,u1..un,v1..vn,solver_cost,solver_iters
void write_trial_csv(const TrialLog& log, const std::string& path);
TrialLog read_trial_csv(const std::string& path);

struct GridCell {
  double z = 6.0;
  double x = 0.0;
  double theta_deg = 0.0;
  std::string name;
};

// The 25 initial conditions of the simulation study: 5 positions x 5
// orientations.
std::vector<GridCell> paper_grid();

struct SweepTrial {
  std::string name;
  ControllerKind controller = ControllerKind::kOurs;
  GridCell cell;
  std::uint64_t seed = 0;
  bool aborted = false;
  std::string error;
  TrialMetrics metrics;
  int fov_violations = 0;
  std::string csv_path;
};

struct SweepSummaryRow {
  ControllerKind controller = ControllerKind::kOurs;
  int trials = 0;
  int aborted = 0;
  int converged = 0;
  TrialMetrics mean;  // means of absolute per-trial errors
};

struct SweepResult {
  std::vector<SweepTrial> trials;
  std::vector<SweepSummaryRow> summary;
  bool any_aborted = false;
};

// Runs every (cell x controller) trial, writes per-trial CSVs, the config
// echo and summary.csv under out_dir. Noise seeds are matched across
// controllers per cell. threads <= 0 picks a default capped by
// VSDOCK_THREADS. Outputs are byte-identical for serial and parallel runs.
SweepResult run_sweep(const ScenarioConfig& base,
                      const std::vector<ControllerKind>& controllers,
                      const std::vector<GridCell>& grid,
                      const std::string& out_dir, int threads = 0);

// Recomputes per-controller summaries from per-trial CSVs in a sweep
// output directory (uses the config echo for the references).
SweepResult summarize_directory(const std::string& dir);

// Table-style formatting of a sweep summary (lengths in cm, angles in
// degrees).
std::string format_summary(const SweepResult& result);

void write_summary_csv(const SweepResult& result, const std::string& path);

std::uint64_t trial_seed(std::uint64_t base_seed, int cell_index);

}  // namespace vsdock
