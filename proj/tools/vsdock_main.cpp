#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "vsdock/config.hpp"
#include "vsdock/harness.hpp"
#include "vsdock/simulator.hpp"

namespace {

using namespace vsdock;

int cmd_trial(const std::string& config_path, const std::string& controller,
              long long seed, const std::string& out_dir) {
  ScenarioConfig cfg = load_scenario(config_path);
  if (!controller.empty()) cfg.controller = controller_from_name(controller);
  if (seed >= 0) cfg.noise.seed = std::uint64_t(seed);
  std::filesystem::create_directories(out_dir);
  save_scenario(cfg, out_dir + "/config.cfg");

  try {
    const TrialLog log = run_trial(cfg);
    const std::string csv = out_dir + "/trial_" +
                            controller_name(cfg.controller) + "_single.csv";
    write_trial_csv(log, csv);
    const TrialMetrics m = compute_metrics(log, cfg);
    std::printf("trial %s: e_n=%.3f cm  e_t=%.3f cm  e_Z=%.3f cm  "
                "e_theta=%.3f deg  e_p=%.3f px  M_sm=(%.4f, %.4f)  %s\n",
                controller_name(cfg.controller).c_str(), 100.0 * m.e_n,
                100.0 * m.e_t, 100.0 * m.e_z, m.e_theta * 180.0 / M_PI, m.e_p,
                m.m_sm_v, m.m_sm_w, m.converged ? "converged" : "not converged");
    std::printf("log: %s (%d FOV violations)\n", csv.c_str(),
                log.fov_violations);
    return 0;
  } catch (const TrialAborted& e) {
    std::fprintf(stderr, "trial aborted: %s\n", e.what());
    return 2;
  }
}

int cmd_sweep(const std::string& config_path, bool use_paper_grid,
              const std::string& controllers_csv, const std::string& out_dir,
              int threads) {
  ScenarioConfig cfg = load_scenario(config_path);
  std::vector<ControllerKind> controllers;
  std::string token;
  std::stringstream ss(controllers_csv);
  while (std::getline(ss, token, ',')) {
    if (!token.empty()) controllers.push_back(controller_from_name(token));
  }
  if (controllers.empty()) controllers = {cfg.controller};

  std::vector<GridCell> grid;
  if (use_paper_grid) {
    grid = paper_grid();
  } else {
    GridCell cell;
    cell.z = cfg.initial.z;
    cell.x = cfg.initial.x;
    cell.theta_deg = -cfg.initial.heading * 180.0 / M_PI;
    cell.name = "single";
    grid.push_back(cell);
  }

  const SweepResult result = run_sweep(cfg, controllers, grid, out_dir, threads);
  std::printf("%s", format_summary(result).c_str());
  std::printf("outputs: %s\n", out_dir.c_str());
  if (result.any_aborted) {
    for (const SweepTrial& t : result.trials) {
      if (t.aborted) {
        std::fprintf(stderr, "aborted: %s (%s)\n", t.name.c_str(),
                     t.error.c_str());
      }
    }
    return 2;
  }
  return 0;
}

int cmd_compare(const std::string& in_dir) {
  const SweepResult result = summarize_directory(in_dir);
  std::printf("%s", format_summary(result).c_str());
  return 0;
}

int cmd_render_check(const std::string& config_path) {
  ScenarioConfig cfg = load_scenario(config_path);
  double worst_centroid = 0.0;
  double worst_depth = 0.0;
  double worst_theta = 0.0;
  int poses = 0;
  for (int i = 0; i <= 10; ++i) {
    const double a = i / 10.0;
    RobotPose pose;
    pose.x = (1.0 - a) * cfg.initial.x + a * cfg.desired_x;
    pose.z = (1.0 - a) * cfg.initial.z + a * cfg.desired_z;
    pose.heading = (1.0 - a) * cfg.initial.heading;
    const IdealRender ideal = render_markers_ideal(
        pose, cfg.marker, cfg.camera, cfg.mount, cfg.robot_height);
    if (ideal.observation.size() < cfg.marker.size()) continue;
    const GrayImage frame =
        render_markers_raster(pose, cfg.marker, cfg.camera, cfg.mount,
                              cfg.robot_height, cfg.spot_sigma_px);
    PerceptionPipeline pipeline(cfg.marker, cfg.camera, cfg.perception);
    const PerceptionResult res =
        pipeline.process(frame, Eigen::Vector2d::Zero(),
                         double(cfg.perception_hz), 0.0);
    const HybridState truth =
        true_hybrid_state(pose, cfg.marker, cfg.mount, cfg.robot_height);
    for (int k = 0; k < res.observation.size(); ++k) {
      const int id = res.observation.ids[k];
      double err = 1e9;
      for (int j = 0; j < ideal.observation.size(); ++j) {
        if (ideal.observation.ids[j] == id) {
          err = (res.observation.pixels[k] - ideal.observation.pixels[j]).norm();
        }
      }
      worst_centroid = std::max(worst_centroid, err);
    }
    worst_depth = std::max(worst_depth, std::abs(res.pose.depth - truth.depth));
    worst_theta = std::max(worst_theta, std::abs(res.pose.theta - truth.theta));
    ++poses;
  }
  std::printf("render-check over %d poses: max centroid error %.4f px, "
              "max depth error %.4f m, max theta error %.4f deg\n",
              poses, worst_centroid, worst_depth,
              worst_theta * 180.0 / M_PI);
  const bool ok = poses > 0 && worst_centroid <= 0.1;
  std::printf("%s\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monocular visual-servoing docking simulator and experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::string controller;
  long long seed = -1;
  std::string out_dir = "out";
  std::string controllers_csv = "ibvs,mpc,ours";
  bool use_paper_grid = false;
  int threads = 0;
  std::string in_dir;

  CLI::App* trial = app.add_subcommand("trial", "Run one docking trial");
  trial->add_option("--config", config_path, "scenario config file")->required();
  trial->add_option("--controller", controller, "ibvs|mpc|ours");
  trial->add_option("--seed", seed, "noise seed override");
  trial->add_option("--out", out_dir, "output directory");

  CLI::App* sweep = app.add_subcommand("sweep", "Run a trial grid");
  sweep->add_option("--config", config_path, "scenario config file")->required();
  sweep->add_flag("--paper-grid", use_paper_grid,
                  "use the 25 initial conditions of the simulation study");
  sweep->add_option("--controllers", controllers_csv, "comma-separated list");
  sweep->add_option("--out", out_dir, "output directory");
  sweep->add_option("--threads", threads, "worker threads (VSDOCK_THREADS caps)");

  CLI::App* compare = app.add_subcommand("compare", "Summarize a sweep directory");
  compare->add_option("--in", in_dir, "sweep output directory")->required();

  CLI::App* render = app.add_subcommand("render-check",
                                        "Raster-mode perception self-test");
  render->add_option("--config", config_path, "scenario config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(trial)) {
      return cmd_trial(config_path, controller, seed, out_dir);
    }
    if (app.got_subcommand(sweep)) {
      return cmd_sweep(config_path, use_paper_grid, controllers_csv, out_dir,
                       threads);
    }
    if (app.got_subcommand(compare)) {
      return cmd_compare(in_dir);
    }
    if (app.got_subcommand(render)) {
      return cmd_render_check(config_path);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
