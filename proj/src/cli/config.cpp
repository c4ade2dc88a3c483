#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "commands.hpp"

namespace gpcert::cli {

namespace {

void add_experiment_options(CLI::App& app, ExperimentConfig& cfg,
                            std::string& system_str, std::string& controllers_str) {
  app.add_option("--system", system_str, "Benchmark system: polysys|cartpole")
      ->capture_default_str();
  app.add_option("--controllers", controllers_str,
                 "Comma-separated controllers (oracle_qp, nominal_qp, unfiltered, "
                 "gp_socp_full, gp_socp_ours, gp_socp_naive) or 'all'");
  app.add_option("--seeds", cfg.seeds, "Seed list")->delimiter(',');

  app.add_option("--perturbation-scale", cfg.perturbation_scale,
                 "Coefficient perturbation amplitude of the true polynomial plant");
  app.add_option("--mass-mismatch", cfg.mass_mismatch,
                 "Cart-pole: true pole mass as a multiple of the modeled one");

  app.add_option("--clf-rate", cfg.clf_rate, "Decay rate of the Lyapunov condition");
  app.add_option("--cbf-gain", cfg.cbf_gain, "Rail barrier mixing gain");
  app.add_option("--cbf-rate", cfg.cbf_rate, "Barrier condition rate");
  app.add_option("--rail-limit", cfg.rail_limit, "Cart position limit (m)");

  app.add_option("--kf-variance", cfg.kf_variance, "Drift kernel signal variance");
  app.add_option("--kf-lengthscale", cfg.kf_lengthscale, "Drift kernel lengthscale");
  app.add_option("--kg-variance", cfg.kg_variance, "Gain kernel signal variance");
  app.add_option("--kg-lengthscale", cfg.kg_lengthscale, "Gain kernel lengthscale");
  app.add_option("--noise-std", cfg.noise_std, "Observation noise stddev");

  app.add_option("--beta", cfg.beta, "Confidence scale on the predictive stddev");
  app.add_flag("--calibrate", cfg.calibrate, "Calibrate beta instead of fixing it");
  app.add_option("--delta", cfg.delta, "Calibration miss probability");
  app.add_option("--holdout", cfg.calibration_holdout,
                 "Calibration holdout fraction (0 = in-sample)");

  app.add_option("--subset-size,-M", cfg.subset_size, "Points selected per step");
  app.add_option("--epsilon", cfg.epsilon, "Correlation threshold for selection");
  app.add_option("--hint-policy", cfg.hint_policy,
                 "Gain-direction source: full|previous");

  app.add_option("--horizon", cfg.horizon, "Episode length (s); 0 = system default");
  app.add_option("--control-dt", cfg.control_dt,
                 "Control period (s); 0 = system default");
  app.add_option("--integrator-dt", cfg.integrator_dt, "Integrator substep (s)");
  app.add_option("--x0", cfg.x0, "Initial state override")->delimiter(',');
  app.add_option("--input-limit", cfg.input_limit,
                 "Polysys input box half-width; 0 = default 20");

  app.add_option("--dataset", cfg.dataset_path, "Load this dataset file");
  app.add_option("--grid-per-axis", cfg.grid_per_axis, "Coarse grid points per axis");
  app.add_option("--cluster-count", cfg.cluster_count, "Dense clusters to add");
  app.add_option("--cluster-per-axis", cfg.cluster_per_axis,
                 "Cluster points per axis (state and control)");
  app.add_option("--cluster-half-width", cfg.cluster_half_width, "Cluster half-width");
  app.add_option("--control-amplitude", cfg.control_amplitude,
                 "Sampling amplitude of dataset controls");
  app.add_option("--measurement-dt", cfg.measurement_dt,
                 "Finite-difference window for dataset residuals (s)");
  app.add_option("--synthetic-n", cfg.synthetic_n,
                 "Build a synthetic dataset of this size instead of grid+clusters");

  app.add_option("--episodes", cfg.episodes, "Episodes for collection");

  app.add_option("--timing-n", cfg.timing_n, "Dataset sizes for the timing sweep")
      ->delimiter(',');
  app.add_option("--timing-m", cfg.timing_m, "Subset size for the timing sweep");
  app.add_option("--timing-steps", cfg.timing_steps, "Measured steps per size");
  app.add_option("--timing-warmup", cfg.timing_warmup, "Discarded warm-up steps");
  app.add_option("--full-gp-max-n", cfg.full_gp_max_n,
                 "Largest N at which the full-model filter is timed");

  app.add_option("--noise-scales", cfg.noise_scales, "Noise amplitudes to sweep")
      ->delimiter(',');
  app.add_option("--eps-grid", cfg.eps_grid, "Epsilon grid for the sweep")
      ->delimiter(',');
  app.add_option("--noise-states", cfg.noise_states, "Query states per scale");
  app.add_option("--noise-n", cfg.noise_n, "Dataset size for the sweep");
  app.add_option("--noise-m", cfg.noise_m, "Subset size for the sweep");

  app.add_option("--out", cfg.output_root,
                 "Output root (default $GPCERT_OUTPUT_ROOT or ./runs)");
  app.add_option("--run-id", cfg.run_id, "Run directory name (default verb-<utc>)");
  app.add_option("--threads", cfg.threads, "Worker threads (0 = auto)");
}

}  // namespace

int main_cli(int argc, char** argv) {
  CLI::App app{"Certifying safety filters from data-selected Gaussian-process models"};
  app.set_config("--config", "", "Read options from a key=value config file");

  ExperimentConfig cfg;
  std::string system_str = "polysys";
  std::string controllers_str;
  std::string info_path;
  add_experiment_options(app, cfg, system_str, controllers_str);

  auto* dataset = app.add_subcommand("dataset", "Build or inspect residual datasets");
  dataset->fallthrough();
  auto* dataset_build =
      dataset->add_subcommand("build", "Build the grid+cluster (or synthetic) dataset");
  dataset_build->fallthrough();
  auto* dataset_info = dataset->add_subcommand("info", "Describe a dataset file");
  dataset_info->fallthrough();
  dataset_info->add_option("path", info_path, "Dataset file")->required();
  dataset->require_subcommand(1);

  auto* run = app.add_subcommand("run", "Closed-loop controller comparison");
  run->fallthrough();
  auto* collect = app.add_subcommand("collect", "Episodic data collection");
  collect->fallthrough();
  auto* timing = app.add_subcommand("timing", "Per-step timing benchmark");
  timing->fallthrough();
  auto* noise = app.add_subcommand("noise-sweep",
                                   "Selection quality vs observation noise");
  noise->fallthrough();
  auto* calibrate = app.add_subcommand("calibrate-beta",
                                       "Calibrate the confidence scale");
  calibrate->fallthrough();
  app.require_subcommand(0, 1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    cfg.system = parse_system(system_str);
    if (!controllers_str.empty()) {
      cfg.controllers = parse_controllers(controllers_str);
    }
    cfg.validate();

    if (dataset_build->parsed()) {
      return dataset_build_command(cfg);
    }
    if (dataset_info->parsed()) {
      return dataset_info_command(info_path);
    }
    if (run->parsed()) {
      return run_command(cfg);
    }
    if (collect->parsed()) {
      return collect_command(cfg);
    }
    if (timing->parsed()) {
      return timing_command(cfg);
    }
    if (noise->parsed()) {
      return noise_sweep_command(cfg);
    }
    if (calibrate->parsed()) {
      return calibrate_beta_command(cfg);
    }
    std::cout << app.help() << std::endl;
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace gpcert::cli
