#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gpcert/bench/polysys.hpp"
#include "gpcert/bench/simulate.hpp"
#include "gpcert/filter.hpp"

namespace gpcert::cli {

enum class SystemKind { Polysys, CartPole };

enum class ControllerKind {
  OracleQp,
  NominalQp,
  Unfiltered,
  GpSocpFull,
  GpSocpOurs,
  GpSocpNaive,
};

std::string to_string(SystemKind kind);
std::string to_string(ControllerKind kind);
SystemKind parse_system(const std::string& name);
ControllerKind parse_controller(const std::string& name);
// Comma-separated names; "all" expands to every kind.
std::vector<ControllerKind> parse_controllers(const std::string& csv);

// Flat union of every knob the experiment verbs read.  One config plus a
// seed fully determines an experiment; the manifest records the whole
// struct so runs stay reproducible.
struct ExperimentConfig {
  SystemKind system = SystemKind::Polysys;
  std::vector<ControllerKind> controllers = {ControllerKind::GpSocpOurs};
  std::vector<std::uint64_t> seeds = {0};

  // Plant/nominal mismatch.
  double perturbation_scale = 0.4;  // polynomial system coefficient noise
  double mass_mismatch = 1.5;       // cart-pole: true pole mass multiplier

  // Certificate.
  double clf_rate = 1.0;   // decay rate on the negated Lyapunov certificate
  double cbf_gain = 1.0;   // rail barrier mixing gain k
  double cbf_rate = 1.0;   // class-K rate on the barrier
  double rail_limit = 0.35;

  // Kernel and observation noise (stddev).
  double kf_variance = 1.0;
  double kf_lengthscale = 1.0;
  double kg_variance = 1.0;
  double kg_lengthscale = 1.0;
  double noise_std = 1e-2;

  // Confidence scale: fixed beta, or calibrated to coverage 1 - delta.
  double beta = 2.0;
  bool calibrate = false;
  double delta = 0.01;
  double calibration_holdout = 0.0;  // fraction held out; 0 = in-sample

  // Subset selection.
  int subset_size = 20;
  double epsilon = 0.95;
  std::string hint_policy = "full";  // "full" | "previous"

  // Closed loop.  Zero means "system default": horizon 2.5 s / 8 s and
  // control period 10 ms / 25 ms for the polynomial system / cart-pole.
  double horizon = 0.0;
  double control_dt = 0.0;
  double integrator_dt = 1e-3;
  std::vector<double> x0;                   // empty = system default
  double input_limit = 0.0;                 // polysys box half-width; 0 = 20

  // Dataset construction (polysys grid + clusters).
  std::string dataset_path;  // load instead of building when set
  int grid_per_axis = 10;
  int cluster_count = 5;
  int cluster_per_axis = 2;
  double cluster_half_width = 0.1;
  double control_amplitude = 2.0;
  double measurement_dt = 1e-3;
  int synthetic_n = 0;  // when > 0, synthetic dataset of this size instead

  // Episodic collection.
  int episodes = 3;

  // Timing benchmark.
  std::vector<int> timing_n = {2048, 4096, 8192, 16384};
  int timing_m = 40;
  int timing_steps = 100;
  int timing_warmup = 50;
  int full_gp_max_n = 8192;  // largest N to time the full-model filter at

  // Noise sweep.
  std::vector<double> noise_scales = {1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0};
  std::vector<double> eps_grid;  // empty = 0.05 .. 0.95 step 0.05
  int noise_states = 32;
  int noise_n = 200;
  int noise_m = 40;

  // Output.
  std::string output_root;  // default: $GPCERT_OUTPUT_ROOT or "runs"
  std::string run_id;       // default: <verb>-<utc stamp>
  int threads = 0;          // 0 = one worker per seed up to hardware limit

  void validate() const;
  // Canonical "key=value" line dump; hashing it keys the manifest.
  std::string canonical_dump() const;
  std::uint64_t config_hash() const;
};

// Everything one closed-loop experiment needs, built once per seed: the
// mismatched plant, the certificate problem on the nominal model, the
// dataset, the fitted posterior, and the correlation table for subset
// selection.  Move-only (owns the model).
struct Lab {
  SystemKind system = SystemKind::Polysys;
  ControlAffineDynamics plant;
  Certificate certificate;
  CertificateProblem problem;
  Dataset data{1, 1};
  std::unique_ptr<GpModel> model;
  std::unique_ptr<CorrelationIndicator> indicator;
  VectorXd x0;
  bench::SimulateOptions sim;
  double calibrated_beta = 0.0;  // equals problem.beta after construction
};

// Builds the per-seed experiment fixture.  `need_indicator` may be false for
// runs without subset controllers to skip the O(N^2) offline pass.
Lab make_lab(const ExperimentConfig& cfg, std::uint64_t seed, bool need_indicator = true);

SelectionConfig selection_config(const ExperimentConfig& cfg);

std::unique_ptr<ControllerSession> make_session(const Lab& lab, ControllerKind kind,
                                                const SelectionConfig& sel);

struct CollectResult {
  Dataset data;
  std::vector<int> episode_sizes;
  std::vector<double> episode_feasibility;  // fraction of non-backup steps
};

// Episodic data collection: episode 0 runs the nominal certificate filter,
// later episodes run the full-model cone filter on everything gathered so
// far.  When save_dir is set the cumulative dataset is written after each
// episode.
CollectResult episodic_collect(const ExperimentConfig& cfg, std::uint64_t seed,
                               const std::string& save_dir = "");

struct TimingRow {
  int n = 0;
  int subset_size = 0;
  double select_mean_ms = 0.0;
  double select_std_ms = 0.0;
  double ours_mean_ms = 0.0;
  double ours_std_ms = 0.0;
  double full_mean_ms = 0.0;  // NaN above full_gp_max_n
  double full_std_ms = 0.0;
  double offline_fit_ms = 0.0;
  double offline_indicator_ms = 0.0;
};

// Per-step wall times on synthetic datasets, one thread, warm-up discarded.
// "ours" covers selection + subset fit + inference + solve jointly; "full"
// covers the full-model filter at the same states.
std::vector<TimingRow> timing_sweep(const ExperimentConfig& cfg);

// Entry point behind the `gpcert` binary: parses flags/config, dispatches
// the verb, returns the process exit code (0 ok, 1 runtime error, 2 usage).
int main_cli(int argc, char** argv);

}  // namespace gpcert::cli
