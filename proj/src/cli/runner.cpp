#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "commands.hpp"
#include "gpcert/bench/cartpole.hpp"
#include "gpcert/bench/noise.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gpcert::cli {

namespace {

constexpr std::uint64_t kSeedMix = 0x9e3779b97f4a7c15ULL;

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  a ^= b + kSeedMix + (a << 6) + (a >> 2);
  return a;
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& samples, int from) {
  MeanStd out;
  const int count = static_cast<int>(samples.size()) - from;
  if (count <= 0) {
    return out;
  }
  for (int i = from; i < static_cast<int>(samples.size()); ++i) {
    out.mean += samples[i];
  }
  out.mean /= count;
  if (count > 1) {
    double acc = 0.0;
    for (int i = from; i < static_cast<int>(samples.size()); ++i) {
      acc += (samples[i] - out.mean) * (samples[i] - out.mean);
    }
    out.std = std::sqrt(acc / (count - 1));
  }
  return out;
}

// ---------------------------------------------------------------------------
// System fixture: plant + certificate problem, no data yet.

struct Fixture {
  SystemKind system = SystemKind::Polysys;
  bench::PolysysPair pair;  // polysys only
  ControlAffineDynamics plant;
  CertificateProblem problem;
  VectorXd x0;
  bench::SimulateOptions sim;
  std::optional<AdpKernel> kernel;
  double noise_variance = 0.0;
};

VectorXd default_x0(SystemKind system, std::uint64_t seed_mix) {
  if (system == SystemKind::Polysys) {
    return (VectorXd(2) << -0.4, 0.6).finished();
  }
  // Hanging start with a seeded perturbation so episodes explore slightly
  // different swing-up paths.
  std::mt19937_64 rng(mix(seed_mix, 0x5bd1e995u));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  VectorXd x(4);
  x[0] = 0.05 * unit(rng);
  x[1] = 0.05 * unit(rng);
  x[2] = std::numbers::pi + 0.15 * unit(rng);
  x[3] = 0.1 * unit(rng);
  return x;
}

AdpKernel config_kernel(const ExperimentConfig& cfg, int control_dim) {
  SeKernelParams f;
  f.signal_variance = cfg.kf_variance;
  f.lengthscales = VectorXd::Constant(1, cfg.kf_lengthscale);
  SeKernelParams g;
  g.signal_variance = cfg.kg_variance;
  g.lengthscales = VectorXd::Constant(1, cfg.kg_lengthscale);
  return AdpKernel::squared_exponential(f, std::vector<SeKernelParams>(control_dim, g));
}

Fixture make_fixture(const ExperimentConfig& cfg, std::uint64_t seed) {
  Fixture fx;
  fx.system = cfg.system;
  fx.noise_variance = cfg.noise_std * cfg.noise_std;

  const bool polysys = cfg.system == SystemKind::Polysys;
  fx.sim.horizon = cfg.horizon > 0.0 ? cfg.horizon : (polysys ? 2.5 : 8.0);
  fx.sim.control_dt = cfg.control_dt > 0.0 ? cfg.control_dt : (polysys ? 0.01 : 0.025);
  fx.sim.integrator_dt = cfg.integrator_dt;

  ErrorBoundConfig ebc;
  ebc.delta = cfg.delta;

  if (polysys) {
    fx.pair = bench::make_polysys(seed, cfg.perturbation_scale);
    fx.plant = bench::polysys_dynamics(fx.pair.truth);
    const double lim = cfg.input_limit > 0.0 ? cfg.input_limit : 20.0;
    fx.problem = CertificateProblem{
        bench::clf_from_are(fx.pair.nominal, cfg.clf_rate),
        bench::polysys_dynamics(fx.pair.nominal),
        [](const VectorXd&) { return VectorXd::Zero(2); },
        Box{VectorXd::Constant(2, -lim), VectorXd::Constant(2, lim)},
        ebc,
        cfg.beta};
  } else {
    bench::CartPoleParams nominal_params;
    bench::CartPoleParams true_params = nominal_params;
    true_params.pole_mass *= cfg.mass_mismatch;
    fx.plant = bench::cartpole_dynamics(true_params);
    // The swing-up closure carries a hysteresis flag shared by every session
    // built from this problem; the flag re-resolves from the angle on the
    // first call of each episode, so sequential sessions stay independent
    // for starts outside the (catch, release) dead band.
    fx.problem = CertificateProblem{
        bench::cartpole_cbf(cfg.cbf_gain, cfg.rail_limit, cfg.cbf_rate),
        bench::cartpole_dynamics(nominal_params),
        bench::swingup_reference(nominal_params),
        Box{VectorXd::Constant(1, -nominal_params.force_limit),
            VectorXd::Constant(1, nominal_params.force_limit)},
        ebc,
        cfg.beta};
  }

  if (cfg.x0.empty()) {
    fx.x0 = default_x0(cfg.system, seed);
  } else {
    fx.x0 = Eigen::Map<const VectorXd>(cfg.x0.data(), cfg.x0.size());
  }
  fx.kernel = config_kernel(cfg, fx.plant.control_dim);
  return fx;
}

// Finite-difference certificate-rate residuals harvested from a closed-loop
// trajectory, measured over the zero-order-hold interval the controller
// actually used.  Divergent tails are dropped.
void harvest(const Fixture& fx, const bench::Trajectory& traj, double dt,
             const std::string& tag, Dataset& out) {
  const auto& cert = fx.problem.certificate;
  const int count = static_cast<int>(traj.steps.size());
  for (int k = 0; k < count; ++k) {
    const VectorXd& x = traj.steps[k].x;
    const VectorXd& u = traj.steps[k].u;
    const VectorXd& xn = (k + 1 < count) ? traj.steps[k + 1].x : traj.final_state;
    if (!x.allFinite() || !xn.allFinite() || x.norm() > 10.0) {
      continue;
    }
    const auto lie = lie_derivatives(cert, fx.problem.nominal, x);
    const double z =
        (cert.value(xn) - cert.value(x)) / dt - (lie.lf + lie.lg.dot(u));
    if (!std::isfinite(z) || std::abs(z) > 1e6) {
      continue;
    }
    out.append(x, u, z, tag);
  }
}

Dataset build_polysys_data(const ExperimentConfig& cfg, const Fixture& fx,
                           std::uint64_t seed) {
  const auto& cert = fx.problem.certificate;
  if (cfg.synthetic_n > 0) {
    return bench::synthetic_polysys_dataset(fx.pair, cert, cfg.synthetic_n, seed);
  }
  bench::GridSpec spec;
  spec.coarse_grid = {cfg.grid_per_axis, cfg.grid_per_axis};
  spec.control_amplitude = cfg.control_amplitude;
  spec.measurement_dt = cfg.measurement_dt;
  spec.seed = seed;
  auto clusters = bench::default_polysys_clusters(fx.pair, cert);
  const int want = std::min<int>(cfg.cluster_count, static_cast<int>(clusters.size()));
  clusters.resize(want);
  for (auto& c : clusters) {
    c.half_width = cfg.cluster_half_width;
    c.per_axis_count.assign(4, cfg.cluster_per_axis);
  }
  spec.clusters = std::move(clusters);
  return bench::build_polysys_dataset(fx.pair, cert, spec);
}

double resolve_beta(const ExperimentConfig& cfg, const Fixture& fx, const Dataset& data,
                    const GpModel& model, std::uint64_t seed) {
  if (!cfg.calibrate) {
    return cfg.beta;
  }
  ErrorBoundConfig ebc;
  ebc.delta = cfg.delta;
  if (cfg.calibration_holdout <= 0.0) {
    return calibrate_beta(model, data, ebc);
  }
  const int count = data.size();
  const int held = std::clamp(static_cast<int>(std::lround(cfg.calibration_holdout * count)),
                              1, count - 1);
  std::vector<int> order(count);
  for (int i = 0; i < count; ++i) {
    order[i] = i;
  }
  std::mt19937_64 rng(mix(seed, 0xca11b7a7e));
  std::shuffle(order.begin(), order.end(), rng);
  const std::vector<int> val(order.begin(), order.begin() + held);
  const std::vector<int> train(order.begin() + held, order.end());
  GpModel train_model =
      GpModel::fit(*fx.kernel, data.subset(train), fx.noise_variance);
  return calibrate_beta(train_model, data.subset(val), ebc);
}

bool needs_model(ControllerKind kind) {
  return kind == ControllerKind::GpSocpFull || kind == ControllerKind::GpSocpOurs ||
         kind == ControllerKind::GpSocpNaive;
}

// ---------------------------------------------------------------------------
// Output plumbing.

std::string utc_stamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm_utc);
  return buf;
}

std::string git_describe() {
  FILE* pipe = popen("git describe --always --dirty 2>/dev/null", "r");
  if (pipe == nullptr) {
    return "unknown";
  }
  char buf[128] = {0};
  std::string out;
  while (fgets(buf, sizeof(buf), pipe) != nullptr) {
    out += buf;
  }
  pclose(pipe);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) {
    out.pop_back();
  }
  return out.empty() ? "unknown" : out;
}

fs::path prepare_run_dir(const ExperimentConfig& cfg, const std::string& verb) {
  std::string root = cfg.output_root;
  if (root.empty()) {
    if (const char* env = std::getenv("GPCERT_OUTPUT_ROOT")) {
      root = env;
    }
  }
  if (root.empty()) {
    root = "runs";
  }
  std::string id = cfg.run_id.empty() ? verb + "-" + utc_stamp() : cfg.run_id;
  fs::path dir = fs::path(root) / id;
  for (int k = 1; fs::exists(dir); ++k) {
    dir = fs::path(root) / (id + "-" + std::to_string(k));
  }
  fs::create_directories(dir);
  return dir;
}

json config_json(const ExperimentConfig& cfg) {
  json j;
  j["system"] = to_string(cfg.system);
  std::vector<std::string> ctrl;
  ctrl.reserve(cfg.controllers.size());
  for (auto k : cfg.controllers) {
    ctrl.push_back(to_string(k));
  }
  j["controllers"] = ctrl;
  j["seeds"] = cfg.seeds;
  j["perturbation_scale"] = cfg.perturbation_scale;
  j["mass_mismatch"] = cfg.mass_mismatch;
  j["clf_rate"] = cfg.clf_rate;
  j["cbf_gain"] = cfg.cbf_gain;
  j["cbf_rate"] = cfg.cbf_rate;
  j["rail_limit"] = cfg.rail_limit;
  j["kf_variance"] = cfg.kf_variance;
  j["kf_lengthscale"] = cfg.kf_lengthscale;
  j["kg_variance"] = cfg.kg_variance;
  j["kg_lengthscale"] = cfg.kg_lengthscale;
  j["noise_std"] = cfg.noise_std;
  j["beta"] = cfg.beta;
  j["calibrate"] = cfg.calibrate;
  j["delta"] = cfg.delta;
  j["calibration_holdout"] = cfg.calibration_holdout;
  j["subset_size"] = cfg.subset_size;
  j["epsilon"] = cfg.epsilon;
  j["hint_policy"] = cfg.hint_policy;
  j["horizon"] = cfg.horizon;
  j["control_dt"] = cfg.control_dt;
  j["integrator_dt"] = cfg.integrator_dt;
  j["x0"] = cfg.x0;
  j["input_limit"] = cfg.input_limit;
  j["dataset_path"] = cfg.dataset_path;
  j["grid_per_axis"] = cfg.grid_per_axis;
  j["cluster_count"] = cfg.cluster_count;
  j["cluster_per_axis"] = cfg.cluster_per_axis;
  j["cluster_half_width"] = cfg.cluster_half_width;
  j["control_amplitude"] = cfg.control_amplitude;
  j["measurement_dt"] = cfg.measurement_dt;
  j["synthetic_n"] = cfg.synthetic_n;
  j["episodes"] = cfg.episodes;
  j["timing_n"] = cfg.timing_n;
  j["timing_m"] = cfg.timing_m;
  j["timing_steps"] = cfg.timing_steps;
  j["timing_warmup"] = cfg.timing_warmup;
  j["full_gp_max_n"] = cfg.full_gp_max_n;
  j["noise_scales"] = cfg.noise_scales;
  j["eps_grid"] = cfg.eps_grid;
  j["noise_states"] = cfg.noise_states;
  j["noise_n"] = cfg.noise_n;
  j["noise_m"] = cfg.noise_m;
  j["threads"] = cfg.threads;
  return j;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) {
    throw SetupError("cannot write " + path.string());
  }
  out << j.dump(2) << "\n";
}

void write_manifest(const fs::path& dir, const ExperimentConfig& cfg,
                    const std::string& verb) {
  json j;
  j["verb"] = verb;
  j["run_id"] = dir.filename().string();
  j["created_utc"] = utc_stamp();
  j["git"] = git_describe();
  j["config_hash"] = cfg.config_hash();
  j["config"] = config_json(cfg);
  write_json(dir / "manifest.json", j);
}

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (threads <= 0) {
    threads = static_cast<int>(std::thread::hardware_concurrency());
  }
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) {
      fn(i);
    }
    return;
  }
  std::atomic<int> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= count) {
        return;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) {
          first_error = std::current_exception();
        }
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back(worker);
  }
  for (auto& t : pool) {
    t.join();
  }
  if (first_error) {
    std::rethrow_exception(first_error);
  }
}

double feasible_fraction(const bench::Trajectory& traj) {
  if (traj.steps.empty()) {
    return 0.0;
  }
  int ok = 0;
  for (const auto& s : traj.steps) {
    ok += (s.status != FilterStatus::BackupUsed) ? 1 : 0;
  }
  return static_cast<double>(ok) / static_cast<double>(traj.steps.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Names and config plumbing declared in the public header.

std::string to_string(SystemKind kind) {
  return kind == SystemKind::Polysys ? "polysys" : "cartpole";
}

std::string to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::OracleQp:
      return "oracle_qp";
    case ControllerKind::NominalQp:
      return "nominal_qp";
    case ControllerKind::Unfiltered:
      return "unfiltered";
    case ControllerKind::GpSocpFull:
      return "gp_socp_full";
    case ControllerKind::GpSocpOurs:
      return "gp_socp_ours";
    case ControllerKind::GpSocpNaive:
      return "gp_socp_naive";
  }
  throw UsageError("unknown controller kind");
}

SystemKind parse_system(const std::string& name) {
  if (name == "polysys") {
    return SystemKind::Polysys;
  }
  if (name == "cartpole") {
    return SystemKind::CartPole;
  }
  throw UsageError("unknown system '" + name + "' (expected polysys|cartpole)");
}

ControllerKind parse_controller(const std::string& name) {
  for (auto kind : {ControllerKind::OracleQp, ControllerKind::NominalQp,
                    ControllerKind::Unfiltered, ControllerKind::GpSocpFull,
                    ControllerKind::GpSocpOurs, ControllerKind::GpSocpNaive}) {
    if (to_string(kind) == name) {
      return kind;
    }
  }
  throw UsageError("unknown controller '" + name +
                   "' (expected oracle_qp|nominal_qp|unfiltered|gp_socp_full|"
                   "gp_socp_ours|gp_socp_naive|all)");
}

std::vector<ControllerKind> parse_controllers(const std::string& csv) {
  std::vector<ControllerKind> out;
  std::stringstream ss(csv);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) {
      continue;
    }
    if (token == "all") {
      return {ControllerKind::OracleQp,   ControllerKind::NominalQp,
              ControllerKind::Unfiltered, ControllerKind::GpSocpFull,
              ControllerKind::GpSocpOurs, ControllerKind::GpSocpNaive};
    }
    out.push_back(parse_controller(token));
  }
  if (out.empty()) {
    throw UsageError("no controllers given");
  }
  return out;
}

void ExperimentConfig::validate() const {
  if (controllers.empty()) {
    throw UsageError("config: controllers must be nonempty");
  }
  if (seeds.empty()) {
    throw UsageError("config: seeds must be nonempty");
  }
  if (!(perturbation_scale >= 0.0)) {
    throw UsageError("config: perturbation_scale must be >= 0");
  }
  if (!(mass_mismatch > 0.0)) {
    throw UsageError("config: mass_mismatch must be > 0");
  }
  if (!(kf_variance > 0.0 && kf_lengthscale > 0.0 && kg_variance > 0.0 &&
        kg_lengthscale > 0.0)) {
    throw UsageError("config: kernel hyperparameters must be positive");
  }
  if (!(noise_std >= 0.0)) {
    throw UsageError("config: noise_std must be >= 0");
  }
  if (!(beta > 0.0)) {
    throw UsageError("config: beta must be > 0");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw UsageError("config: delta must be in (0,1)");
  }
  if (calibration_holdout < 0.0 || calibration_holdout >= 1.0) {
    throw UsageError("config: calibration_holdout must be in [0,1)");
  }
  if (subset_size < 1) {
    throw UsageError("config: subset_size must be >= 1");
  }
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw UsageError("config: epsilon must be in (0,1)");
  }
  if (hint_policy != "full" && hint_policy != "previous") {
    throw UsageError("config: hint_policy must be full|previous");
  }
  if (horizon < 0.0 || control_dt < 0.0 || !(integrator_dt > 0.0)) {
    throw UsageError("config: nonpositive timeparameters");
  }
  if (!x0.empty()) {
    const std::size_t want = system == SystemKind::Polysys ? 2 : 4;
    if (x0.size() != want) {
      throw UsageError("config: x0 must have " + std::to_string(want) + " entries");
    }
  }
  if (input_limit < 0.0) {
    throw UsageError("config: input_limit must be >= 0");
  }
  if (grid_per_axis < 1 || cluster_count < 0 || cluster_per_axis < 1) {
    throw UsageError("config: dataset grid sizes must be positive");
  }
  if (!(cluster_half_width > 0.0) || !(control_amplitude > 0.0) ||
      !(measurement_dt > 0.0)) {
    throw UsageError("config: dataset scales must be positive");
  }
  if (synthetic_n < 0) {
    throw UsageError("config: synthetic_n must be >= 0");
  }
  if (episodes < 1) {
    throw UsageError("config: episodes must be >= 1");
  }
  if (timing_n.empty() || timing_m < 1 || timing_steps < 1 || timing_warmup < 0) {
    throw UsageError("config: bad timing settings");
  }
  for (int n : timing_n) {
    if (n < timing_m) {
      throw UsageError("config: timing_n entries must be >= timing_m");
    }
  }
  if (noise_scales.empty() || noise_states < 1 || noise_n < 2 || noise_m < 2) {
    throw UsageError("config: bad noise sweep settings");
  }
  for (double e : eps_grid) {
    if (!(e > 0.0 && e < 1.0)) {
      throw UsageError("config: eps_grid entries must be in (0,1)");
    }
  }
  if (threads < 0) {
    throw UsageError("config: threads must be >= 0");
  }
}

std::string ExperimentConfig::canonical_dump() const {
  std::ostringstream os;
  os.precision(17);
  auto scalars = [&os](const char* key, auto value) { os << key << "=" << value << "\n"; };
  os << "system=" << to_string(system) << "\n";
  os << "controllers=";
  for (std::size_t i = 0; i < controllers.size(); ++i) {
    os << (i ? "," : "") << to_string(controllers[i]);
  }
  os << "\nseeds=";
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    os << (i ? "," : "") << seeds[i];
  }
  os << "\n";
  scalars("perturbation_scale", perturbation_scale);
  scalars("mass_mismatch", mass_mismatch);
  scalars("clf_rate", clf_rate);
  scalars("cbf_gain", cbf_gain);
  scalars("cbf_rate", cbf_rate);
  scalars("rail_limit", rail_limit);
  scalars("kf_variance", kf_variance);
  scalars("kf_lengthscale", kf_lengthscale);
  scalars("kg_variance", kg_variance);
  scalars("kg_lengthscale", kg_lengthscale);
  scalars("noise_std", noise_std);
  scalars("beta", beta);
  scalars("calibrate", calibrate ? 1 : 0);
  scalars("delta", delta);
  scalars("calibration_holdout", calibration_holdout);
  scalars("subset_size", subset_size);
  scalars("epsilon", epsilon);
  scalars("hint_policy", hint_policy);
  scalars("horizon", horizon);
  scalars("control_dt", control_dt);
  scalars("integrator_dt", integrator_dt);
  os << "x0=";
  for (std::size_t i = 0; i < x0.size(); ++i) {
    os << (i ? "," : "") << x0[i];
  }
  os << "\n";
  scalars("input_limit", input_limit);
  scalars("dataset_path", dataset_path);
  scalars("grid_per_axis", grid_per_axis);
  scalars("cluster_count", cluster_count);
  scalars("cluster_per_axis", cluster_per_axis);
  scalars("cluster_half_width", cluster_half_width);
  scalars("control_amplitude", control_amplitude);
  scalars("measurement_dt", measurement_dt);
  scalars("synthetic_n", synthetic_n);
  scalars("episodes", episodes);
  os << "timing_n=";
  for (std::size_t i = 0; i < timing_n.size(); ++i) {
    os << (i ? "," : "") << timing_n[i];
  }
  os << "\n";
  scalars("timing_m", timing_m);
  scalars("timing_steps", timing_steps);
  scalars("timing_warmup", timing_warmup);
  scalars("full_gp_max_n", full_gp_max_n);
  os << "noise_scales=";
  for (std::size_t i = 0; i < noise_scales.size(); ++i) {
    os << (i ? "," : "") << noise_scales[i];
  }
  os << "\neps_grid=";
  for (std::size_t i = 0; i < eps_grid.size(); ++i) {
    os << (i ? "," : "") << eps_grid[i];
  }
  os << "\n";
  scalars("noise_states", noise_states);
  scalars("noise_n", noise_n);
  scalars("noise_m", noise_m);
  return os.str();
}

std::uint64_t ExperimentConfig::config_hash() const {
  const std::string dump = canonical_dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

SelectionConfig selection_config(const ExperimentConfig& cfg) {
  SelectionConfig sel;
  sel.M = cfg.subset_size;
  sel.epsilon = cfg.epsilon;
  sel.lg_hint_policy = cfg.hint_policy == "previous"
                           ? SelectionConfig::LgHintPolicy::PreviousStep
                           : SelectionConfig::LgHintPolicy::FullDataset;
  return sel;
}

Lab make_lab(const ExperimentConfig& cfg, std::uint64_t seed, bool need_indicator) {
  Fixture fx = make_fixture(cfg, seed);
  Lab lab;
  lab.system = cfg.system;
  lab.plant = fx.plant;
  lab.x0 = fx.x0;
  lab.sim = fx.sim;

  bool any_model = cfg.calibrate;
  for (auto kind : cfg.controllers) {
    any_model = any_model || needs_model(kind);
  }

  lab.data = Dataset(fx.plant.state_dim, fx.plant.control_dim);
  if (!cfg.dataset_path.empty()) {
    lab.data = Dataset::load(cfg.dataset_path);
  } else if (cfg.system == SystemKind::Polysys) {
    lab.data = build_polysys_data(cfg, fx, seed);
  } else if (any_model) {
    lab.data = episodic_collect(cfg, seed).data;
  }

  if (any_model && lab.data.size() > 0) {
    lab.model =
        std::make_unique<GpModel>(GpModel::fit(*fx.kernel, lab.data, fx.noise_variance));
    lab.calibrated_beta = resolve_beta(cfg, fx, lab.data, *lab.model, seed);
  } else {
    lab.calibrated_beta = cfg.beta;
  }
  fx.problem.beta = lab.calibrated_beta;
  lab.certificate = fx.problem.certificate;
  lab.problem = std::move(fx.problem);

  const bool want_subset =
      std::any_of(cfg.controllers.begin(), cfg.controllers.end(), [](ControllerKind k) {
        return k == ControllerKind::GpSocpOurs;
      });
  if (need_indicator && lab.model != nullptr && want_subset) {
    lab.indicator = std::make_unique<CorrelationIndicator>(
        build_correlation_indicator(*lab.model, cfg.epsilon));
  }
  return lab;
}

std::unique_ptr<ControllerSession> make_session(const Lab& lab, ControllerKind kind,
                                                const SelectionConfig& sel) {
  switch (kind) {
    case ControllerKind::OracleQp:
      return std::make_unique<OracleQpSession>(lab.plant, lab.problem);
    case ControllerKind::NominalQp:
      return std::make_unique<NominalQpSession>(lab.problem);
    case ControllerKind::Unfiltered:
      return std::make_unique<UnfilteredSession>(lab.problem);
    case ControllerKind::GpSocpFull:
      if (lab.model == nullptr) {
        throw UsageError("make_session: full-model filter needs a fitted model");
      }
      return std::make_unique<GpSocpFullSession>(lab.problem, *lab.model);
    case ControllerKind::GpSocpOurs:
      if (lab.model == nullptr || lab.indicator == nullptr) {
        throw UsageError("make_session: subset filter needs a model and indicator");
      }
      return std::make_unique<GpSocpSubsetSession>(lab.problem, *lab.model, sel,
                                                   lab.indicator.get(),
                                                   SubsetPolicy::Online);
    case ControllerKind::GpSocpNaive:
      if (lab.model == nullptr) {
        throw UsageError("make_session: subset filter needs a fitted model");
      }
      return std::make_unique<GpSocpSubsetSession>(lab.problem, *lab.model, sel,
                                                   lab.indicator.get(),
                                                   SubsetPolicy::Naive);
  }
  throw UsageError("make_session: unknown controller kind");
}

CollectResult episodic_collect(const ExperimentConfig& cfg, std::uint64_t seed,
                               const std::string& save_dir) {
  Fixture fx = make_fixture(cfg, seed);
  if (!save_dir.empty()) {
    fs::create_directories(save_dir);
  }
  CollectResult out{Dataset(fx.plant.state_dim, fx.plant.control_dim), {}, {}};
  std::unique_ptr<GpModel> model;
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    std::unique_ptr<ControllerSession> session;
    if (ep == 0 || out.data.size() == 0) {
      session = std::make_unique<NominalQpSession>(fx.problem);
    } else {
      model = std::make_unique<GpModel>(
          GpModel::fit(*fx.kernel, out.data, fx.noise_variance));
      session = std::make_unique<GpSocpFullSession>(fx.problem, *model);
    }
    const VectorXd x0 = cfg.x0.empty()
                            ? default_x0(cfg.system, mix(seed, 0x1000u + ep))
                            : fx.x0;
    const auto traj =
        bench::simulate(fx.plant, *session, x0, &fx.problem.certificate, fx.sim);
    const int before = out.data.size();
    harvest(fx, traj, fx.sim.control_dt, "ep" + std::to_string(ep), out.data);
    out.episode_sizes.push_back(out.data.size() - before);
    out.episode_feasibility.push_back(feasible_fraction(traj));
    if (!save_dir.empty()) {
      out.data.save((fs::path(save_dir) / ("dataset_ep" + std::to_string(ep) + ".txt"))
                        .string());
    }
  }
  return out;
}

std::vector<TimingRow> timing_sweep(const ExperimentConfig& cfg) {
  ExperimentConfig local = cfg;
  local.system = SystemKind::Polysys;
  const std::uint64_t seed = local.seeds.empty() ? 0 : local.seeds.front();
  Fixture fx = make_fixture(local, seed);
  const auto& cert = fx.problem.certificate;

  SelectionConfig sel;
  sel.M = local.timing_m;
  sel.epsilon = local.epsilon;
  // Large-N deployments estimate the gain row from the previous step's
  // subset, so the per-step cost stays independent of the full dataset.
  sel.lg_hint_policy = SelectionConfig::LgHintPolicy::PreviousStep;

  const int total = local.timing_warmup + local.timing_steps;
  std::vector<TimingRow> rows;
  for (int n : local.timing_n) {
    const bool defer = n > local.full_gp_max_n;

    Dataset data = bench::synthetic_polysys_dataset(fx.pair, cert, n, mix(seed, n));
    auto t0 = std::chrono::steady_clock::now();
    GpModel model = GpModel::fit(*fx.kernel, std::move(data), fx.noise_variance, defer);
    const double fit_ms = ms_since(t0);

    t0 = std::chrono::steady_clock::now();
    const CorrelationIndicator B = build_correlation_indicator(model, sel.epsilon);
    const double indicator_ms = ms_since(t0);

    std::mt19937_64 rng(mix(seed, 0x7131 + n));
    std::uniform_real_distribution<double> coord(-2.0, 2.0);
    std::vector<VectorXd> states(total);
    for (auto& x : states) {
      x = (VectorXd(2) << coord(rng), coord(rng)).finished();
    }

    std::vector<double> select_ms(total), ours_ms(total), full_ms;
    for (int i = 0; i < total; ++i) {
      const RowVectorXd dir = lie_derivatives(cert, fx.problem.nominal, states[i]).lg;
      t0 = std::chrono::steady_clock::now();
      select_online(model, states[i], sel, B, dir);
      select_ms[i] = ms_since(t0);
    }

    GpSocpSubsetSession ours(fx.problem, model, sel, &B, SubsetPolicy::Online);
    for (int i = 0; i < total; ++i) {
      t0 = std::chrono::steady_clock::now();
      ours.step(states[i]);
      ours_ms[i] = ms_since(t0);
    }

    if (!defer) {
      full_ms.resize(total);
      for (int i = 0; i < total; ++i) {
        t0 = std::chrono::steady_clock::now();
        gp_socp(fx.problem, model, states[i]);
        full_ms[i] = ms_since(t0);
      }
    }

    TimingRow row;
    row.n = n;
    row.subset_size = local.timing_m;
    const auto sel_stats = mean_std(select_ms, local.timing_warmup);
    row.select_mean_ms = sel_stats.mean;
    row.select_std_ms = sel_stats.std;
    const auto ours_stats = mean_std(ours_ms, local.timing_warmup);
    row.ours_mean_ms = ours_stats.mean;
    row.ours_std_ms = ours_stats.std;
    if (!defer) {
      const auto full_stats = mean_std(full_ms, local.timing_warmup);
      row.full_mean_ms = full_stats.mean;
      row.full_std_ms = full_stats.std;
    } else {
      row.full_mean_ms = std::numeric_limits<double>::quiet_NaN();
      row.full_std_ms = std::numeric_limits<double>::quiet_NaN();
    }
    row.offline_fit_ms = fit_ms;
    row.offline_indicator_ms = indicator_ms;
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Verbs.

int run_command(const ExperimentConfig& cfg) {
  const fs::path dir = prepare_run_dir(cfg, "run");
  write_manifest(dir, cfg, "run");
  const SelectionConfig sel = selection_config(cfg);

  struct Row {
    std::uint64_t seed = 0;
    std::string controller;
    std::string csv;
    double final_norm = 0.0;
    double min_certificate = 0.0;
    double max_abs_rail = 0.0;
    double feasibility = 0.0;
    double mean_solve_ms = 0.0;
    double beta = 0.0;
    int dataset_size = 0;
    bool diverged = false;
  };
  const int seed_count = static_cast<int>(cfg.seeds.size());
  const int ctrl_count = static_cast<int>(cfg.controllers.size());
  std::vector<Row> rows(seed_count * ctrl_count);

  parallel_for(seed_count, cfg.threads, [&](int si) {
    const std::uint64_t seed = cfg.seeds[si];
    Lab lab = make_lab(cfg, seed);
    for (int ci = 0; ci < ctrl_count; ++ci) {
      auto session = make_session(lab, cfg.controllers[ci], sel);
      const auto traj =
          bench::simulate(lab.plant, *session, lab.x0, &lab.certificate, lab.sim);
      const std::string csv = to_string(cfg.system) + "_seed" + std::to_string(seed) +
                              "_" + session->name() + ".csv";
      traj.save_csv((dir / csv).string(), &lab.certificate);

      Row& row = rows[si * ctrl_count + ci];
      row.seed = seed;
      row.controller = session->name();
      row.csv = csv;
      row.final_norm = traj.final_state.allFinite() ? traj.final_state.norm()
                                                    : std::numeric_limits<double>::infinity();
      row.min_certificate = traj.min_certificate();
      row.feasibility = feasible_fraction(traj);
      row.beta = lab.calibrated_beta;
      row.dataset_size = lab.data.size();
      row.diverged = traj.diverged;
      double rail = 0.0;
      double solve_acc = 0.0;
      for (const auto& s : traj.steps) {
        rail = std::max(rail, std::abs(s.x[0]));
        solve_acc += s.solve_ms;
      }
      row.max_abs_rail = rail;
      row.mean_solve_ms = traj.steps.empty() ? 0.0 : solve_acc / traj.steps.size();
    }
  });

  json out;
  out["rows"] = json::array();
  for (const auto& row : rows) {
    json r;
    r["seed"] = row.seed;
    r["controller"] = row.controller;
    r["csv"] = row.csv;
    r["final_norm"] = row.final_norm;
    r["min_certificate"] = row.min_certificate;
    r["max_abs_rail"] = row.max_abs_rail;
    r["feasibility"] = row.feasibility;
    r["mean_solve_ms"] = row.mean_solve_ms;
    r["beta"] = row.beta;
    r["dataset_size"] = row.dataset_size;
    r["diverged"] = row.diverged;
    out["rows"].push_back(r);
  }
  write_json(dir / "summary.json", out);

  for (const auto& row : rows) {
    std::cout << to_string(cfg.system) << " seed=" << row.seed << " "
              << row.controller << ": |x(T)|=" << row.final_norm
              << " minC=" << row.min_certificate << " feas=" << row.feasibility
              << (row.diverged ? " DIVERGED" : "") << "\n";
  }
  std::cout << "wrote " << (dir / "summary.json").string() << "\n";
  return 0;
}

int collect_command(const ExperimentConfig& cfg) {
  const fs::path dir = prepare_run_dir(cfg, "collect");
  write_manifest(dir, cfg, "collect");

  struct Row {
    std::uint64_t seed = 0;
    std::vector<int> episode_sizes;
    std::vector<double> episode_feasibility;
    int total = 0;
  };
  const int seed_count = static_cast<int>(cfg.seeds.size());
  std::vector<Row> rows(seed_count);

  parallel_for(seed_count, cfg.threads, [&](int si) {
    const std::uint64_t seed = cfg.seeds[si];
    const fs::path sub = dir / ("seed" + std::to_string(seed));
    auto res = episodic_collect(cfg, seed, sub.string());
    rows[si] = Row{seed, res.episode_sizes, res.episode_feasibility, res.data.size()};
  });

  json out;
  out["rows"] = json::array();
  for (const auto& row : rows) {
    json r;
    r["seed"] = row.seed;
    r["episode_sizes"] = row.episode_sizes;
    r["episode_feasibility"] = row.episode_feasibility;
    r["total"] = row.total;
    out["rows"].push_back(r);
    std::cout << "seed=" << row.seed << " episodes=" << row.episode_sizes.size()
              << " total=" << row.total << "\n";
  }
  write_json(dir / "collect.json", out);
  std::cout << "wrote " << (dir / "collect.json").string() << "\n";
  return 0;
}

int timing_command(const ExperimentConfig& cfg) {
  const fs::path dir = prepare_run_dir(cfg, "timing");
  write_manifest(dir, cfg, "timing");
  const auto rows = timing_sweep(cfg);

  json out;
  out["threads"] = 1;
  out["warmup"] = cfg.timing_warmup;
  out["steps"] = cfg.timing_steps;
  out["rows"] = json::array();
  for (const auto& row : rows) {
    json r;
    r["n"] = row.n;
    r["subset_size"] = row.subset_size;
    r["select"] = {{"mean_ms", row.select_mean_ms}, {"std_ms", row.select_std_ms}};
    r["ours"] = {{"mean_ms", row.ours_mean_ms}, {"std_ms", row.ours_std_ms}};
    if (std::isfinite(row.full_mean_ms)) {
      r["full"] = {{"mean_ms", row.full_mean_ms}, {"std_ms", row.full_std_ms}};
    } else {
      r["full"] = nullptr;
    }
    r["offline"] = {{"fit_ms", row.offline_fit_ms},
                    {"indicator_ms", row.offline_indicator_ms}};
    out["rows"].push_back(r);
    std::cout << "N=" << row.n << " select=" << row.select_mean_ms << "ms"
              << " ours=" << row.ours_mean_ms << "ms";
    if (std::isfinite(row.full_mean_ms)) {
      std::cout << " full=" << row.full_mean_ms << "ms"
                << " speedup=" << row.full_mean_ms / row.ours_mean_ms << "x";
    }
    std::cout << "\n";
  }
  write_json(dir / "timing.json", out);
  std::cout << "wrote " << (dir / "timing.json").string() << "\n";
  return 0;
}

int noise_sweep_command(const ExperimentConfig& cfg) {
  const fs::path dir = prepare_run_dir(cfg, "noise-sweep");
  write_manifest(dir, cfg, "noise-sweep");

  ExperimentConfig local = cfg;
  local.system = SystemKind::Polysys;
  const std::uint64_t seed = local.seeds.empty() ? 0 : local.seeds.front();
  Fixture fx = make_fixture(local, seed);
  const auto& cert = fx.problem.certificate;

  bench::NoiseSweepConfig ncfg;
  ncfg.noise_scales = local.noise_scales;
  if (local.eps_grid.empty()) {
    for (int k = 1; k <= 19; ++k) {
      ncfg.eps_grid.push_back(0.05 * k);
    }
  } else {
    ncfg.eps_grid = local.eps_grid;
  }
  ncfg.M = local.noise_m;
  ncfg.state_samples = local.noise_states;
  ncfg.seed = seed;
  ncfg.f_params.signal_variance = local.kf_variance;
  ncfg.f_params.lengthscales = VectorXd::Constant(1, local.kf_lengthscale);
  SeKernelParams g;
  g.signal_variance = local.kg_variance;
  g.lengthscales = VectorXd::Constant(1, local.kg_lengthscale);
  ncfg.g_params.assign(2, g);

  // Clean residual samples on the sweep's query region: the sweep itself
  // injects the noise at each scale.
  Dataset base(2, 2);
  std::mt19937_64 rng(mix(seed, 0x4015e));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ControlAffineDynamics truth = bench::polysys_dynamics(fx.pair.truth);
  for (int i = 0; i < local.noise_n; ++i) {
    VectorXd x(2);
    for (int d = 0; d < 2; ++d) {
      x[d] = ncfg.sample_lo[d] + (ncfg.sample_hi[d] - ncfg.sample_lo[d]) * unit(rng);
    }
    VectorXd u(2);
    u[0] = local.control_amplitude * (2.0 * unit(rng) - 1.0);
    u[1] = local.control_amplitude * (2.0 * unit(rng) - 1.0);
    const double z = bench::exact_delta(truth, fx.problem.nominal, cert, x, u);
    base.append(x, u, z);
  }

  const auto rows = bench::noise_sweep(base, ncfg);
  const auto best = bench::best_epsilon_per_scale(rows);

  json out;
  out["rows"] = json::array();
  for (const auto& row : rows) {
    out["rows"].push_back({{"noise_scale", row.noise_scale},
                           {"epsilon", row.epsilon},
                           {"zeta", row.zeta},
                           {"skipped", row.skipped}});
  }
  out["best_epsilon"] = json::array();
  for (const auto& [scale, eps] : best) {
    out["best_epsilon"].push_back({{"noise_scale", scale}, {"epsilon", eps}});
    std::cout << "noise=" << scale << " best_epsilon=" << eps << "\n";
  }
  write_json(dir / "noise_sweep.json", out);
  std::cout << "wrote " << (dir / "noise_sweep.json").string() << "\n";
  return 0;
}

int calibrate_beta_command(const ExperimentConfig& cfg) {
  ExperimentConfig local = cfg;
  local.calibrate = true;
  const std::uint64_t seed = local.seeds.empty() ? 0 : local.seeds.front();
  const fs::path dir = prepare_run_dir(local, "calibrate-beta");
  write_manifest(dir, local, "calibrate-beta");

  Lab lab = make_lab(local, seed, /*need_indicator=*/false);
  if (lab.model == nullptr) {
    throw UsageError("calibrate-beta: no dataset/model available");
  }
  int covered = 0;
  for (int j = 0; j < lab.data.size(); ++j) {
    const auto pred = lab.model->predict(lab.data.state(j), lab.data.control(j));
    if (std::abs(pred.mean - lab.data.output(j)) <=
        lab.calibrated_beta * pred.stddev + 1e-12) {
      ++covered;
    }
  }
  const double coverage = static_cast<double>(covered) / lab.data.size();

  json out;
  out["beta"] = lab.calibrated_beta;
  out["coverage"] = coverage;
  out["delta"] = local.delta;
  out["holdout"] = local.calibration_holdout;
  out["n"] = lab.data.size();
  write_json(dir / "calibration.json", out);
  std::cout << "beta=" << lab.calibrated_beta << " in-sample coverage=" << coverage
            << " (target >= " << 1.0 - local.delta << ")\n";
  std::cout << "wrote " << (dir / "calibration.json").string() << "\n";
  return 0;
}

int dataset_build_command(const ExperimentConfig& cfg) {
  if (cfg.system == SystemKind::CartPole) {
    throw UsageError("dataset build: cart-pole data comes from `collect`");
  }
  const std::uint64_t seed = cfg.seeds.empty() ? 0 : cfg.seeds.front();
  const fs::path dir = prepare_run_dir(cfg, "dataset");
  write_manifest(dir, cfg, "dataset build");

  Fixture fx = make_fixture(cfg, seed);
  const Dataset data = build_polysys_data(cfg, fx, seed);
  const fs::path path = dir / "dataset.txt";
  data.save(path.string());

  std::map<std::string, int> tags;
  for (int j = 0; j < data.size(); ++j) {
    tags[data.tag(j).empty() ? "(untagged)" : data.tag(j)]++;
  }
  json meta;
  meta["seed"] = seed;
  meta["n"] = data.size();
  meta["state_dim"] = data.state_dim();
  meta["control_dim"] = data.control_dim();
  meta["content_hash"] = data.content_hash();
  meta["tags"] = tags;
  write_json(dir / "dataset_meta.json", meta);

  std::cout << "wrote " << path.string() << " (" << data.size() << " points)\n";
  return 0;
}

int dataset_info_command(const std::string& path) {
  const Dataset data = Dataset::load(path);
  std::map<std::string, int> tags;
  double zmin = std::numeric_limits<double>::infinity();
  double zmax = -zmin;
  double zmean = 0.0;
  for (int j = 0; j < data.size(); ++j) {
    tags[data.tag(j).empty() ? "(untagged)" : data.tag(j)]++;
    zmin = std::min(zmin, data.output(j));
    zmax = std::max(zmax, data.output(j));
    zmean += data.output(j);
  }
  if (data.size() > 0) {
    zmean /= data.size();
  }
  std::cout << path << ": " << data.size() << " points, state_dim="
            << data.state_dim() << ", control_dim=" << data.control_dim() << "\n";
  std::cout << "outputs: min=" << zmin << " mean=" << zmean << " max=" << zmax << "\n";
  std::cout << "content_hash=" << data.content_hash() << "\n";
  for (const auto& [tag, count] : tags) {
    std::cout << "  " << tag << ": " << count << "\n";
  }
  return 0;
}

}  // namespace gpcert::cli
