#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gpcert/experiments.hpp"
#include "../src/cli/commands.hpp"
#include "support.hpp"

using namespace gpcert;
using namespace gpcert::cli;
namespace fs = std::filesystem;

namespace {

// Fast polysys configuration: small grid, no dense clusters, short horizon.
ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.system = SystemKind::Polysys;
  cfg.controllers = {ControllerKind::NominalQp};
  cfg.seeds = {3};
  cfg.grid_per_axis = 4;
  cfg.cluster_count = 0;
  cfg.horizon = 0.2;
  cfg.subset_size = 5;
  return cfg;
}

int run_main(std::vector<std::string> args) {
  args.insert(args.begin(), "gpcert");
  std::vector<char*> argv;
  argv.reserve(args.size());
  for (auto& a : args) argv.push_back(a.data());
  return main_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("system and controller names round trip") {
  CHECK(parse_system("polysys") == SystemKind::Polysys);
  CHECK(parse_system("cartpole") == SystemKind::CartPole);
  CHECK(to_string(SystemKind::CartPole) == "cartpole");
  CHECK_THROWS_AS(parse_system("pendulum"), UsageError);

  for (auto kind : {ControllerKind::OracleQp, ControllerKind::NominalQp,
                    ControllerKind::Unfiltered, ControllerKind::GpSocpFull,
                    ControllerKind::GpSocpOurs, ControllerKind::GpSocpNaive}) {
    CHECK(parse_controller(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(parse_controller("pid"), UsageError);

  CHECK(parse_controllers("all").size() == 6);
  auto two = parse_controllers("oracle_qp,unfiltered");
  REQUIRE(two.size() == 2);
  CHECK(two[0] == ControllerKind::OracleQp);
  CHECK(two[1] == ControllerKind::Unfiltered);
  CHECK(parse_controllers("nominal_qp,,").size() == 1);
  CHECK_THROWS_AS(parse_controllers(","), UsageError);
}

TEST_CASE("configuration validation rejects out-of-range knobs") {
  ExperimentConfig ok;
  CHECK_NOTHROW(ok.validate());

  auto expect_reject = [](auto mutate) {
    ExperimentConfig cfg;
    mutate(cfg);
    CHECK_THROWS_AS(cfg.validate(), UsageError);
  };
  expect_reject([](ExperimentConfig& c) { c.seeds.clear(); });
  expect_reject([](ExperimentConfig& c) { c.controllers.clear(); });
  expect_reject([](ExperimentConfig& c) { c.epsilon = 1.0; });
  expect_reject([](ExperimentConfig& c) { c.beta = 0.0; });
  expect_reject([](ExperimentConfig& c) { c.delta = 1.0; });
  expect_reject([](ExperimentConfig& c) { c.hint_policy = "psychic"; });
  expect_reject([](ExperimentConfig& c) { c.x0 = {1.0, 2.0, 3.0}; });
  expect_reject([](ExperimentConfig& c) { c.subset_size = 0; });
  expect_reject([](ExperimentConfig& c) { c.mass_mismatch = 0.0; });
  expect_reject([](ExperimentConfig& c) { c.timing_n = {8}; });
  expect_reject([](ExperimentConfig& c) { c.eps_grid = {1.5}; });
  expect_reject([](ExperimentConfig& c) { c.integrator_dt = 0.0; });
  expect_reject([](ExperimentConfig& c) { c.noise_m = 1; });
}

TEST_CASE("canonical dump and hash react to every recorded knob") {
  ExperimentConfig cfg;
  const std::string dump = cfg.canonical_dump();
  CHECK(dump.find("system=polysys\n") != std::string::npos);
  CHECK(dump.find("subset_size=20\n") != std::string::npos);
  CHECK(cfg.config_hash() == ExperimentConfig{}.config_hash());

  ExperimentConfig other = cfg;
  other.beta = 2.5;
  CHECK(other.config_hash() != cfg.config_hash());
  other = cfg;
  other.seeds = {0, 1};
  CHECK(other.config_hash() != cfg.config_hash());
}

TEST_CASE("selection settings map onto the online selector") {
  ExperimentConfig cfg;
  cfg.subset_size = 13;
  cfg.epsilon = 0.7;
  cfg.hint_policy = "previous";
  SelectionConfig sel = selection_config(cfg);
  CHECK(sel.M == 13);
  CHECK(sel.epsilon == 0.7);
  CHECK(sel.lg_hint_policy == SelectionConfig::LgHintPolicy::PreviousStep);
  cfg.hint_policy = "full";
  CHECK(selection_config(cfg).lg_hint_policy ==
        SelectionConfig::LgHintPolicy::FullDataset);
}

TEST_CASE("per-seed fixtures carry dataset, model and confidence scale") {
  ExperimentConfig cfg = tiny_config();
  cfg.controllers = {ControllerKind::GpSocpOurs};

  Lab lab = make_lab(cfg, 3);
  CHECK(lab.data.size() == 16);  // 4x4 grid, no clusters
  REQUIRE(lab.model != nullptr);
  REQUIRE(lab.indicator != nullptr);
  CHECK(lab.model->data().size() == 16);
  CHECK(lab.calibrated_beta == cfg.beta);
  CHECK(lab.problem.beta == lab.calibrated_beta);
  CHECK(lab.x0.size() == 2);
  CHECK(lab.x0[0] == -0.4);
  CHECK(lab.x0[1] == 0.6);
  CHECK(lab.sim.horizon == 0.2);
  CHECK(lab.sim.control_dt == 0.01);

  // Skipping the indicator works for runs that never select online.
  Lab bare = make_lab(cfg, 3, /*need_indicator=*/false);
  CHECK(bare.indicator == nullptr);

  // A model-free controller set leaves the posterior unfitted.
  ExperimentConfig plain = tiny_config();
  plain.controllers = {ControllerKind::Unfiltered};
  Lab no_model = make_lab(plain, 3);
  CHECK(no_model.model == nullptr);
  CHECK(no_model.calibrated_beta == plain.beta);

  // Calibration replaces the fixed scale and keeps the problem in sync.
  ExperimentConfig cal = tiny_config();
  cal.controllers = {ControllerKind::GpSocpFull};
  cal.calibrate = true;
  cal.delta = 0.1;
  Lab calibrated = make_lab(cal, 3);
  CHECK(calibrated.calibrated_beta > 0.0);
  CHECK(calibrated.problem.beta == calibrated.calibrated_beta);
}

TEST_CASE("controller factory produces every requested session kind") {
  ExperimentConfig cfg = tiny_config();
  cfg.controllers = parse_controllers("all");
  Lab lab = make_lab(cfg, 5);
  const SelectionConfig sel = selection_config(cfg);

  for (auto kind : cfg.controllers) {
    auto session = make_session(lab, kind, sel);
    REQUIRE(session != nullptr);
    CHECK(session->name() == to_string(kind));
  }

  ExperimentConfig plain = tiny_config();
  plain.controllers = {ControllerKind::Unfiltered};
  Lab no_model = make_lab(plain, 5);
  CHECK_THROWS_AS(make_session(no_model, ControllerKind::GpSocpFull, sel), UsageError);
  CHECK_THROWS_AS(make_session(no_model, ControllerKind::GpSocpOurs, sel), UsageError);
}

TEST_CASE("episodic collection accumulates tagged residuals per episode") {
  ExperimentConfig cfg = tiny_config();
  cfg.horizon = 0.3;
  cfg.episodes = 2;

  const std::string dir = testing::scratch_path("collect");
  CollectResult res = episodic_collect(cfg, 7, dir);
  REQUIRE(res.episode_sizes.size() == 2);
  REQUIRE(res.episode_feasibility.size() == 2);
  CHECK(res.episode_sizes[0] + res.episode_sizes[1] == res.data.size());
  CHECK(res.data.size() > 0);
  for (double f : res.episode_feasibility) {
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
  }
  int ep0 = 0, ep1 = 0;
  for (int j = 0; j < res.data.size(); ++j) {
    if (res.data.tag(j) == "ep0") ++ep0;
    if (res.data.tag(j) == "ep1") ++ep1;
  }
  CHECK(ep0 == res.episode_sizes[0]);
  CHECK(ep1 == res.episode_sizes[1]);
  CHECK(fs::exists(fs::path(dir) / "dataset_ep0.txt"));
  CHECK(fs::exists(fs::path(dir) / "dataset_ep1.txt"));
  fs::remove_all(dir);

  // Identical inputs give identical data.
  CollectResult again = episodic_collect(cfg, 7);
  CHECK(again.data.content_hash() == res.data.content_hash());
}

TEST_CASE("timing sweep reports per-size statistics and omits oversized full solves") {
  ExperimentConfig cfg;
  cfg.timing_n = {64, 128};
  cfg.timing_m = 8;
  cfg.timing_steps = 3;
  cfg.timing_warmup = 1;
  cfg.full_gp_max_n = 64;

  auto rows = timing_sweep(cfg);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].n == 64);
  CHECK(rows[1].n == 128);
  for (const auto& row : rows) {
    CHECK(row.subset_size == 8);
    CHECK(row.select_mean_ms >= 0.0);
    CHECK(row.ours_mean_ms > 0.0);
    CHECK(row.offline_fit_ms >= 0.0);
    CHECK(row.offline_indicator_ms >= 0.0);
  }
  CHECK(std::isfinite(rows[0].full_mean_ms));
  CHECK(!std::isfinite(rows[1].full_mean_ms));
}

TEST_CASE("run verb writes manifest, summary and per-trajectory logs") {
  ExperimentConfig cfg = tiny_config();
  cfg.output_root = testing::scratch_path("runs");
  cfg.run_id = "smoke";

  REQUIRE(run_command(cfg) == 0);
  const fs::path dir = fs::path(cfg.output_root) / "smoke";
  REQUIRE(fs::exists(dir / "manifest.json"));
  REQUIRE(fs::exists(dir / "summary.json"));
  REQUIRE(fs::exists(dir / "polysys_seed3_nominal_qp.csv"));

  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["verb"] == "run");
  CHECK(manifest["config_hash"] == cfg.config_hash());
  CHECK(manifest["config"]["subset_size"] == 5);

  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  REQUIRE(summary["rows"].size() == 1);
  const auto& row = summary["rows"][0];
  CHECK(row["controller"] == "nominal_qp");
  CHECK(row["seed"] == 3);
  CHECK(row["dataset_size"] == 16);
  CHECK(row["feasibility"].get<double>() >= 0.0);
  CHECK(row["feasibility"].get<double>() <= 1.0);

  // A second run with the same id lands in a fresh suffixed directory.
  REQUIRE(run_command(cfg) == 0);
  CHECK(fs::exists(fs::path(cfg.output_root) / "smoke-1" / "summary.json"));
  fs::remove_all(cfg.output_root);
}

TEST_CASE("dataset build verb is reproducible byte for byte") {
  ExperimentConfig cfg = tiny_config();
  cfg.output_root = testing::scratch_path("runs");
  cfg.run_id = "ds-a";
  REQUIRE(dataset_build_command(cfg) == 0);
  cfg.run_id = "ds-b";
  REQUIRE(dataset_build_command(cfg) == 0);

  const fs::path a = fs::path(cfg.output_root) / "ds-a" / "dataset.txt";
  const fs::path b = fs::path(cfg.output_root) / "ds-b" / "dataset.txt";
  CHECK(slurp(a) == slurp(b));

  Dataset data = Dataset::load(a.string());
  CHECK(data.size() == 16);
  const auto meta = nlohmann::json::parse(
      slurp(fs::path(cfg.output_root) / "ds-a" / "dataset_meta.json"));
  CHECK(meta["n"] == 16);
  CHECK(meta["content_hash"] == data.content_hash());

  CHECK(dataset_info_command(a.string()) == 0);
  fs::remove_all(cfg.output_root);

  ExperimentConfig cart = cfg;
  cart.system = SystemKind::CartPole;
  CHECK_THROWS_AS(dataset_build_command(cart), UsageError);
}

TEST_CASE("command line entry point maps failures to exit codes") {
  CHECK(run_main({"no-such-verb"}) == 2);
  CHECK(run_main({"dataset", "info", "/nonexistent/dataset.txt"}) == 2);
  CHECK(run_main({"run", "--epsilon", "1.5"}) == 2);
  CHECK(run_main({"run", "--system", "warp-drive"}) == 2);

  const std::string root = testing::scratch_path("runs");
  CHECK(run_main({"dataset", "build", "--grid-per-axis", "3", "--cluster-count", "0",
                  "--out", root, "--run-id", "via-main"}) == 0);
  CHECK(fs::exists(fs::path(root) / "via-main" / "dataset.txt"));
  CHECK(run_main({"dataset", "info",
                  (fs::path(root) / "via-main" / "dataset.txt").string()}) == 0);
  fs::remove_all(root);
}

TEST_SUITE_END();
