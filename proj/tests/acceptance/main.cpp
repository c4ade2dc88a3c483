// Acceptance gate: every quantitative claim the library makes about itself,
// one scenario per criterion, with pinned tolerances.  Run without arguments
// to execute the whole gate, or with a single number (1..11) for one
// criterion.  Each criterion prints exactly one [PASS] line; the first
// failing check prints a [FAIL] line with its location and exits nonzero.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gpcert/bench/noise.hpp"
#include "gpcert/bench/polysys.hpp"
#include "gpcert/bench/simulate.hpp"
#include "gpcert/experiments.hpp"
#include "gpcert/filter.hpp"
#include "gpcert/gp.hpp"
#include "gpcert/selection.hpp"
#include "gpcert/socp.hpp"
#include "../support.hpp"

using namespace gpcert;

#define REQUIRE(cond, msg)                                                      \
  do {                                                                          \
    if (!(cond)) {                                                              \
      std::ostringstream os_;                                                   \
      os_ << msg;                                                               \
      std::cerr << "[FAIL] " << __FILE__ << ":" << __LINE__ << " " << os_.str() \
                << std::endl;                                                   \
      std::exit(1);                                                             \
    }                                                                           \
  } while (0)

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void pass(int criterion, const std::string& what) {
  std::cout << "[PASS] criterion " << criterion << ": " << what << std::endl;
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

std::vector<int> random_subset(std::mt19937_64& rng, int n, int m) {
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(m);
  return all;
}

// ---------------------------------------------------------------------------
// 1. Structured posterior (affine mean, quadratic variance) against a dense
//    generic GP solve on the joint input with the same compound kernel.

void criterion1() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(9101);
  std::uniform_real_distribution<double> noise_dist(1e-3, 1e-1);
  const std::array<int, 3> control_dims = {1, 2, 4};

  double worst = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const int m = control_dims[inst % 3];
    const int d = 2 + inst % 2;
    const int n = 1 + static_cast<int>(rng() % 50);
    const AdpKernel kernel = testing::random_adp_kernel(rng, d, m);
    const Dataset data = testing::random_dataset(rng, d, m, n);
    const double noise = noise_dist(rng);
    const GpModel model = GpModel::fit(kernel, data, noise);

    MatrixXd gram(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        gram(i, j) = kernel.eval(data.state(i), data.control(i), data.state(j),
                                 data.control(j));
      }
    }
    gram.diagonal().array() += noise + model.jitter();
    const Eigen::LDLT<MatrixXd> dense(gram);
    const VectorXd alpha = dense.solve(data.outputs());

    for (int q = 0; q < 5; ++q) {
      const VectorXd x = testing::random_vector(rng, d, -1.5, 1.5);
      const VectorXd u = testing::random_vector(rng, m, -1.5, 1.5);
      VectorXd k_star(n);
      for (int j = 0; j < n; ++j) {
        k_star[j] = kernel.eval(x, u, data.state(j), data.control(j));
      }
      const double mean_dense = k_star.dot(alpha);
      const double var_dense = kernel.eval(x, u, x, u) - k_star.dot(dense.solve(k_star));

      const auto pred = model.predict(x, u);
      VectorXd one_u(m + 1);
      one_u << 1.0, u;
      const double mean_structured = model.mean_coeffs(x).dot(one_u);
      const double var_structured = one_u.dot(model.variance_gram(x) * one_u);

      worst = std::max({worst, rel_err(pred.mean, mean_dense),
                        rel_err(mean_structured, mean_dense),
                        rel_err(pred.variance, var_dense),
                        rel_err(var_structured, var_dense)});
    }
  }
  REQUIRE(worst <= 1e-9, "structured/dense posterior mismatch " << worst);
  const double took = seconds_since(t0);
  REQUIRE(took < 10.0, "equivalence sweep took " << took << " s");
  pass(1, "structured posterior matches dense GP solve on 200 instances (max rel err "
              + std::to_string(worst) + ")");
}

// ---------------------------------------------------------------------------
// 2. Lower bound on the selection objective under the pairwise decorrelation
//    and noise-ceiling conditions, plus exact equality in the diagonal
//    noiseless limit at epsilon = 0.

void criterion2() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(9202);
  const double eps = 0.95;

  int checked = 0;
  double worst_slack = std::numeric_limits<double>::infinity();
  while (checked < 10000) {
    const int m = 1 + static_cast<int>(rng() % 2);
    const AdpKernel kernel = testing::random_adp_kernel(rng, 2, m);
    const Dataset data = testing::random_dataset(rng, 2, m, 24, /*spread=*/3.0);
    const GpModel model = GpModel::fit(kernel, data, 1e-4);
    for (int s = 0; s < 64 && checked < 10000; ++s) {
      const int M = 2 + static_cast<int>(rng() % 15);
      const std::vector<int> subset = random_subset(rng, data.size(), M);
      const VectorXd x = testing::random_vector(rng, 2, -3.0, 3.0);
      const VectorXd u = testing::random_vector(rng, m, -1.5, 1.5);
      const BoundCheck bc = theorem1_bound(model, subset, x, u, eps);
      if (!bc.conditions_ok) {
        continue;
      }
      ++checked;
      worst_slack = std::min(worst_slack, bc.lhs - bc.rhs);
    }
    REQUIRE(seconds_since(t0) < 25.0,
            "condition-satisfying subsets are too rare (" << checked << " so far)");
  }
  REQUIRE(worst_slack >= -1e-10, "bound violated, slack " << worst_slack);

  // Diagonal noiseless limit: states so far apart the kernel underflows to
  // exactly zero off the diagonal, fitted without noise, checked at eps = 0.
  {
    SeKernelParams p;
    p.signal_variance = 1.3;
    p.lengthscales = VectorXd::Constant(2, 0.5);
    const AdpKernel kernel = AdpKernel::squared_exponential(p, {p, p});
    Dataset data(2, 2);
    std::normal_distribution<double> out(0.0, 1.0);
    for (int j = 0; j < 12; ++j) {
      data.append((VectorXd(2) << 50.0 * j, -50.0 * j).finished(),
                  testing::random_vector(rng, 2), out(rng));
    }
    const GpModel model = GpModel::fit(kernel, data, 0.0);
    for (int trial = 0; trial < 50; ++trial) {
      const int M = 2 + static_cast<int>(rng() % 10);
      const std::vector<int> subset = random_subset(rng, data.size(), M);
      const VectorXd x = testing::random_vector(rng, 2, -1.0, 1.0);
      const VectorXd u = testing::random_vector(rng, 2, -1.5, 1.5);
      const BoundCheck bc = theorem1_bound(model, subset, x, u, 0.0);
      REQUIRE(std::abs(bc.lhs - bc.rhs) <= 1e-12,
              "diagonal equality off by " << std::abs(bc.lhs - bc.rhs));
    }
  }
  const double took = seconds_since(t0);
  REQUIRE(took < 30.0, "bound sweep took " << took << " s");
  pass(2, "selection objective bound holds on 10000 condition-satisfying subsets");
}

// ---------------------------------------------------------------------------
// 3. Looser bound via modified alignments: only the pairwise condition, so
//    it must survive arbitrary observation noise.

void criterion3() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(9303);
  const double eps = 0.95;
  std::uniform_real_distribution<double> log_noise(-4.0, 0.0);

  int checked = 0;
  double worst_slack = std::numeric_limits<double>::infinity();
  while (checked < 10000) {
    const int m = 1 + static_cast<int>(rng() % 2);
    const AdpKernel kernel = testing::random_adp_kernel(rng, 2, m);
    const Dataset data = testing::random_dataset(rng, 2, m, 24, /*spread=*/3.0);
    const double noise = std::pow(10.0, log_noise(rng));
    const GpModel model = GpModel::fit(kernel, data, noise);
    for (int s = 0; s < 64 && checked < 10000; ++s) {
      const int M = 2 + static_cast<int>(rng() % 15);
      const std::vector<int> subset = random_subset(rng, data.size(), M);
      const VectorXd x = testing::random_vector(rng, 2, -3.0, 3.0);
      const VectorXd u = testing::random_vector(rng, m, -1.5, 1.5);
      const BoundCheck bc = theorem3_bound(model, subset, x, u, eps);
      if (!bc.conditions_ok) {
        continue;
      }
      ++checked;
      worst_slack = std::min(worst_slack, bc.lhs - bc.rhs);
    }
    REQUIRE(seconds_since(t0) < 25.0,
            "condition-satisfying subsets are too rare (" << checked << " so far)");
  }
  REQUIRE(worst_slack >= -1e-10, "modified bound violated, slack " << worst_slack);
  const double took = seconds_since(t0);
  REQUIRE(took < 30.0, "bound sweep took " << took << " s");
  pass(3, "modified-alignment bound holds on 10000 subsets under the pairwise "
          "condition alone");
}

// ---------------------------------------------------------------------------
// 4. Feasibility-margin certificate, the asymptotic direction cost, and the
//    equivalence of minimizing that limit with maximizing the selection
//    objective.

CertificateProblem integrator_problem() {
  CertificateProblem prob;
  prob.certificate.kind = CertificateKind::NegatedLyapunov;
  prob.certificate.value = [](const VectorXd& x) { return -x.squaredNorm(); };
  prob.certificate.gradient = [](const VectorXd& x) -> RowVectorXd {
    return (-2.0 * x).transpose();
  };
  prob.certificate.comparison = linear_comparison(1.0);
  ControlAffineDynamics dyn;
  dyn.state_dim = 2;
  dyn.control_dim = 2;
  dyn.drift = [](const VectorXd&) { return VectorXd::Zero(2).eval(); };
  dyn.input_gain = [](const VectorXd&) { return MatrixXd::Identity(2, 2).eval(); };
  prob.nominal = dyn;
  prob.u_ref = [](const VectorXd&) { return VectorXd::Zero(2); };
  return prob;
}

void criterion4() {
  std::mt19937_64 rng(9404);
  std::uniform_real_distribution<double> beta_dist(0.5, 3.0);
  std::uniform_real_distribution<double> noise_dist(1e-3, 1e-1);

  // (a) When the scaled-gain margin certifies a strictly feasible input, the
  //     cone filter must never fall back: zero false negatives.
  CertificateProblem prob = integrator_problem();
  int certified = 0;
  while (certified < 500) {
    prob.beta = beta_dist(rng);
    const int n = 5 + static_cast<int>(rng() % 26);
    const AdpKernel kernel = testing::random_adp_kernel(rng, 2, 2);
    const Dataset data = testing::random_dataset(rng, 2, 2, n);
    const GpModel model = GpModel::fit(kernel, data, noise_dist(rng));
    const VectorXd x = testing::random_vector(rng, 2, -1.5, 1.5);

    const auto nominal_lie = lie_derivatives(prob.certificate, prob.nominal, x);
    const auto est = lie_estimates(model, x, nominal_lie.lf, nominal_lie.lg);
    const double offset =
        est.lf + prob.certificate.comparison(prob.certificate.value(x));
    const double margin = feasibility_margin(model, x, prob, 1e6, prob.beta);
    if (!(margin > 0.0) || !(margin + offset > 1e-9)) {
      continue;  // the margin does not certify this instance
    }
    ++certified;
    const FilterResult res = gp_socp(prob, model, x);
    REQUIRE(res.status != FilterStatus::BackupUsed,
            "false negative: certified-feasible instance " << certified
                                                           << " reported infeasible");
  }

  // (b) The asymptotic direction cost equals (1/alpha) sigma at alpha = 1e6.
  int cost_checked = 0;
  while (cost_checked < 100) {
    const int n = 6 + static_cast<int>(rng() % 20);
    const int m = 1 + static_cast<int>(rng() % 2);
    const AdpKernel kernel = testing::random_adp_kernel(rng, 2, m);
    const Dataset data = testing::random_dataset(rng, 2, m, n);
    const double noise = noise_dist(rng);
    const GpModel model = GpModel::fit(kernel, data, noise);
    const int M = 2 + static_cast<int>(rng() % std::min(6, n - 1));
    const std::vector<int> subset = random_subset(rng, n, M);
    const VectorXd x = testing::random_vector(rng, 2, -1.5, 1.5);
    const RowVectorXd dir = testing::random_vector(rng, m, -1.5, 1.5).transpose();

    const double cost = asymptotic_direction_cost(model, subset, x, dir);
    if (cost < 1e-8) {
      continue;  // direction fully explained; the relative check is vacuous
    }
    ++cost_checked;
    const GpModel submodel =
        GpModel::fit(model.kernel(), model.data().subset(subset), noise);
    const double alpha = 1e6;
    const double sigma = submodel.predict(x, (alpha * dir.transpose()).eval()).stddev;
    REQUIRE(std::abs(sigma / alpha - cost) <= 1e-4 * cost,
            "asymptotic cost " << cost << " vs scaled stddev " << sigma / alpha);
  }

  // (c) Exhaustive subset enumeration: the subset minimizing the asymptotic
  //     cost is the subset maximizing the selection objective.
  for (int inst = 0; inst < 20; ++inst) {
    const int n = 6 + static_cast<int>(rng() % 5);  // N <= 10
    const int m = 1 + static_cast<int>(rng() % 2);
    const int M = 2 + static_cast<int>(rng() % 3);
    const AdpKernel kernel = testing::random_adp_kernel(rng, 2, m);
    const Dataset data = testing::random_dataset(rng, 2, m, n);
    const GpModel model = GpModel::fit(kernel, data, noise_dist(rng));
    const VectorXd x = testing::random_vector(rng, 2, -1.5, 1.5);
    const RowVectorXd dir = testing::random_vector(rng, m, -1.5, 1.5).transpose();

    double best_f = -std::numeric_limits<double>::infinity();
    double min_cost = std::numeric_limits<double>::infinity();
    double f_at_min_cost = 0.0;
    std::vector<bool> mask(n, false);
    std::fill(mask.end() - M, mask.end(), true);
    do {
      std::vector<int> subset;
      for (int i = 0; i < n; ++i) {
        if (mask[i]) subset.push_back(i);
      }
      const double f = selection_objective(model, subset, x, dir.transpose());
      const double cost = asymptotic_direction_cost(model, subset, x, dir);
      best_f = std::max(best_f, f);
      if (cost < min_cost) {
        min_cost = cost;
        f_at_min_cost = f;
      }
    } while (std::next_permutation(mask.begin(), mask.end()));
    REQUIRE(best_f - f_at_min_cost <= 1e-9 * std::max(1.0, std::abs(best_f)),
            "cost minimizer missed the objective maximizer by "
                << best_f - f_at_min_cost);
  }
  pass(4, "feasibility margin has zero false negatives; direction cost matches "
          "the scaled stddev; cost minimizer == objective maximizer");
}

// ---------------------------------------------------------------------------
// 5. Cone solver against a dense grid oracle with independent feasibility
//    evaluation and KKT residuals.

void criterion5() {
  std::mt19937_64 rng(9505);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  int optimal_seen = 0;
  int infeasible_seen = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const int m = 1 + inst % 2;
    ConeProblem prob;
    prob.u_ref = testing::random_vector(rng, m, -2.0, 2.0);
    prob.cone_scale = (inst % 7 == 0) ? 0.0 : 0.2 + 1.8 * std::abs(unit(rng));
    MatrixXd b = MatrixXd::NullaryExpr(m + 1, m + 1, [&]() { return unit(rng); });
    prob.cone_matrix = b * b.transpose() + 1e-6 * MatrixXd::Identity(m + 1, m + 1);
    prob.affine_offset = 2.0 * unit(rng);
    prob.affine_row = testing::random_vector(rng, m, -1.5, 1.5).transpose();
    Box box;
    box.lo = VectorXd(m);
    box.hi = VectorXd(m);
    for (int d = 0; d < m; ++d) {
      box.lo[d] = -3.0 + 0.5 * std::abs(unit(rng));
      box.hi[d] = 3.0 - 0.5 * std::abs(unit(rng));
    }
    prob.bounds = box;

    // Independent evaluation of the constraint and the tracking objective.
    auto violation = [&](const VectorXd& u) {
      VectorXd one_u(m + 1);
      one_u << 1.0, u;
      const double quad = one_u.dot(prob.cone_matrix * one_u);
      return prob.cone_scale * std::sqrt(std::max(0.0, quad)) -
             (prob.affine_offset + prob.affine_row.dot(u));
    };
    auto objective = [&](const VectorXd& u) { return (u - prob.u_ref).norm(); };

    double grid_best = std::numeric_limits<double>::infinity();
    double grid_min_violation = std::numeric_limits<double>::infinity();
    const int per_axis = (m == 1) ? 8001 : 201;
    VectorXd u(m);
    if (m == 1) {
      for (int i = 0; i < per_axis; ++i) {
        u[0] = box.lo[0] + (box.hi[0] - box.lo[0]) * i / (per_axis - 1);
        const double v = violation(u);
        grid_min_violation = std::min(grid_min_violation, v);
        if (v <= 0.0) {
          grid_best = std::min(grid_best, objective(u));
        }
      }
    } else {
      for (int i = 0; i < per_axis; ++i) {
        u[0] = box.lo[0] + (box.hi[0] - box.lo[0]) * i / (per_axis - 1);
        for (int j = 0; j < per_axis; ++j) {
          u[1] = box.lo[1] + (box.hi[1] - box.lo[1]) * j / (per_axis - 1);
          const double v = violation(u);
          grid_min_violation = std::min(grid_min_violation, v);
          if (v <= 0.0) {
            grid_best = std::min(grid_best, objective(u));
          }
        }
      }
    }

    const SolveOutcome res = solve_filter_problem(prob);
    REQUIRE(res.status != SolveStatus::NumericalFailure,
            "numerical failure on instance " << inst);
    if (res.status == SolveStatus::Optimal) {
      ++optimal_seen;
      REQUIRE(violation(res.u) <= 1e-7,
              "instance " << inst << " optimal point violates the cone by "
                          << violation(res.u));
      REQUIRE(box.contains(res.u, 1e-7), "instance " << inst << " leaves the box");
      const double kkt = kkt_residual(prob, res);
      REQUIRE(kkt <= 1e-7, "instance " << inst << " KKT residual " << kkt);
      if (std::isfinite(grid_best)) {
        REQUIRE(objective(res.u) <= grid_best + 1e-5,
                "instance " << inst << " objective " << objective(res.u)
                            << " above grid " << grid_best);
      }
    } else {
      ++infeasible_seen;
      REQUIRE(grid_min_violation > -1e-6,
              "instance " << inst << " claimed infeasible but grid found violation "
                          << grid_min_violation);
    }
  }
  REQUIRE(optimal_seen >= 700, "only " << optimal_seen << " optimal instances");
  pass(5, "cone solver within 1e-5 of the grid oracle on 1000 problems ("
              + std::to_string(optimal_seen) + " optimal, "
              + std::to_string(infeasible_seen) + " infeasible)");
}

// ---------------------------------------------------------------------------
// 6. Polynomial-system closed loop: the oracle filter stabilizes, the
//    nominal filter visibly fails, the learned cone filter recovers.

void criterion6() {
  const auto t0 = Clock::now();
  cli::ExperimentConfig cfg;
  cfg.controllers = {cli::ControllerKind::OracleQp, cli::ControllerKind::NominalQp,
                     cli::ControllerKind::GpSocpFull};
  cfg.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const SelectionConfig sel = cli::selection_config(cfg);

  int oracle_ok = 0;
  int nominal_fail = 0;
  int learned_ok = 0;
  for (std::uint64_t seed : cfg.seeds) {
    cli::Lab lab = cli::make_lab(cfg, seed, /*need_indicator=*/false);
    REQUIRE(lab.data.size() == 180, "expected the 180-point dataset, got "
                                        << lab.data.size());
    for (auto kind : cfg.controllers) {
      auto session = cli::make_session(lab, kind, sel);
      const auto traj =
          bench::simulate(lab.plant, *session, lab.x0, &lab.certificate, lab.sim);
      const double norm = (!traj.diverged && traj.final_state.allFinite())
                              ? traj.final_state.norm()
                              : std::numeric_limits<double>::infinity();
      if (kind == cli::ControllerKind::OracleQp) {
        oracle_ok += (norm < 0.1) ? 1 : 0;
      } else if (kind == cli::ControllerKind::NominalQp) {
        nominal_fail += (traj.diverged || norm > 1.0) ? 1 : 0;
      } else {
        learned_ok += (norm < 0.15) ? 1 : 0;
      }
    }
  }
  REQUIRE(oracle_ok >= 9, "oracle filter converged on only " << oracle_ok << "/10");
  REQUIRE(nominal_fail >= 7, "nominal filter failed on only " << nominal_fail << "/10");
  REQUIRE(learned_ok >= 8, "learned filter converged on only " << learned_ok << "/10");
  const double took = seconds_since(t0);
  REQUIRE(took < 300.0, "closed-loop sweep took " << took << " s");
  pass(6, "oracle " + std::to_string(oracle_ok) + "/10, nominal fails "
              + std::to_string(nominal_fail) + "/10, learned "
              + std::to_string(learned_ok) + "/10");
}

// ---------------------------------------------------------------------------
// 7. Correlation-aware selection beats the naive top-M baseline in per-step
//    feasibility, and never floods duplicate clusters.

void criterion7() {
  cli::ExperimentConfig cfg;
  cfg.controllers = {cli::ControllerKind::GpSocpOurs, cli::ControllerKind::GpSocpNaive};
  cfg.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  cfg.subset_size = 20;
  cfg.epsilon = 0.95;
  const SelectionConfig sel = cli::selection_config(cfg);

  double ours_feas = 0.0;
  double naive_feas = 0.0;
  for (std::uint64_t seed : cfg.seeds) {
    cli::Lab lab = cli::make_lab(cfg, seed);
    for (auto kind : cfg.controllers) {
      auto session = cli::make_session(lab, kind, sel);
      const auto traj =
          bench::simulate(lab.plant, *session, lab.x0, &lab.certificate, lab.sim);
      REQUIRE(!traj.steps.empty(), "empty trajectory");
      int ok = 0;
      for (const auto& s : traj.steps) {
        ok += (s.status != FilterStatus::BackupUsed) ? 1 : 0;
      }
      const double feas = static_cast<double>(ok) / traj.steps.size();
      if (kind == cli::ControllerKind::GpSocpOurs) {
        ours_feas += feas;
      } else {
        naive_feas += feas;
      }
    }
  }
  ours_feas /= cfg.seeds.size();
  naive_feas /= cfg.seeds.size();
  REQUIRE(ours_feas >= naive_feas + 0.2,
          "feasibility margin too small: ours " << ours_feas << " naive " << naive_feas);

  // Constructed duplicate clusters: the online selector takes at most one
  // point from each, exactly.
  std::mt19937_64 rng(9707);
  const int clusters = 4;
  const int per_cluster = 6;
  SeKernelParams p;
  p.signal_variance = 1.0;
  p.lengthscales = VectorXd::Constant(2, 1.0);
  const AdpKernel kernel = AdpKernel::squared_exponential(p, {p, p});
  Dataset data(2, 2);
  std::normal_distribution<double> out(0.0, 1.0);
  for (int c = 0; c < clusters; ++c) {
    const VectorXd center = (VectorXd(2) << 3.0 * c, -2.0 * c).finished();
    const VectorXd u_center = (VectorXd(2) << 0.8 + 0.1 * c, -0.3).finished();
    for (int j = 0; j < per_cluster; ++j) {
      data.append(center + 1e-3 * testing::random_vector(rng, 2),
                  u_center + 1e-3 * testing::random_vector(rng, 2), out(rng),
                  "cluster" + std::to_string(c));
    }
  }
  const GpModel model = GpModel::fit(kernel, data, 1e-4);
  const CorrelationIndicator indicator = build_correlation_indicator(model, 0.95);
  SelectionConfig scfg;
  scfg.M = 8;
  scfg.epsilon = 0.95;
  const VectorXd x = (VectorXd(2) << 1.5, -1.0).finished();
  const RowVectorXd dir = (RowVectorXd(2) << 1.0, -0.5).finished();
  const OnlineSubset subset = select_online(model, x, scfg, indicator, dir);
  std::vector<int> per_group(clusters, 0);
  for (int idx : subset.indices) {
    per_group[idx / per_cluster] += 1;
  }
  for (int c = 0; c < clusters; ++c) {
    REQUIRE(per_group[c] <= 1,
            "cluster " << c << " contributed " << per_group[c] << " duplicates");
  }
  // The naive baseline floods at least one cluster, which is what the margin
  // above comes from.
  const OnlineSubset naive = naive_select(model, x, dir, 8);
  std::vector<int> naive_group(clusters, 0);
  for (int idx : naive.indices) {
    naive_group[idx / per_cluster] += 1;
  }
  REQUIRE(*std::max_element(naive_group.begin(), naive_group.end()) > 1,
          "naive baseline unexpectedly decorrelated");
  pass(7, "ours " + std::to_string(ours_feas) + " vs naive "
              + std::to_string(naive_feas)
              + " feasibility; duplicate clusters capped at one point");
}

// ---------------------------------------------------------------------------
// 8. Per-step cost scaling: selection linear in N, and the subset pipeline
//    at least 3x faster than the full-model filter at N = 8192.

void criterion8() {
  cli::ExperimentConfig cfg;  // timing defaults: N in {2048..16384}, M = 40
  const auto rows = cli::timing_sweep(cfg);
  REQUIRE(rows.size() == 4, "expected 4 sizes, got " << rows.size());

  for (std::size_t k = 0; k + 1 < rows.size(); ++k) {
    const double ratio = rows[k + 1].select_mean_ms / rows[k].select_mean_ms;
    REQUIRE(ratio >= 1.6 && ratio <= 2.6,
            "selection doubling ratio " << ratio << " at N=" << rows[k + 1].n);
  }
  const auto& at8k = rows[2];
  REQUIRE(at8k.n == 8192, "unexpected row order");
  REQUIRE(std::isfinite(at8k.full_mean_ms), "full filter not timed at 8192");
  const double speedup = at8k.full_mean_ms / at8k.ours_mean_ms;
  REQUIRE(speedup >= 3.0, "speedup only " << speedup << "x at N=8192");
  pass(8, "selection scales linearly (doubling ratios in range); speedup "
              + std::to_string(speedup) + "x at N=8192");
}

// ---------------------------------------------------------------------------
// 9. Cart-pole rail safety: the subset cone filter keeps the barrier
//    nonnegative on every swing-up episode; the nominal filter does not.

void criterion9() {
  cli::ExperimentConfig cfg;
  cfg.system = cli::SystemKind::CartPole;
  cfg.controllers = {cli::ControllerKind::GpSocpOurs};
  cfg.subset_size = 40;
  const SelectionConfig sel = cli::selection_config(cfg);

  int nominal_violations = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    cli::Lab lab = cli::make_lab(cfg, seed);
    auto ours = cli::make_session(lab, cli::ControllerKind::GpSocpOurs, sel);
    const auto traj =
        bench::simulate(lab.plant, *ours, lab.x0, &lab.certificate, lab.sim);
    REQUIRE(!traj.diverged, "filtered episode " << seed << " diverged");
    REQUIRE(traj.min_certificate() >= -1e-3,
            "episode " << seed << " left the safe set: min C = "
                       << traj.min_certificate());

    auto nominal = cli::make_session(lab, cli::ControllerKind::NominalQp, sel);
    const auto nom_traj =
        bench::simulate(lab.plant, *nominal, lab.x0, &lab.certificate, lab.sim);
    if (nom_traj.min_certificate() < 0.0) {
      ++nominal_violations;
    }
  }
  REQUIRE(nominal_violations >= 3,
          "nominal filter violated the barrier on only " << nominal_violations
                                                         << "/10 episodes");
  pass(9, "subset cone filter kept C >= -1e-3 on 10/10 episodes; nominal violated "
              + std::to_string(nominal_violations) + "/10");
}

// ---------------------------------------------------------------------------
// 10. The quality-maximizing epsilon grows with the observation noise.

void criterion10() {
  cli::ExperimentConfig cfg;
  const std::uint64_t seed = 0;
  bench::PolysysPair pair = bench::make_polysys(seed, cfg.perturbation_scale);
  Certificate cert = bench::clf_from_are(pair.nominal, cfg.clf_rate);
  NominalModel nominal = bench::polysys_dynamics(pair.nominal);
  TruePlant truth = bench::polysys_dynamics(pair.truth);

  bench::NoiseSweepConfig ncfg;
  ncfg.noise_scales = cfg.noise_scales;  // 1e-3 .. 1.0, three decades
  for (int k = 1; k <= 19; ++k) {
    ncfg.eps_grid.push_back(0.05 * k);
  }
  ncfg.M = cfg.noise_m;
  ncfg.state_samples = cfg.noise_states;
  ncfg.seed = seed;
  ncfg.f_params.signal_variance = cfg.kf_variance;
  ncfg.f_params.lengthscales = VectorXd::Constant(1, cfg.kf_lengthscale);
  SeKernelParams g;
  g.signal_variance = cfg.kg_variance;
  g.lengthscales = VectorXd::Constant(1, cfg.kg_lengthscale);
  ncfg.g_params.assign(2, g);

  Dataset base(2, 2);
  std::mt19937_64 rng(0x4015e);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < cfg.noise_n; ++i) {
    VectorXd x(2);
    for (int d = 0; d < 2; ++d) {
      x[d] = ncfg.sample_lo[d] + (ncfg.sample_hi[d] - ncfg.sample_lo[d]) * unit(rng);
    }
    VectorXd u(2);
    u << cfg.control_amplitude * (2.0 * unit(rng) - 1.0),
        cfg.control_amplitude * (2.0 * unit(rng) - 1.0);
    base.append(x, u, bench::exact_delta(truth, nominal, cert, x, u));
  }

  const auto rows = bench::noise_sweep(base, ncfg);
  const auto best = bench::best_epsilon_per_scale(rows);
  REQUIRE(best.size() == ncfg.noise_scales.size(), "missing sweep rows");
  const double cell = 0.05;
  for (std::size_t k = 0; k + 1 < best.size(); ++k) {
    REQUIRE(best[k + 1].second >= best[k].second - cell - 1e-12,
            "argmax epsilon dropped from " << best[k].second << " to "
                                           << best[k + 1].second << " between noise "
                                           << best[k].first << " and "
                                           << best[k + 1].first);
  }
  pass(10, "quality-maximizing epsilon is nondecreasing across three decades of noise");
}

// ---------------------------------------------------------------------------
// 11. Calibrated confidence scale reaches its target in-sample coverage.

void criterion11() {
  cli::ExperimentConfig cfg;
  cfg.controllers = {cli::ControllerKind::GpSocpFull};
  cfg.calibrate = true;
  cfg.delta = 0.01;

  for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
    cli::Lab lab = cli::make_lab(cfg, seed, /*need_indicator=*/false);
    REQUIRE(lab.model != nullptr, "calibration fixture missing a model");
    int covered = 0;
    for (int j = 0; j < lab.data.size(); ++j) {
      const auto pred = lab.model->predict(lab.data.state(j), lab.data.control(j));
      if (std::abs(pred.mean - lab.data.output(j)) <=
          lab.calibrated_beta * pred.stddev + 1e-12) {
        ++covered;
      }
    }
    const double coverage = static_cast<double>(covered) / lab.data.size();
    REQUIRE(coverage >= 0.99, "seed " << seed << " coverage " << coverage
                                      << " with beta " << lab.calibrated_beta);
  }
  pass(11, "calibrated beta covers >= 99% of the training residuals on 3 datasets");
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<void()>> criteria = {
      criterion1, criterion2, criterion3, criterion4,  criterion5, criterion6,
      criterion7, criterion8, criterion9, criterion10, criterion11};
  if (argc > 1) {
    const int k = std::atoi(argv[1]);
    REQUIRE(k >= 1 && k <= static_cast<int>(criteria.size()),
            "criterion number must be 1.." << criteria.size());
    criteria[k - 1]();
    return 0;
  }
  for (const auto& fn : criteria) {
    fn();
  }
  std::cout << "all criteria passed" << std::endl;
  return 0;
}
