#include "gpcert/filter.hpp"

#include <chrono>
#include <cmath>

namespace gpcert {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Shared QP path for the oracle and nominal controllers: exact halfspace
// constraint lf + lg u + gamma(C) >= 0 expressed as a zero-width cone.
FilterResult certificate_qp(const CertificateProblem& prob, const LieDerivatives& lie,
                            const Eigen::Ref<const VectorXd>& x) {
  const auto start = Clock::now();
  const int m = static_cast<int>(lie.lg.size());

  ConeProblem cp;
  cp.u_ref = prob.u_ref(x);
  cp.cone_scale = 0.0;
  cp.cone_matrix = MatrixXd::Zero(m + 1, m + 1);
  cp.affine_offset = lie.lf + prob.certificate.comparison(prob.certificate.value(x));
  cp.affine_row = lie.lg;
  cp.bounds = prob.input_bounds;

  FilterResult result;
  const SolveOutcome outcome = solve_filter_problem(cp);
  if (outcome.status == SolveStatus::NumericalFailure) {
    throw SolverError("certificate QP: numerical failure");
  }
  if (outcome.status == SolveStatus::Infeasible &&
      cone_violation(cp, outcome.u) > 1e-7) {
    if (!prob.input_bounds) {
      // Unbounded and u-independent (lg = 0): no input can help; apply the
      // reference and report the violation.
      result.u = cp.u_ref;
    } else {
      cp.linear_objective = lie.lg;
      const SolveOutcome backup = solve_backup_problem(cp);
      if (backup.status != SolveStatus::Optimal) {
        throw SolverError("certificate QP backup: numerical failure");
      }
      result.u = backup.u;
    }
    result.status = FilterStatus::BackupUsed;
    result.iterations = outcome.iterations;
    result.constraint_residual = -cone_violation(cp, result.u);
    result.solve_ms = elapsed_ms(start);
    return result;
  }

  result.u = outcome.u;
  result.iterations = outcome.iterations;
  result.constraint_residual = -cone_violation(cp, result.u);
  result.status = ((result.u - cp.u_ref).lpNorm<Eigen::Infinity>() == 0.0)
                      ? FilterStatus::PassedThrough
                      : FilterStatus::Filtered;
  result.solve_ms = elapsed_ms(start);
  return result;
}

}  // namespace

const char* to_string(FilterStatus status) {
  switch (status) {
    case FilterStatus::PassedThrough:
      return "passed_through";
    case FilterStatus::Filtered:
      return "filtered";
    case FilterStatus::BackupUsed:
      return "backup_used";
  }
  return "unknown";
}

FilterResult oracle_qp(const TruePlant& plant, const CertificateProblem& prob,
                       const Eigen::Ref<const VectorXd>& x) {
  return certificate_qp(prob, lie_derivatives(prob.certificate, plant, x), x);
}

FilterResult nominal_qp(const CertificateProblem& prob,
                        const Eigen::Ref<const VectorXd>& x) {
  return certificate_qp(prob, lie_derivatives(prob.certificate, prob.nominal, x), x);
}

FilterResult gp_socp(const CertificateProblem& prob, const GpModel& model,
                     const Eigen::Ref<const VectorXd>& x) {
  const auto start = Clock::now();
  const auto nominal_lie = lie_derivatives(prob.certificate, prob.nominal, x);
  const auto lie = lie_estimates(model, x, nominal_lie.lf, nominal_lie.lg);
  const int m = static_cast<int>(lie.lg.size());

  ConeProblem cp;
  cp.u_ref = prob.u_ref(x);
  cp.cone_scale = prob.beta;
  cp.cone_matrix = model.variance_gram(x);
  cp.affine_offset = lie.lf + prob.certificate.comparison(prob.certificate.value(x));
  cp.affine_row = lie.lg;
  cp.bounds = prob.input_bounds;

  FilterResult result;
  const SolveOutcome outcome = solve_filter_problem(cp);
  if (outcome.status == SolveStatus::NumericalFailure) {
    throw SolverError("gp_socp: solver numerical failure");
  }

  // Trust an infeasibility claim only if the returned point really violates
  // the constraint; near-empty feasible sets otherwise yield that point.
  const bool infeasible = outcome.status == SolveStatus::Infeasible &&
                          cone_violation(cp, outcome.u) > 1e-7;
  if (infeasible) {
    if (!prob.input_bounds) {
      result.u = cp.u_ref;
    } else {
      result.u = backup_control(prob, model, x);
    }
    result.status = FilterStatus::BackupUsed;
  } else {
    result.u = outcome.u;
    result.status = ((result.u - cp.u_ref).lpNorm<Eigen::Infinity>() == 0.0)
                        ? FilterStatus::PassedThrough
                        : FilterStatus::Filtered;
  }
  result.iterations = outcome.iterations;
  result.constraint_residual = -cone_violation(cp, result.u);
  result.selected_count = model.size();
  result.solve_ms = elapsed_ms(start);
  return result;
}

VectorXd backup_control(const CertificateProblem& prob, const GpModel& model,
                        const Eigen::Ref<const VectorXd>& x) {
  if (!prob.input_bounds) {
    throw UsageError("backup_control: input bounds are required");
  }
  const auto nominal_lie = lie_derivatives(prob.certificate, prob.nominal, x);
  const auto lie = lie_estimates(model, x, nominal_lie.lf, nominal_lie.lg);
  const int m = static_cast<int>(lie.lg.size());

  ConeProblem cp;
  cp.u_ref = VectorXd::Zero(m);
  cp.cone_scale = prob.beta;
  cp.cone_matrix = model.variance_gram(x);
  cp.affine_offset = 0.0;
  cp.affine_row = lie.lg;
  cp.bounds = prob.input_bounds;
  cp.linear_objective = lie.lg;

  const SolveOutcome outcome = solve_backup_problem(cp);
  if (outcome.status != SolveStatus::Optimal) {
    throw SolverError("backup_control: numerical failure");
  }
  return outcome.u;
}

double chance_margin(const CertificateProblem& prob, const GpModel& model,
                     const Eigen::Ref<const VectorXd>& x,
                     const Eigen::Ref<const VectorXd>& u) {
  const auto nominal_lie = lie_derivatives(prob.certificate, prob.nominal, x);
  const auto pred = model.predict(x, u);
  const double gamma_c = prob.certificate.comparison(prob.certificate.value(x));
  return nominal_lie.lf + nominal_lie.lg.dot(u) + pred.mean - prob.beta * pred.stddev +
         gamma_c;
}

OracleQpSession::OracleQpSession(TruePlant plant, const CertificateProblem& prob)
    : plant_(std::move(plant)), prob_(prob) {}

FilterResult OracleQpSession::step(const VectorXd& x) { return oracle_qp(plant_, prob_, x); }

NominalQpSession::NominalQpSession(const CertificateProblem& prob) : prob_(prob) {}

FilterResult NominalQpSession::step(const VectorXd& x) { return nominal_qp(prob_, x); }

UnfilteredSession::UnfilteredSession(const CertificateProblem& prob) : prob_(prob) {}

FilterResult UnfilteredSession::step(const VectorXd& x) {
  FilterResult result;
  result.u = prob_.u_ref(x);
  if (prob_.input_bounds) {
    result.u = prob_.input_bounds->clamp(result.u);
  }
  result.status = FilterStatus::PassedThrough;
  return result;
}

GpSocpFullSession::GpSocpFullSession(const CertificateProblem& prob, const GpModel& model)
    : prob_(prob), model_(model) {}

FilterResult GpSocpFullSession::step(const VectorXd& x) {
  return gp_socp(prob_, model_, x);
}

GpSocpSubsetSession::GpSocpSubsetSession(const CertificateProblem& prob,
                                         const GpModel& model, SelectionConfig cfg,
                                         const CorrelationIndicator* B,
                                         SubsetPolicy policy)
    : prob_(prob), model_(model), cfg_(cfg), B_(B), policy_(policy) {
  if (policy_ == SubsetPolicy::Online && B_ == nullptr) {
    throw UsageError("GpSocpSubsetSession: online policy needs a correlation indicator");
  }
}

const char* GpSocpSubsetSession::name() const {
  return policy_ == SubsetPolicy::Online ? "gp_socp_ours" : "gp_socp_naive";
}

RowVectorXd GpSocpSubsetSession::direction_hint(const VectorXd& x) const {
  const auto nominal_lie = lie_derivatives(prob_.certificate, prob_.nominal, x);
  if (cfg_.lg_hint_policy == SelectionConfig::LgHintPolicy::PreviousStep) {
    // Cold start: no subset estimate exists yet and the full-model estimate
    // is exactly what this policy avoids, so use the nominal gain row.
    if (prev_model_ == nullptr) {
      return nominal_lie.lg;
    }
    return lie_estimates(*prev_model_, x, nominal_lie.lf, nominal_lie.lg).lg;
  }
  return lie_estimates(model_, x, nominal_lie.lf, nominal_lie.lg).lg;
}

FilterResult GpSocpSubsetSession::step(const VectorXd& x) {
  const auto start = std::chrono::steady_clock::now();
  const RowVectorXd hint = direction_hint(x);
  last_subset_ = (policy_ == SubsetPolicy::Online)
                     ? select_online(model_, x, cfg_, *B_, hint)
                     : naive_select(model_, x, hint, cfg_.M);

  GpModel submodel = GpModel::fit(model_.kernel(), model_.data().subset(last_subset_.indices),
                                  model_.noise_variance());
  FilterResult result = gp_socp(prob_, submodel, x);
  result.selected_count = last_subset_.size();
  result.solve_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
          .count();
  if (cfg_.lg_hint_policy == SelectionConfig::LgHintPolicy::PreviousStep) {
    prev_model_ = std::make_unique<GpModel>(std::move(submodel));
  }
  return result;
}

}  // namespace gpcert
