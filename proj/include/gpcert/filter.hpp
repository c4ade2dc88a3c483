#pragma once

#include <memory>

#include "gpcert/certificate.hpp"
#include "gpcert/selection.hpp"
#include "gpcert/socp.hpp"

namespace gpcert {

enum class FilterStatus { PassedThrough, Filtered, BackupUsed };

struct FilterResult {
  VectorXd u;
  FilterStatus status = FilterStatus::PassedThrough;
  double constraint_residual = 0.0;
  int iterations = 0;
  double solve_ms = 0.0;
  int selected_count = 0;
};

const char* to_string(FilterStatus status);

// Reference tracker constrained by the true certificate condition; needs the
// plant's exact Lie derivatives, so it only exists in simulation.
FilterResult oracle_qp(const TruePlant& plant, const CertificateProblem& prob,
                       const Eigen::Ref<const VectorXd>& x);

// Same program with the nominal model's Lie derivatives.
FilterResult nominal_qp(const CertificateProblem& prob,
                        const Eigen::Ref<const VectorXd>& x);

// Cone-constrained program with learned Lie derivative corrections: the
// chance constraint beta*sigma(x,u) <= lf_hat + gamma(C) + lg_hat u.  Falls
// back to the violation-minimizing backup when infeasible.
FilterResult gp_socp(const CertificateProblem& prob, const GpModel& model,
                     const Eigen::Ref<const VectorXd>& x);

// argmin over the input box of beta*sigma(x,u) - lg_hat u.
VectorXd backup_control(const CertificateProblem& prob, const GpModel& model,
                        const Eigen::Ref<const VectorXd>& x);

// Slack of the chance constraint at (x,u): nonnegative means the certifying
// condition holds with the configured probability.
double chance_margin(const CertificateProblem& prob, const GpModel& model,
                     const Eigen::Ref<const VectorXd>& x,
                     const Eigen::Ref<const VectorXd>& u);

// One controller instance driving one control loop.  Sessions own mutable
// per-loop state (previous-step selection hints); models and problems are
// shared immutably.
class ControllerSession {
 public:
  virtual ~ControllerSession() = default;
  virtual FilterResult step(const VectorXd& x) = 0;
  virtual const char* name() const = 0;
};

class OracleQpSession final : public ControllerSession {
 public:
  OracleQpSession(TruePlant plant, const CertificateProblem& prob);
  FilterResult step(const VectorXd& x) override;
  const char* name() const override { return "oracle_qp"; }

 private:
  TruePlant plant_;
  const CertificateProblem& prob_;
};

class NominalQpSession final : public ControllerSession {
 public:
  explicit NominalQpSession(const CertificateProblem& prob);
  FilterResult step(const VectorXd& x) override;
  const char* name() const override { return "nominal_qp"; }

 private:
  const CertificateProblem& prob_;
};

class UnfilteredSession final : public ControllerSession {
 public:
  explicit UnfilteredSession(const CertificateProblem& prob);
  FilterResult step(const VectorXd& x) override;
  const char* name() const override { return "unfiltered"; }

 private:
  const CertificateProblem& prob_;
};

// Full-dataset cone filter: every step uses the complete model.
class GpSocpFullSession final : public ControllerSession {
 public:
  GpSocpFullSession(const CertificateProblem& prob, const GpModel& model);
  FilterResult step(const VectorXd& x) override;
  const char* name() const override { return "gp_socp_full"; }

 private:
  const CertificateProblem& prob_;
  const GpModel& model_;
};

enum class SubsetPolicy { Online, Naive };

// Cone filter on a per-step subset of the dataset, selected either by the
// correlation-aware argmax or the naive top-M baseline.  Holds the
// previous-step control-gain estimate when that hint policy is configured.
class GpSocpSubsetSession final : public ControllerSession {
 public:
  GpSocpSubsetSession(const CertificateProblem& prob, const GpModel& model,
                      SelectionConfig cfg, const CorrelationIndicator* B,
                      SubsetPolicy policy);
  FilterResult step(const VectorXd& x) override;
  const char* name() const override;

  const OnlineSubset& last_subset() const { return last_subset_; }

 private:
  RowVectorXd direction_hint(const VectorXd& x) const;

  const CertificateProblem& prob_;
  const GpModel& model_;
  SelectionConfig cfg_;
  const CorrelationIndicator* B_;
  SubsetPolicy policy_;
  OnlineSubset last_subset_;
  std::unique_ptr<GpModel> prev_model_;
};

}  // namespace gpcert
