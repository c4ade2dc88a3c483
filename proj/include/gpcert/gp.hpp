#pragma once

#include <memory>
#include <optional>

#include "gpcert/dataset.hpp"
#include "gpcert/kernels.hpp"

namespace gpcert {

// Confidence-scale calibration settings: coverage target 1 - delta, searched
// on a geometric grid of candidate scales.
struct ErrorBoundConfig {
  double delta = 0.01;
  double beta_min = 0.1;
  double beta_max = 100.0;
  int grid_size = 200;
};

// GP posterior over an affine-in-control residual, fit once per dataset.
// Observations z_j = h(x_j) + e(x_j)^T u_j + noise are scalar; the compound
// kernel makes the (m+1) channel functions identifiable, so the posterior
// mean is linear in u and the posterior variance is quadratic in [1; u].
//
// Move-only: the factorization is held in place to avoid a second N x N
// buffer at large N.
class GpModel {
 public:
  GpModel(GpModel&&) = default;
  GpModel& operator=(GpModel&&) = default;
  GpModel(const GpModel&) = delete;
  GpModel& operator=(const GpModel&) = delete;

  // Factors K + (sigma_n^2 + jitter) I with jitter escalating from 0 through
  // 1e-12 .. 1e-6 in decade steps; throws FitError past the ladder.  With
  // defer_factorization the O(N^3) factor is postponed until the first
  // posterior query; prior-only uses (selection scores, prior_diag) stay
  // O(N).  The first deferred query is not thread-safe: factor eagerly for
  // models shared across threads.
  static GpModel fit(AdpKernel kernel, Dataset data, double noise_variance,
                     bool defer_factorization = false);

  // Dataless model: zero mean, prior variance everywhere.
  static GpModel prior(AdpKernel kernel, int state_dim, double noise_variance = 0.0);

  const Dataset& data() const { return data_; }
  const AdpKernel& kernel() const { return kernel_; }
  double noise_variance() const { return noise_variance_; }
  double jitter() const { return jitter_; }
  int size() const { return data_.size(); }

  // Row vector c(x) of length m+1 with predictive mean mu(x,u) = c(x) [1; u].
  RowVectorXd mean_coeffs(const Eigen::Ref<const VectorXd>& x) const;

  // Symmetric (m+1) x (m+1) matrix S(x) with variance [1 u^T] S(x) [1; u].
  MatrixXd variance_gram(const Eigen::Ref<const VectorXd>& x) const;

  struct Prediction {
    double mean = 0.0;
    double variance = 0.0;
    double stddev = 0.0;
  };
  Prediction predict(const Eigen::Ref<const VectorXd>& x,
                     const Eigen::Ref<const VectorXd>& u) const;

  double log_marginal_likelihood() const;

  // (K + sigma_n^2 I)^{-1} rhs via the cached factorization.
  MatrixXd solve_gram(const MatrixXd& rhs) const;
  const VectorXd& weights() const;

  // Prior variance k((x_i,u_i),(x_i,u_i)) of stored point i.
  double prior_diag(int i) const;

 private:
  GpModel(AdpKernel kernel, Dataset data, double noise_variance);
  void compute_prior_diag();
  void factorize() const;
  void ensure_factorized() const;

  AdpKernel kernel_;
  Dataset data_;
  double noise_variance_ = 0.0;
  mutable double jitter_ = 0.0;
  mutable double log_det_ = 0.0;
  mutable MatrixXd chol_storage_;
  mutable std::unique_ptr<Eigen::LLT<Eigen::Ref<MatrixXd>>> llt_;
  mutable VectorXd weights_;
  VectorXd prior_diag_;
};

// Certificate-rate estimates: nominal Lie derivatives plus the learned
// correction, split into the drift part and the control-gain row.
struct LieEstimates {
  double lf = 0.0;
  RowVectorXd lg;
};

LieEstimates lie_estimates(const GpModel& model, const Eigen::Ref<const VectorXd>& x,
                           double nominal_lf, const RowVectorXd& nominal_lg);

// Smallest scale beta on the geometric grid such that at least a 1 - delta
// fraction of validation residuals |mu - z| fall within beta * stddev.
double calibrate_beta(const GpModel& model, const Dataset& validation,
                      const ErrorBoundConfig& config);

struct TuneOptions {
  double noise_variance_init = 1e-2;
  int max_sweeps = 10;
  bool tune_noise = true;
};

struct TunedModel {
  SeKernelParams f_params;
  std::vector<SeKernelParams> g_params;
  double noise_variance = 0.0;
  double log_marginal_likelihood = 0.0;
};

// Coordinate search over log-hyperparameters maximizing marginal likelihood.
TunedModel tune_hyperparameters(const Dataset& data, const TuneOptions& options);

}  // namespace gpcert
