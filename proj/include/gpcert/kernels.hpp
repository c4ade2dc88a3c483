#pragma once

#include <memory>
#include <vector>

#include "gpcert/common.hpp"

namespace gpcert {

class Dataset;

// Hyperparameters of a squared-exponential kernel over the state.
// `lengthscales` holds either a single shared value or one value per state
// dimension; all entries must be positive, as must the signal variance.
struct SeKernelParams {
  double signal_variance = 1.0;
  VectorXd lengthscales = VectorXd::Ones(1);

  void validate() const;
};

double se_eval(const SeKernelParams& params, const Eigen::Ref<const VectorXd>& a,
               const Eigen::Ref<const VectorXd>& b);

// Positive-definite kernel over states.  Kept abstract so tests can plug in
// constant or hand-crafted kernels next to the squared-exponential default.
class StateKernel {
 public:
  virtual ~StateKernel() = default;
  virtual double eval(const Eigen::Ref<const VectorXd>& a,
                      const Eigen::Ref<const VectorXd>& b) const = 0;
  virtual std::unique_ptr<StateKernel> clone() const = 0;
};

class SquaredExponentialKernel final : public StateKernel {
 public:
  explicit SquaredExponentialKernel(SeKernelParams params);
  double eval(const Eigen::Ref<const VectorXd>& a,
              const Eigen::Ref<const VectorXd>& b) const override;
  std::unique_ptr<StateKernel> clone() const override;
  const SeKernelParams& params() const { return params_; }

 private:
  SeKernelParams params_;
};

class ConstantKernel final : public StateKernel {
 public:
  explicit ConstantKernel(double value);
  double eval(const Eigen::Ref<const VectorXd>& a,
              const Eigen::Ref<const VectorXd>& b) const override;
  std::unique_ptr<StateKernel> clone() const override;

 private:
  double value_;
};

// Compound kernel over state-control pairs:
//
//   k((x,u),(x',u')) = [1 u^T] Diag(k_f(x,x'), k_g1(x,x'), ..., k_gm(x,x')) [1; u']
//                    = k_f(x,x') + sum_c u_c k_gc(x,x') u'_c.
//
// The second summand is the control-dependent part `eval_u`.  The structure
// makes scalar observations of an affine-in-u quantity identifiable as one
// drift channel plus m input-gain channels.
class AdpKernel {
 public:
  AdpKernel(std::unique_ptr<StateKernel> kf,
            std::vector<std::unique_ptr<StateKernel>> kg);
  AdpKernel(const AdpKernel& other);
  AdpKernel& operator=(const AdpKernel& other);
  AdpKernel(AdpKernel&&) = default;
  AdpKernel& operator=(AdpKernel&&) = default;

  static AdpKernel squared_exponential(SeKernelParams f_params,
                                       std::vector<SeKernelParams> g_params);

  int control_dim() const { return static_cast<int>(kg_.size()); }

  double kf(const Eigen::Ref<const VectorXd>& a,
            const Eigen::Ref<const VectorXd>& b) const;
  double kg(int channel, const Eigen::Ref<const VectorXd>& a,
            const Eigen::Ref<const VectorXd>& b) const;

  // Full compound kernel k((x,u),(x2,u2)).
  double eval(const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& u,
              const Eigen::Ref<const VectorXd>& x2,
              const Eigen::Ref<const VectorXd>& u2) const;

  // Control-dependent part: u^T Diag(k_g1,...,k_gm) u2.
  double eval_u(const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& u,
                const Eigen::Ref<const VectorXd>& x2,
                const Eigen::Ref<const VectorXd>& u2) const;

  // N x N symmetric PSD Gram matrix over a dataset's (x_j, u_j) pairs.
  MatrixXd gram_matrix(const Dataset& data) const;

  // (m+1) x N cross matrix at query state x: row 0 holds k_f(x, x_j), row c
  // holds k_gc(x, x_j) * u_jc, so that [1 u^T] * cross == eval at (x,u).
  MatrixXd cross_matrix(const Eigen::Ref<const VectorXd>& x, const Dataset& data) const;

  // (m+1) x (m+1) prior second-moment matrix Diag(k_f(x,x), k_gc(x,x)).
  MatrixXd prior_gram(const Eigen::Ref<const VectorXd>& x) const;

 private:
  std::unique_ptr<StateKernel> kf_;
  std::vector<std::unique_ptr<StateKernel>> kg_;
};

}  // namespace gpcert
