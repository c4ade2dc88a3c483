#include "gpcert/kernels.hpp"

#include <cmath>

#include "gpcert/dataset.hpp"

namespace gpcert {

void SeKernelParams::validate() const {
  if (!(signal_variance > 0.0)) {
    throw UsageError("signal_variance must be positive");
  }
  if (lengthscales.size() < 1 || (lengthscales.array() <= 0.0).any()) {
    throw UsageError("lengthscales must be positive and nonempty");
  }
}

double se_eval(const SeKernelParams& params, const Eigen::Ref<const VectorXd>& a,
               const Eigen::Ref<const VectorXd>& b) {
  if (a.size() != b.size()) {
    throw UsageError("se_eval: mismatched point dimensions");
  }
  double q = 0.0;
  if (params.lengthscales.size() == 1) {
    const double inv_l2 = 1.0 / (params.lengthscales[0] * params.lengthscales[0]);
    q = (a - b).squaredNorm() * inv_l2;
  } else {
    if (params.lengthscales.size() != a.size()) {
      throw UsageError("se_eval: lengthscale count does not match dimension");
    }
    q = ((a - b).array() / params.lengthscales.array()).square().sum();
  }
  return params.signal_variance * std::exp(-0.5 * q);
}

SquaredExponentialKernel::SquaredExponentialKernel(SeKernelParams params)
    : params_(std::move(params)) {
  params_.validate();
}

double SquaredExponentialKernel::eval(const Eigen::Ref<const VectorXd>& a,
                                      const Eigen::Ref<const VectorXd>& b) const {
  return se_eval(params_, a, b);
}

std::unique_ptr<StateKernel> SquaredExponentialKernel::clone() const {
  return std::make_unique<SquaredExponentialKernel>(params_);
}

ConstantKernel::ConstantKernel(double value) : value_(value) {
  if (!(value > 0.0)) {
    throw UsageError("ConstantKernel value must be positive");
  }
}

double ConstantKernel::eval(const Eigen::Ref<const VectorXd>&,
                            const Eigen::Ref<const VectorXd>&) const {
  return value_;
}

std::unique_ptr<StateKernel> ConstantKernel::clone() const {
  return std::make_unique<ConstantKernel>(value_);
}

AdpKernel::AdpKernel(std::unique_ptr<StateKernel> kf,
                     std::vector<std::unique_ptr<StateKernel>> kg)
    : kf_(std::move(kf)), kg_(std::move(kg)) {
  if (!kf_) {
    throw UsageError("AdpKernel: drift kernel is required");
  }
  if (kg_.empty()) {
    throw UsageError("AdpKernel: at least one gain kernel is required");
  }
  for (const auto& k : kg_) {
    if (!k) {
      throw UsageError("AdpKernel: null gain kernel");
    }
  }
}

AdpKernel::AdpKernel(const AdpKernel& other) : kf_(other.kf_->clone()) {
  kg_.reserve(other.kg_.size());
  for (const auto& k : other.kg_) {
    kg_.push_back(k->clone());
  }
}

AdpKernel& AdpKernel::operator=(const AdpKernel& other) {
  if (this != &other) {
    AdpKernel copy(other);
    *this = std::move(copy);
  }
  return *this;
}

AdpKernel AdpKernel::squared_exponential(SeKernelParams f_params,
                                         std::vector<SeKernelParams> g_params) {
  auto kf = std::make_unique<SquaredExponentialKernel>(std::move(f_params));
  std::vector<std::unique_ptr<StateKernel>> kg;
  kg.reserve(g_params.size());
  for (auto& p : g_params) {
    kg.push_back(std::make_unique<SquaredExponentialKernel>(std::move(p)));
  }
  return AdpKernel(std::move(kf), std::move(kg));
}

double AdpKernel::kf(const Eigen::Ref<const VectorXd>& a,
                     const Eigen::Ref<const VectorXd>& b) const {
  return kf_->eval(a, b);
}

double AdpKernel::kg(int channel, const Eigen::Ref<const VectorXd>& a,
                     const Eigen::Ref<const VectorXd>& b) const {
  if (channel < 0 || channel >= control_dim()) {
    throw UsageError("AdpKernel::kg: channel out of range");
  }
  return kg_[channel]->eval(a, b);
}

double AdpKernel::eval(const Eigen::Ref<const VectorXd>& x,
                       const Eigen::Ref<const VectorXd>& u,
                       const Eigen::Ref<const VectorXd>& x2,
                       const Eigen::Ref<const VectorXd>& u2) const {
  return kf_->eval(x, x2) + eval_u(x, u, x2, u2);
}

double AdpKernel::eval_u(const Eigen::Ref<const VectorXd>& x,
                         const Eigen::Ref<const VectorXd>& u,
                         const Eigen::Ref<const VectorXd>& x2,
                         const Eigen::Ref<const VectorXd>& u2) const {
  const int m = control_dim();
  if (u.size() != m || u2.size() != m) {
    throw UsageError("AdpKernel: control dimension mismatch");
  }
  double acc = 0.0;
  for (int c = 0; c < m; ++c) {
    acc += u[c] * kg_[c]->eval(x, x2) * u2[c];
  }
  return acc;
}

MatrixXd AdpKernel::gram_matrix(const Dataset& data) const {
  const int n = data.size();
  if (n == 0) {
    throw UsageError("gram_matrix: empty dataset");
  }
  if (data.control_dim() != control_dim()) {
    throw UsageError("gram_matrix: control dimension mismatch");
  }
  MatrixXd K(n, n);
  for (int j = 0; j < n; ++j) {
    const VectorXd xj = data.state(j);
    const VectorXd uj = data.control(j);
    for (int i = j; i < n; ++i) {
      const double v = eval(data.state(i), data.control(i), xj, uj);
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

MatrixXd AdpKernel::cross_matrix(const Eigen::Ref<const VectorXd>& x,
                                 const Dataset& data) const {
  const int n = data.size();
  const int m = control_dim();
  if (n == 0) {
    throw UsageError("cross_matrix: empty dataset");
  }
  MatrixXd C(m + 1, n);
  for (int j = 0; j < n; ++j) {
    const VectorXd xj = data.state(j);
    const VectorXd uj = data.control(j);
    C(0, j) = kf_->eval(x, xj);
    for (int c = 0; c < m; ++c) {
      C(c + 1, j) = kg_[c]->eval(x, xj) * uj[c];
    }
  }
  return C;
}

MatrixXd AdpKernel::prior_gram(const Eigen::Ref<const VectorXd>& x) const {
  const int m = control_dim();
  MatrixXd D = MatrixXd::Zero(m + 1, m + 1);
  D(0, 0) = kf_->eval(x, x);
  for (int c = 0; c < m; ++c) {
    D(c + 1, c + 1) = kg_[c]->eval(x, x);
  }
  return D;
}

}  // namespace gpcert
