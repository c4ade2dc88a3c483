#include "gpcert/gp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace gpcert {

namespace {
constexpr double kMaxJitter = 1e-6;
}

GpModel::GpModel(AdpKernel kernel, Dataset data, double noise_variance)
    : kernel_(std::move(kernel)), data_(std::move(data)), noise_variance_(noise_variance) {}

GpModel GpModel::fit(AdpKernel kernel, Dataset data, double noise_variance,
                     bool defer_factorization) {
  if (data.size() < 1) {
    throw UsageError("GpModel::fit: dataset is empty");
  }
  if (data.control_dim() != kernel.control_dim()) {
    throw UsageError("GpModel::fit: kernel/control dimension mismatch");
  }
  if (noise_variance < 0.0) {
    throw UsageError("GpModel::fit: negative noise variance");
  }
  GpModel model(std::move(kernel), std::move(data), noise_variance);
  model.compute_prior_diag();
  if (!defer_factorization) {
    model.factorize();
  }
  return model;
}

GpModel GpModel::prior(AdpKernel kernel, int state_dim, double noise_variance) {
  const int m = kernel.control_dim();
  return GpModel(std::move(kernel), Dataset(state_dim, m), noise_variance);
}

void GpModel::compute_prior_diag() {
  const int N = data_.size();
  prior_diag_.resize(N);
  for (int i = 0; i < N; ++i) {
    const VectorXd xi = data_.state(i);
    const VectorXd ui = data_.control(i);
    prior_diag_[i] = kernel_.eval(xi, ui, xi, ui);
  }
}

void GpModel::ensure_factorized() const {
  if (!llt_ && size() > 0) {
    factorize();
  }
}

void GpModel::factorize() const {
  const int N = data_.size();
  chol_storage_ = kernel_.gram_matrix(data_);
  double jitter = 0.0;
  for (;;) {
    chol_storage_.diagonal() = prior_diag_.array() + noise_variance_ + jitter;
    llt_ = std::make_unique<Eigen::LLT<Eigen::Ref<MatrixXd>>>(chol_storage_);
    if (llt_->info() == Eigen::Success) {
      break;
    }
    if (jitter >= kMaxJitter) {
      throw FitError("GpModel::fit: Gram factorization failed at jitter 1e-6");
    }
    jitter = (jitter == 0.0) ? 1e-12 : jitter * 10.0;
    // The failed attempt clobbered the lower triangle; the upper is intact.
    for (int j = 0; j < N; ++j) {
      for (int i = j + 1; i < N; ++i) {
        chol_storage_(i, j) = chol_storage_(j, i);
      }
    }
  }
  jitter_ = jitter;
  log_det_ = 2.0 * chol_storage_.diagonal().array().log().sum();
  weights_ = llt_->solve(data_.outputs());
}

RowVectorXd GpModel::mean_coeffs(const Eigen::Ref<const VectorXd>& x) const {
  const int m = kernel_.control_dim();
  if (size() == 0) {
    return RowVectorXd::Zero(m + 1);
  }
  ensure_factorized();
  return (kernel_.cross_matrix(x, data_) * weights_).transpose();
}

MatrixXd GpModel::variance_gram(const Eigen::Ref<const VectorXd>& x) const {
  MatrixXd prior = kernel_.prior_gram(x);
  if (size() == 0) {
    return prior;
  }
  ensure_factorized();
  const MatrixXd cross = kernel_.cross_matrix(x, data_);
  const MatrixXd sol = llt_->solve(cross.transpose());
  MatrixXd S = prior - cross * sol;
  S = 0.5 * (S + S.transpose()).eval();
  return S;
}

GpModel::Prediction GpModel::predict(const Eigen::Ref<const VectorXd>& x,
                                     const Eigen::Ref<const VectorXd>& u) const {
  const int m = kernel_.control_dim();
  if (u.size() != m) {
    throw UsageError("GpModel::predict: control dimension mismatch");
  }
  VectorXd y(m + 1);
  y[0] = 1.0;
  y.tail(m) = u;
  Prediction out;
  out.mean = mean_coeffs(x).dot(y);
  out.variance = std::max(0.0, y.dot(variance_gram(x) * y));
  out.stddev = std::sqrt(out.variance);
  return out;
}

double GpModel::log_marginal_likelihood() const {
  const int N = size();
  if (N == 0) {
    return 0.0;
  }
  ensure_factorized();
  const double fit_term = data_.outputs().dot(weights_);
  return -0.5 * fit_term - 0.5 * log_det_ -
         0.5 * N * std::log(2.0 * std::numbers::pi);
}

MatrixXd GpModel::solve_gram(const MatrixXd& rhs) const {
  if (size() == 0) {
    throw UsageError("GpModel::solve_gram: empty model");
  }
  if (rhs.rows() != size()) {
    throw UsageError("GpModel::solve_gram: dimension mismatch");
  }
  ensure_factorized();
  return llt_->solve(rhs);
}

const VectorXd& GpModel::weights() const {
  ensure_factorized();
  return weights_;
}

double GpModel::prior_diag(int i) const {
  if (i < 0 || i >= size()) {
    throw UsageError("GpModel::prior_diag: index out of range");
  }
  return prior_diag_[i];
}

LieEstimates lie_estimates(const GpModel& model, const Eigen::Ref<const VectorXd>& x,
                           double nominal_lf, const RowVectorXd& nominal_lg) {
  const int m = model.kernel().control_dim();
  if (nominal_lg.size() != m) {
    throw UsageError("lie_estimates: control dimension mismatch");
  }
  const RowVectorXd coeffs = model.mean_coeffs(x);
  LieEstimates out;
  out.lf = nominal_lf + coeffs[0];
  out.lg = nominal_lg + coeffs.tail(m);
  return out;
}

double calibrate_beta(const GpModel& model, const Dataset& validation,
                      const ErrorBoundConfig& config) {
  const int count = validation.size();
  if (count < 1) {
    throw UsageError("calibrate_beta: empty validation set");
  }
  if (!(config.delta > 0.0 && config.delta < 1.0)) {
    throw UsageError("calibrate_beta: delta must be in (0,1)");
  }
  if (config.grid_size < 2 || !(config.beta_min > 0.0) ||
      !(config.beta_max > config.beta_min)) {
    throw UsageError("calibrate_beta: bad grid");
  }

  std::vector<double> ratios(count);
  for (int j = 0; j < count; ++j) {
    const auto pred = model.predict(validation.state(j), validation.control(j));
    const double residual = std::abs(pred.mean - validation.output(j));
    if (pred.stddev > 0.0) {
      ratios[j] = residual / pred.stddev;
    } else {
      ratios[j] = (residual == 0.0) ? 0.0 : std::numeric_limits<double>::infinity();
    }
  }
  std::sort(ratios.begin(), ratios.end());
  const int needed =
      static_cast<int>(std::ceil((1.0 - config.delta) * count - 1e-9));
  const double threshold = ratios[std::max(0, needed - 1)];

  const double log_ratio = std::log(config.beta_max / config.beta_min);
  for (int k = 0; k < config.grid_size; ++k) {
    const double beta =
        config.beta_min * std::exp(log_ratio * k / (config.grid_size - 1));
    if (beta >= threshold) {
      return beta;
    }
  }
  throw CalibrationError(
      "calibrate_beta: required coverage not reachable on the grid (needed scale " +
      std::to_string(threshold) + ")");
}

namespace {

struct TuneState {
  SeKernelParams f_params;
  std::vector<SeKernelParams> g_params;
  double noise_variance = 0.0;
};

double tune_objective(const Dataset& data, const TuneState& s) {
  try {
    auto model = GpModel::fit(AdpKernel::squared_exponential(s.f_params, s.g_params),
                              data, s.noise_variance);
    return model.log_marginal_likelihood();
  } catch (const FitError&) {
    return -std::numeric_limits<double>::infinity();
  }
}

}  // namespace

TunedModel tune_hyperparameters(const Dataset& data, const TuneOptions& options) {
  if (data.size() < 2) {
    throw UsageError("tune_hyperparameters: need at least 2 points");
  }
  const int m = data.control_dim();

  // Median-heuristic initial lengthscale, output variance as signal variance.
  std::vector<double> dists;
  const int probe = std::min(data.size(), 200);
  for (int i = 0; i < probe; ++i) {
    for (int j = i + 1; j < probe; ++j) {
      dists.push_back((data.state(i) - data.state(j)).norm());
    }
  }
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  double init_ell = std::max(1e-3, dists[dists.size() / 2]);
  const VectorXd z = data.outputs();
  const double z_var = (z.array() - z.mean()).square().sum() / z.size();
  const double init_sv = std::max(1e-6, z_var);

  TuneState state;
  state.f_params.signal_variance = init_sv;
  state.f_params.lengthscales = VectorXd::Constant(1, init_ell);
  state.g_params.assign(m, state.f_params);
  state.noise_variance = options.noise_variance_init;

  double best = tune_objective(data, state);
  double step = std::log(4.0);
  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    bool improved = false;
    auto try_coord = [&](double& value) {
      for (double dir : {+1.0, -1.0}) {
        const double saved = value;
        value = std::exp(std::log(saved) + dir * step);
        const double cand = tune_objective(data, state);
        if (cand > best + 1e-10) {
          best = cand;
          improved = true;
          return;
        }
        value = saved;
      }
    };
    try_coord(state.f_params.signal_variance);
    try_coord(state.f_params.lengthscales[0]);
    for (auto& g : state.g_params) {
      try_coord(g.signal_variance);
      try_coord(g.lengthscales[0]);
    }
    if (options.tune_noise) {
      try_coord(state.noise_variance);
    }
    if (!improved) {
      step *= 0.5;
      if (step < std::log(1.05)) {
        break;
      }
    }
  }

  TunedModel out;
  out.f_params = state.f_params;
  out.g_params = state.g_params;
  out.noise_variance = state.noise_variance;
  out.log_marginal_likelihood = best;
  return out;
}

}  // namespace gpcert
