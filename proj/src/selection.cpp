#include "gpcert/selection.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

namespace gpcert {

namespace {

constexpr char kCacheMagic[8] = {'g', 'p', 'c', 'e', 'r', 't', 'B', '1'};

// (K_sub + sigma_n^2 I)^{-1} factorization over a subset, with the same
// jitter ladder as the full fit.
Eigen::LLT<MatrixXd> subset_factorization(const GpModel& model,
                                          const std::vector<int>& subset) {
  const int M = static_cast<int>(subset.size());
  const auto& data = model.data();
  MatrixXd K(M, M);
  for (int b = 0; b < M; ++b) {
    const VectorXd xb = data.state(subset[b]);
    const VectorXd ub = data.control(subset[b]);
    for (int a = b; a < M; ++a) {
      const double v = model.kernel().eval(data.state(subset[a]), data.control(subset[a]),
                                           xb, ub);
      K(a, b) = v;
      K(b, a) = v;
    }
  }
  double jitter = 0.0;
  for (;;) {
    MatrixXd reg = K;
    reg.diagonal().array() += model.noise_variance() + jitter;
    Eigen::LLT<MatrixXd> llt(reg);
    if (llt.info() == Eigen::Success) {
      return llt;
    }
    if (jitter >= 1e-6) {
      throw FitError("selection: subset factorization failed at jitter 1e-6");
    }
    jitter = (jitter == 0.0) ? 1e-12 : jitter * 10.0;
  }
}

VectorXd subset_control_cross(const GpModel& model, const std::vector<int>& subset,
                              const Eigen::Ref<const VectorXd>& x,
                              const Eigen::Ref<const VectorXd>& u) {
  const int M = static_cast<int>(subset.size());
  const auto& data = model.data();
  VectorXd r(M);
  for (int a = 0; a < M; ++a) {
    r[a] = model.kernel().eval_u(x, u, data.state(subset[a]), data.control(subset[a]));
  }
  return r;
}

void validate_subset(const GpModel& model, const std::vector<int>& subset) {
  if (subset.empty()) {
    throw UsageError("selection: subset is empty");
  }
  for (int i : subset) {
    if (i < 0 || i >= model.size()) {
      throw UsageError("selection: subset index out of range");
    }
  }
}

double alignment_denominator(const GpModel& model, int i) {
  const double ki = model.prior_diag(i);
  if (!(ki > 0.0)) {
    throw MetricError("alignment: degenerate stored point with zero prior variance");
  }
  return ki;
}

double theorem_factor(double epsilon, int M) {
  return (1.0 - epsilon) / (1.0 + epsilon * (M - 2));
}

// Pairwise decorrelation condition: k_ij^2 < eps^2 k_i k_j for all pairs.
bool pairwise_condition(const GpModel& model, const std::vector<int>& subset,
                        double epsilon) {
  const auto& data = model.data();
  const int M = static_cast<int>(subset.size());
  for (int a = 0; a < M; ++a) {
    for (int b = a + 1; b < M; ++b) {
      const double kij =
          model.kernel().eval(data.state(subset[a]), data.control(subset[a]),
                              data.state(subset[b]), data.control(subset[b]));
      const double bound = epsilon * epsilon * model.prior_diag(subset[a]) *
                           model.prior_diag(subset[b]);
      if (!(kij * kij < bound)) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace

bool CorrelationIndicator::at(int i, int j) const {
  if (i < 0 || j < 0 || i >= n_ || j >= n_) {
    throw UsageError("CorrelationIndicator::at: index out of range");
  }
  const std::uint64_t word = bits_[static_cast<std::size_t>(i) * words_per_row_ + j / 64];
  return (word >> (j % 64)) & 1u;
}

void CorrelationIndicator::set(int i, int j) {
  bits_[static_cast<std::size_t>(i) * words_per_row_ + j / 64] |= std::uint64_t{1}
                                                                  << (j % 64);
}

void CorrelationIndicator::knock_out(int i, std::vector<std::uint64_t>& candidate_mask) const {
  const std::uint64_t* row = bits_.data() + static_cast<std::size_t>(i) * words_per_row_;
  for (int w = 0; w < words_per_row_; ++w) {
    candidate_mask[w] &= ~row[w];
  }
}

void CorrelationIndicator::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw UsageError("CorrelationIndicator::save: cannot open " + path);
  }
  out.write(kCacheMagic, sizeof(kCacheMagic));
  out.write(reinterpret_cast<const char*>(&dataset_hash_), sizeof(dataset_hash_));
  out.write(reinterpret_cast<const char*>(&epsilon_), sizeof(epsilon_));
  const std::uint32_t n = static_cast<std::uint32_t>(n_);
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(bits_.data()),
            static_cast<std::streamsize>(bits_.size() * sizeof(std::uint64_t)));
  if (!out) {
    throw UsageError("CorrelationIndicator::save: write failed");
  }
}

std::optional<CorrelationIndicator> CorrelationIndicator::try_load(
    const std::string& path, std::uint64_t dataset_hash, double epsilon) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    return std::nullopt;
  }
  char magic[8];
  std::uint64_t hash = 0;
  double eps = 0.0;
  std::uint32_t n = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&hash), sizeof(hash));
  in.read(reinterpret_cast<char*>(&eps), sizeof(eps));
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || std::memcmp(magic, kCacheMagic, sizeof(magic)) != 0 ||
      hash != dataset_hash || eps != epsilon) {
    return std::nullopt;
  }
  CorrelationIndicator B;
  B.n_ = static_cast<int>(n);
  B.words_per_row_ = (B.n_ + 63) / 64;
  B.epsilon_ = eps;
  B.dataset_hash_ = hash;
  B.bits_.resize(static_cast<std::size_t>(B.n_) * B.words_per_row_);
  in.read(reinterpret_cast<char*>(B.bits_.data()),
          static_cast<std::streamsize>(B.bits_.size() * sizeof(std::uint64_t)));
  if (!in) {
    return std::nullopt;
  }
  return B;
}

double alignment(const GpModel& model, const Eigen::Ref<const VectorXd>& x,
                 const Eigen::Ref<const VectorXd>& u, int i) {
  const double ki = alignment_denominator(model, i);
  const double num =
      std::abs(model.kernel().eval_u(x, u, model.data().state(i), model.data().control(i)));
  return num / std::sqrt(ki);
}

double modified_alignment(const GpModel& model, const Eigen::Ref<const VectorXd>& x,
                          const Eigen::Ref<const VectorXd>& u, int i, double epsilon,
                          int M) {
  if (M < 2) {
    throw UsageError("modified_alignment: M must be at least 2");
  }
  const double ki = alignment_denominator(model, i);
  const double num =
      std::abs(model.kernel().eval_u(x, u, model.data().state(i), model.data().control(i)));
  return num / std::sqrt(ki + theorem_factor(epsilon, M) * model.noise_variance());
}

double selection_objective(const GpModel& model, const std::vector<int>& subset,
                           const Eigen::Ref<const VectorXd>& x,
                           const Eigen::Ref<const VectorXd>& u) {
  validate_subset(model, subset);
  const VectorXd r = subset_control_cross(model, subset, x, u);
  const auto llt = subset_factorization(model, subset);
  return r.dot(llt.solve(r));
}

CorrelationIndicator build_correlation_indicator(const GpModel& model, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) {
    throw UsageError("build_correlation_indicator: epsilon must be in [0,1)");
  }
  const int N = model.size();
  if (N == 0) {
    throw UsageError("build_correlation_indicator: empty model");
  }
  CorrelationIndicator B;
  B.n_ = N;
  B.words_per_row_ = (N + 63) / 64;
  B.epsilon_ = epsilon;
  B.dataset_hash_ = model.data().content_hash();
  B.bits_.assign(static_cast<std::size_t>(N) * B.words_per_row_, 0);

  const auto& data = model.data();
  const double eps2 = epsilon * epsilon;
  for (int j = 0; j < N; ++j) {
    B.set(j, j);
    const VectorXd xj = data.state(j);
    const VectorXd uj = data.control(j);
    const double kj = model.prior_diag(j);
    for (int i = j + 1; i < N; ++i) {
      const double kij = model.kernel().eval(data.state(i), data.control(i), xj, uj);
      if (kij * kij >= eps2 * model.prior_diag(i) * kj) {
        B.set(i, j);
        B.set(j, i);
      }
    }
  }
  return B;
}

CorrelationIndicator load_or_build_correlation_indicator(const GpModel& model,
                                                         double epsilon,
                                                         const std::string& cache_path) {
  const std::uint64_t hash = model.data().content_hash();
  if (auto cached = CorrelationIndicator::try_load(cache_path, hash, epsilon)) {
    if (cached->size() == model.size()) {
      return std::move(*cached);
    }
  }
  CorrelationIndicator B = build_correlation_indicator(model, epsilon);
  B.save(cache_path);
  return B;
}

OnlineSubset naive_select(const GpModel& model, const Eigen::Ref<const VectorXd>& x,
                          const RowVectorXd& lg_dir, int M) {
  if (M < 1) {
    throw UsageError("naive_select: M must be positive");
  }
  const int N = model.size();
  const VectorXd u = lg_dir.transpose();
  std::vector<double> score(N);
  for (int i = 0; i < N; ++i) {
    score[i] = alignment(model, x, u, i);
  }
  std::vector<int> idx(N);
  std::iota(idx.begin(), idx.end(), 0);
  const auto better = [&score](int a, int b) {
    if (score[a] != score[b]) {
      return score[a] > score[b];
    }
    return a < b;
  };
  const int take = std::min(M, N);
  std::nth_element(idx.begin(), idx.begin() + (take - 1), idx.end(), better);
  std::sort(idx.begin(), idx.begin() + take, better);
  OnlineSubset out;
  out.indices.assign(idx.begin(), idx.begin() + take);
  out.lg_direction = lg_dir;
  return out;
}

OnlineSubset select_online(const GpModel& model, const Eigen::Ref<const VectorXd>& x,
                           const SelectionConfig& cfg, const CorrelationIndicator& B,
                           const RowVectorXd& lg_dir) {
  const int N = model.size();
  if (cfg.M < 1) {
    throw UsageError("select_online: M must be positive");
  }
  if (!(cfg.epsilon >= 0.0 && cfg.epsilon < 1.0)) {
    throw UsageError("select_online: epsilon must be in [0,1)");
  }
  if (B.size() != N) {
    throw UsageError("select_online: indicator size does not match dataset");
  }
  if (B.epsilon() != cfg.epsilon) {
    throw UsageError("select_online: indicator built with a different epsilon");
  }

  // The direction is fixed for the whole call, so all scores are computed
  // once; each pick is then an O(N) argmax plus an O(N/64) mask update.
  const VectorXd u = lg_dir.transpose();
  std::vector<double> score(N);
  for (int i = 0; i < N; ++i) {
    score[i] = alignment(model, x, u, i);
  }

  const int words = (N + 63) / 64;
  std::vector<std::uint64_t> candidates(words, ~std::uint64_t{0});
  if (N % 64 != 0) {
    candidates[words - 1] = (std::uint64_t{1} << (N % 64)) - 1;
  }

  OnlineSubset out;
  out.lg_direction = lg_dir;
  out.indices.reserve(cfg.M);

  auto argmax_candidate = [&](const std::vector<double>& key) {
    int best = -1;
    double best_key = -std::numeric_limits<double>::infinity();
    for (int w = 0; w < words; ++w) {
      std::uint64_t mask = candidates[w];
      while (mask != 0) {
        const int bit = std::countr_zero(mask);
        mask &= mask - 1;
        const int i = w * 64 + bit;
        if (key[i] > best_key) {
          best_key = key[i];
          best = i;
        }
      }
    }
    return std::pair<int, double>(best, best_key);
  };

  std::vector<double> prior;
  for (int pick = 0; pick < cfg.M; ++pick) {
    auto [best, best_score] = argmax_candidate(score);
    if (best < 0) {
      out.exhausted = true;
      break;
    }
    if (best_score == 0.0) {
      // Nothing aligns with the direction; take the largest prior variance
      // so the drift channel still benefits.
      if (prior.empty()) {
        prior.resize(N);
        for (int i = 0; i < N; ++i) {
          prior[i] = model.prior_diag(i);
        }
      }
      best = argmax_candidate(prior).first;
      out.zero_alignment_fallback = true;
    }
    out.indices.push_back(best);
    B.knock_out(best, candidates);

    if (cfg.dynamic_stop && cfg.dynamic_stop->problem != nullptr &&
        out.size() >= 2) {
      GpModel submodel = GpModel::fit(model.kernel(), model.data().subset(out.indices),
                                      model.noise_variance());
      const double margin =
          feasibility_margin(submodel, x, *cfg.dynamic_stop->problem,
                             cfg.dynamic_stop->alpha, cfg.dynamic_stop->problem->beta);
      if (margin > 0.0) {
        break;
      }
    }
  }
  return out;
}

double feasibility_margin(const GpModel& model, const Eigen::Ref<const VectorXd>& x,
                          const CertificateProblem& prob, double alpha, double beta) {
  if (!(alpha > 0.0)) {
    throw UsageError("feasibility_margin: alpha must be positive");
  }
  const auto nominal_lie = lie_derivatives(prob.certificate, prob.nominal, x);
  const auto lie = lie_estimates(model, x, nominal_lie.lf, nominal_lie.lg);
  const VectorXd probe = alpha * lie.lg.transpose();
  const auto pred = model.predict(x, probe);
  return alpha * lie.lg.squaredNorm() - beta * pred.stddev;
}

double asymptotic_direction_cost(const GpModel& model, const std::vector<int>& subset,
                                 const Eigen::Ref<const VectorXd>& x,
                                 const RowVectorXd& lg_dir) {
  validate_subset(model, subset);
  const double prior = model.kernel().eval_u(x, lg_dir.transpose(), x, lg_dir.transpose());
  const double reduced = selection_objective(model, subset, x, lg_dir.transpose());
  return std::sqrt(std::max(0.0, prior - reduced));
}

BoundCheck theorem1_bound(const GpModel& model, const std::vector<int>& subset,
                          const Eigen::Ref<const VectorXd>& x,
                          const Eigen::Ref<const VectorXd>& u, double epsilon) {
  validate_subset(model, subset);
  const int M = static_cast<int>(subset.size());
  if (M < 2) {
    throw UsageError("theorem1_bound: need at least 2 subset points");
  }
  BoundCheck out;
  out.lhs = selection_objective(model, subset, x, u);
  double sum_sq = 0.0;
  double min_ki = std::numeric_limits<double>::infinity();
  for (int i : subset) {
    const double ni = alignment(model, x, u, i);
    sum_sq += ni * ni;
    min_ki = std::min(min_ki, model.prior_diag(i));
  }
  out.rhs = theorem_factor(epsilon, M) * sum_sq;
  const bool noise_ok =
      epsilon < 1.0 &&
      model.noise_variance() <=
          epsilon * epsilon * (M - 1) * min_ki / std::max(1.0 - epsilon, 1e-300);
  out.conditions_ok = pairwise_condition(model, subset, epsilon) && noise_ok;
  return out;
}

BoundCheck theorem3_bound(const GpModel& model, const std::vector<int>& subset,
                          const Eigen::Ref<const VectorXd>& x,
                          const Eigen::Ref<const VectorXd>& u, double epsilon) {
  validate_subset(model, subset);
  const int M = static_cast<int>(subset.size());
  if (M < 2) {
    throw UsageError("theorem3_bound: need at least 2 subset points");
  }
  BoundCheck out;
  out.lhs = selection_objective(model, subset, x, u);
  double sum_sq = 0.0;
  for (int i : subset) {
    const double ni = modified_alignment(model, x, u, i, epsilon, M);
    sum_sq += ni * ni;
  }
  out.rhs = theorem_factor(epsilon, M) * sum_sq;
  out.conditions_ok = pairwise_condition(model, subset, epsilon);
  return out;
}

double data_quality(const GpModel& model_full, const std::vector<int>& subset,
                    const Eigen::Ref<const VectorXd>& x, const RowVectorXd& lg_dir) {
  validate_subset(model_full, subset);
  if (lg_dir.norm() == 0.0) {
    throw MetricError("data_quality: zero direction makes the metric undefined");
  }
  const VectorXd u = lg_dir.transpose();
  const double denom = model_full.kernel().eval(x, u, x, u);
  const double num = selection_objective(model_full, subset, x, u);
  return std::clamp(num / denom, 0.0, 1.0);
}

std::vector<QualityPoint> selection_quality_curve(const GpModel& model,
                                                  const std::vector<VectorXd>& states,
                                                  const std::vector<double>& eps_grid,
                                                  int M, const DirectionFn& direction) {
  if (states.empty()) {
    throw UsageError("selection_quality_curve: empty state sample");
  }
  const int m = model.kernel().control_dim();
  DirectionFn dir_fn = direction;
  if (!dir_fn) {
    dir_fn = [&model, m](const VectorXd& x) -> RowVectorXd {
      return model.mean_coeffs(x).tail(m);
    };
  }

  std::vector<QualityPoint> out;
  out.reserve(eps_grid.size());
  for (double eps : eps_grid) {
    const CorrelationIndicator B = build_correlation_indicator(model, eps);
    SelectionConfig cfg;
    cfg.M = M;
    cfg.epsilon = eps;
    QualityPoint point;
    point.epsilon = eps;
    double sum = 0.0;
    int used = 0;
    for (const VectorXd& x : states) {
      const RowVectorXd lg = dir_fn(x);
      try {
        const OnlineSubset subset = select_online(model, x, cfg, B, lg);
        sum += data_quality(model, subset.indices, x, lg);
        ++used;
      } catch (const MetricError&) {
        ++point.skipped;
      }
    }
    point.zeta = (used > 0) ? sum / used : 0.0;
    out.push_back(point);
  }
  return out;
}

VectorXd correlation_quantiles(const GpModel& model, const VectorXd& probs) {
  const int N = model.size();
  if (N < 2) {
    throw UsageError("correlation_quantiles: need at least 2 points");
  }
  std::vector<double> ratios;
  ratios.reserve(static_cast<std::size_t>(N) * (N - 1) / 2);
  const auto& data = model.data();
  for (int j = 0; j < N; ++j) {
    for (int i = j + 1; i < N; ++i) {
      const double kij = model.kernel().eval(data.state(i), data.control(i),
                                             data.state(j), data.control(j));
      ratios.push_back(kij * kij / (model.prior_diag(i) * model.prior_diag(j)));
    }
  }
  std::sort(ratios.begin(), ratios.end());
  VectorXd out(probs.size());
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    const double p = probs[k];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw UsageError("correlation_quantiles: probabilities must lie in [0,1]");
    }
    const double pos = p * (ratios.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, ratios.size() - 1);
    const double frac = pos - lo;
    out[k] = (1.0 - frac) * ratios[lo] + frac * ratios[hi];
  }
  return out;
}

}  // namespace gpcert
