#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gpcert/certificate.hpp"
#include "gpcert/gp.hpp"

namespace gpcert {

// Optional early stop: quit adding points once the subset already certifies
// feasibility of the cone program at probe gain `alpha`.  Off by default.
struct DynamicStopRule {
  double alpha = 1.0;
  const CertificateProblem* problem = nullptr;
};

struct SelectionConfig {
  int M = 2;
  double epsilon = 0.95;
  enum class LgHintPolicy { FullDataset, PreviousStep };
  LgHintPolicy lg_hint_policy = LgHintPolicy::FullDataset;
  std::optional<DynamicStopRule> dynamic_stop;
};

// Symmetric N x N bit matrix: bit (i,j) set iff points i and j are too
// correlated to coexist in a selected subset at threshold epsilon.
class CorrelationIndicator {
 public:
  CorrelationIndicator() = default;

  int size() const { return n_; }
  double epsilon() const { return epsilon_; }
  std::uint64_t dataset_hash() const { return dataset_hash_; }
  bool at(int i, int j) const;

  // Clears every candidate j with bit (i,j) set; the candidate mask uses the
  // same 64-bit word layout as the rows.
  void knock_out(int i, std::vector<std::uint64_t>& candidate_mask) const;

  void save(const std::string& path) const;
  static std::optional<CorrelationIndicator> try_load(const std::string& path,
                                                      std::uint64_t dataset_hash,
                                                      double epsilon);

 private:
  friend CorrelationIndicator build_correlation_indicator(const GpModel&, double);

  void set(int i, int j);

  int n_ = 0;
  int words_per_row_ = 0;
  double epsilon_ = 0.0;
  std::uint64_t dataset_hash_ = 0;
  std::vector<std::uint64_t> bits_;
};

struct OnlineSubset {
  std::vector<int> indices;
  RowVectorXd lg_direction;
  bool exhausted = false;
  bool zero_alignment_fallback = false;

  int size() const { return static_cast<int>(indices.size()); }
};

// |k^u((x,u),(x_i,u_i))| / sqrt(k((x_i,u_i),(x_i,u_i))).
double alignment(const GpModel& model, const Eigen::Ref<const VectorXd>& x,
                 const Eigen::Ref<const VectorXd>& u, int i);

// Same numerator over sqrt(k_i + (1-eps)/(1+eps(M-2)) * sigma_n^2); never
// exceeds the plain alignment and needs no condition on the noise.
double modified_alignment(const GpModel& model, const Eigen::Ref<const VectorXd>& x,
                          const Eigen::Ref<const VectorXd>& u, int i, double epsilon,
                          int M);

// Data-dependent quadratic term of the posterior variance in direction u:
// r^T (K_sub + sigma_n^2 I)^{-1} r with r_i = k^u((x,u),(x_i,u_i)).
double selection_objective(const GpModel& model, const std::vector<int>& subset,
                           const Eigen::Ref<const VectorXd>& x,
                           const Eigen::Ref<const VectorXd>& u);

// O(N^2) offline pass marking pairs with k_ij^2 >= eps^2 k_i k_j.
CorrelationIndicator build_correlation_indicator(const GpModel& model, double epsilon);

CorrelationIndicator load_or_build_correlation_indicator(const GpModel& model,
                                                         double epsilon,
                                                         const std::string& cache_path);

// Top-M points by alignment score, ties to the lower index.
OnlineSubset naive_select(const GpModel& model, const Eigen::Ref<const VectorXd>& x,
                          const RowVectorXd& lg_dir, int M);

// Iterated argmax over alignment with correlation knock-out; O(NM) per call
// once scores are computed.  Zero-score picks fall back to the largest prior
// variance and are flagged; exhaustion before M picks is flagged.
OnlineSubset select_online(const GpModel& model, const Eigen::Ref<const VectorXd>& x,
                           const SelectionConfig& cfg, const CorrelationIndicator& B,
                           const RowVectorXd& lg_dir);

// alpha * ||lg_hat||^2 - beta * sigma(x, alpha * lg_hat^T); a positive value
// certifies feasibility of the cone-constrained filter at x.
double feasibility_margin(const GpModel& model, const Eigen::Ref<const VectorXd>& x,
                          const CertificateProblem& prob, double alpha, double beta);

// sqrt of the u-quadratic block value: lim (1/alpha) sigma(x, alpha u) as
// alpha grows.  Minimizing this over subsets maximizes selection_objective.
double asymptotic_direction_cost(const GpModel& model, const std::vector<int>& subset,
                                 const Eigen::Ref<const VectorXd>& x,
                                 const RowVectorXd& lg_dir);

struct BoundCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool conditions_ok = false;
};

// Lower bound on the selection objective by the scaled sum of squared
// alignments; requires the pairwise decorrelation condition and the noise
// ceiling sigma_n^2 <= eps^2 (M-1) min_i k_i / (1-eps).
BoundCheck theorem1_bound(const GpModel& model, const std::vector<int>& subset,
                          const Eigen::Ref<const VectorXd>& x,
                          const Eigen::Ref<const VectorXd>& u, double epsilon);

// Looser bound via modified alignments; only the pairwise condition needed.
BoundCheck theorem3_bound(const GpModel& model, const std::vector<int>& subset,
                          const Eigen::Ref<const VectorXd>& x,
                          const Eigen::Ref<const VectorXd>& u, double epsilon);

// Normalized information kept by a subset at x in direction lg_dir:
// selection_objective / full prior kernel value, in [0,1].
double data_quality(const GpModel& model_full, const std::vector<int>& subset,
                    const Eigen::Ref<const VectorXd>& x, const RowVectorXd& lg_dir);

struct QualityPoint {
  double epsilon = 0.0;
  double zeta = 0.0;
  int skipped = 0;
};

using DirectionFn = std::function<RowVectorXd(const VectorXd&)>;

// Mean data_quality of select_online subsets over a state sample, for each
// epsilon on the grid.  `direction` supplies the selection direction at each
// state; defaults to the model's own control-gain estimate.
std::vector<QualityPoint> selection_quality_curve(const GpModel& model,
                                                  const std::vector<VectorXd>& states,
                                                  const std::vector<double>& eps_grid,
                                                  int M,
                                                  const DirectionFn& direction = {});

// Sorted pairwise normalized correlations k_ij^2/(k_i k_j); quantiles of this
// sample guide the choice of epsilon.
VectorXd correlation_quantiles(const GpModel& model, const VectorXd& probs);

}  // namespace gpcert
