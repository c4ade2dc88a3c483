#pragma once

#include <optional>
#include <string>

#include "gpcert/common.hpp"

namespace gpcert {

struct Box {
  VectorXd lo;
  VectorXd hi;

  void validate(int m) const;
  bool contains(const Eigen::Ref<const VectorXd>& u, double tol = 0.0) const;
  VectorXd clamp(const Eigen::Ref<const VectorXd>& u) const;
};

// Problem data shared by the filter and backup programs.
//
// Filter:  min ||u - u_ref||^2
//          s.t. cone_scale * sqrt([1 u^T] cone_matrix [1; u])
//                 <= affine_offset + affine_row * u,
//               u in bounds (when present).
//
// Backup:  min cone_scale * sqrt([1 u^T] cone_matrix [1; u]) - linear_objective * u
//          s.t. u in bounds.
struct ConeProblem {
  VectorXd u_ref;
  double cone_scale = 0.0;
  MatrixXd cone_matrix;
  double affine_offset = 0.0;
  RowVectorXd affine_row;
  std::optional<Box> bounds;
  std::optional<RowVectorXd> linear_objective;

  // When set, the solver writes the problem as text before solving.
  std::optional<std::string> debug_dump_path;

  int control_dim() const { return static_cast<int>(u_ref.size()); }
  void validate() const;
};

enum class SolveStatus { Optimal, Infeasible, NumericalFailure };

struct SolveOutcome {
  SolveStatus status = SolveStatus::NumericalFailure;
  VectorXd u;
  double objective = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  // Multipliers at the solution (cone, then lower/upper bounds) for the
  // independent optimality check.
  VectorXd multipliers;
};

SolveOutcome solve_filter_problem(const ConeProblem& p, double tol = 1e-8);
SolveOutcome solve_backup_problem(const ConeProblem& p, double tol = 1e-8);

// Stationarity / feasibility / complementarity residual of an Optimal
// outcome, computed from scratch; used to verify solver results.
double kkt_residual(const ConeProblem& p, const SolveOutcome& outcome,
                    bool backup_objective = false);

// Cone constraint value g(u) = cone_scale * sqrt([1 u] Sigma [1; u])
//                              - (affine_offset + affine_row * u);
// feasible iff g(u) <= 0.
double cone_violation(const ConeProblem& p, const Eigen::Ref<const VectorXd>& u);

void dump_cone_problem(const ConeProblem& p, const std::string& path);
ConeProblem load_cone_problem(const std::string& path);

}  // namespace gpcert
