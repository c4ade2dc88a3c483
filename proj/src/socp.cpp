#include "gpcert/socp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <vector>

namespace gpcert {

namespace {

constexpr int kMaxIterations = 200;
constexpr int kBarrierMaxSteps = 400;
constexpr double kBarrierGrowth = 20.0;
constexpr double kInfeasibleViolation = 1e-6;

MatrixXd clip_psd(const MatrixXd& sigma) {
  MatrixXd sym = 0.5 * (sigma + sigma.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  if (es.info() != Eigen::Success) {
    throw SolverError("cone matrix eigendecomposition failed");
  }
  const double floor = -1e-10 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < floor) {
    throw UsageError("cone_matrix is not positive semidefinite within tolerance");
  }
  VectorXd clipped = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
}

// Value / gradient / Hessian of s(u) = sqrt([1 u^T] Sigma [1; u]) for a
// clipped-PSD Sigma.  The Hessian (Sigma_uu - c c^T / q) / s is PSD by
// Cauchy-Schwarz; near q = 0 the rank-one term is dropped.
struct ConeGeometry {
  MatrixXd sigma;    // (m+1)x(m+1), PSD
  MatrixXd sigma_uu; // m x m block
  double s_floor = 0.0;

  explicit ConeGeometry(const MatrixXd& sigma_in)
      : sigma(clip_psd(sigma_in)),
        sigma_uu(sigma.bottomRightCorner(sigma.rows() - 1, sigma.cols() - 1)) {
    s_floor = 1e-12 * std::sqrt(std::max(1.0, sigma.diagonal().maxCoeff()));
  }

  double value(const Eigen::Ref<const VectorXd>& u) const {
    const int m = static_cast<int>(u.size());
    VectorXd y(m + 1);
    y[0] = 1.0;
    y.tail(m) = u;
    return std::sqrt(std::max(0.0, y.dot(sigma * y)));
  }

  void derivatives(const Eigen::Ref<const VectorXd>& u, double& s, VectorXd& grad,
                   MatrixXd& hess) const {
    const int m = static_cast<int>(u.size());
    VectorXd y(m + 1);
    y[0] = 1.0;
    y.tail(m) = u;
    const VectorXd c = sigma * y;
    const double q = std::max(0.0, y.dot(c));
    s = std::sqrt(q);
    const VectorXd cu = c.tail(m);
    if (s > s_floor) {
      grad = cu / s;
      hess = (sigma_uu - (cu * cu.transpose()) / q) / s;
    } else {
      grad = VectorXd::Zero(m);
      hess = sigma_uu / std::max(s, s_floor);
    }
  }
};

struct SmoothEval {
  double value = 0.0;
  VectorXd grad;
  MatrixXd hess;
};

using SmoothFn = std::function<SmoothEval(const VectorXd&)>;

struct IpmResult {
  bool converged = false;
  VectorXd u;
  VectorXd lambda;
  int iterations = 0;
  double dual_residual = 0.0;
  double gap = 0.0;
  bool early_stopped = false;
};

// Log-barrier path-following for
//   min objective(u)  s.t.  constraints_i(u) <= 0,
// started from a strictly feasible u0.  Each round centers
//   F_t(u) = t*objective(u) - sum_i log(-constraints_i(u))
// by damped Newton, then grows t until both the duality gap p/t and the dual
// residual clear `tol`.  The centered barrier yields exact dual-feasible
// multipliers lambda_i = 1/(t * -f_i), so KKT quality falls out directly and
// the iterate can never jam against a curved constraint (the log term repels
// it).  `early_stop` can end the run once the incumbent satisfies an external
// goal (used by the phase-1 search).
IpmResult ipm_minimize(const SmoothFn& objective, const std::vector<SmoothFn>& constraints,
                       VectorXd u0, double tol,
                       const std::function<bool(const VectorXd&)>& early_stop = {}) {
  const int m = static_cast<int>(u0.size());
  const int p = static_cast<int>(constraints.size());
  if (p == 0) {
    throw SolverError("interior-point needs at least one constraint");
  }

  IpmResult res;
  res.u = std::move(u0);
  res.lambda = VectorXd::Zero(p);

  std::vector<SmoothEval> fs(p);
  SmoothEval obj;
  auto eval_point = [&](const VectorXd& u, std::vector<SmoothEval>& fv,
                        SmoothEval& o) {
    for (int i = 0; i < p; ++i) {
      fv[i] = constraints[i](u);
      if (!(fv[i].value < 0.0)) {
        return false;  // outside the barrier domain
      }
    }
    o = objective(u);
    return true;
  };
  if (!eval_point(res.u, fs, obj)) {
    throw SolverError("interior-point start is not strictly feasible");
  }

  // Work with F_t(u)/t = objective - sum_i log(-f_i)/t so function values stay
  // at the objective's scale for every t; otherwise late-round descents drop
  // below one ulp of t*objective and the line search cannot see them.  Its
  // gradient is exactly the dual residual at lambda_i = 1/(t * -f_i).
  auto barrier_of = [&](double t, const std::vector<SmoothEval>& fv,
                        const SmoothEval& o) {
    double logs = 0.0;
    for (int i = 0; i < p; ++i) {
      logs += std::log(-fv[i].value);
    }
    return o.value - logs / t;
  };
  VectorXd r_dual = VectorXd::Zero(m);
  auto refresh_duals = [&](double t) {
    r_dual = obj.grad;
    for (int i = 0; i < p; ++i) {
      res.lambda[i] = 1.0 / (t * -fs[i].value);
      r_dual += res.lambda[i] * fs[i].grad;
    }
    res.dual_residual = r_dual.norm();
    res.gap = p / t;
  };

  // Barrier phase: follow the central path until the gap is small enough for
  // the polish phase to take over.  Pushing the barrier much further is
  // counterproductive: lambda_i = 1/(t*-f_i) amplifies the absolute rounding
  // noise of an active f_i by t, which floors the achievable dual residual.
  std::vector<SmoothEval> fs_try(p);
  SmoothEval obj_try;
  const double gap_stop = std::max(tol, 1e-6);
  double t = 1.0;
  bool first_round = true;
  while (res.iterations < kBarrierMaxSteps) {
    // Early rounds only need accuracy at the scale of the current gap.
    const double inner_target = std::max(0.5 * tol, std::min(1.0, 0.1 * p / t));
    const int round_budget = first_round ? 120 : 25;
    int round_steps = 0;
    while (res.iterations < kBarrierMaxSteps && round_steps < round_budget) {
      if (early_stop && early_stop(res.u)) {
        res.early_stopped = true;
        return res;
      }
      refresh_duals(t);
      if (res.dual_residual <= inner_target) {
        break;
      }

      MatrixXd H = obj.hess;
      for (int i = 0; i < p; ++i) {
        const double fi = fs[i].value;
        H += fs[i].hess / (t * -fi);
        H += (fs[i].grad * fs[i].grad.transpose()) / (t * fi * fi);
      }
      H.diagonal().array() += 1e-12 * std::max(1.0, H.trace() / m);

      Eigen::LDLT<MatrixXd> ldlt(H);
      if (ldlt.info() != Eigen::Success) {
        throw SolverError("interior-point Newton factorization failed");
      }
      const VectorXd du = ldlt.solve(-r_dual);
      if (!du.allFinite()) {
        throw SolverError("interior-point Newton step is not finite");
      }
      const double slope = r_dual.dot(du);
      if (!(slope < 0.0)) {
        break;  // centered to numerical precision
      }

      const double base = barrier_of(t, fs, obj);
      // Allow ulp-level ties: near the center the predicted descent can fall
      // below the representable resolution of `base` while the step still
      // contracts the gradient, which is what the stopping test measures.
      const double tie = 4.0 * std::numeric_limits<double>::epsilon() *
                         std::max(1.0, std::abs(base));
      double step = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        const VectorXd u_try = res.u + step * du;
        if (eval_point(u_try, fs_try, obj_try)) {
          if (barrier_of(t, fs_try, obj_try) <= base + 0.25 * step * slope + tie) {
            res.u = u_try;
            fs.swap(fs_try);
            std::swap(obj, obj_try);
            accepted = true;
            break;
          }
        }
        step *= 0.5;
      }
      ++res.iterations;
      ++round_steps;
      if (!accepted) {
        break;  // no representable descent left at this t
      }
    }
    refresh_duals(t);
    if (res.gap <= gap_stop || t > 1e15) {
      break;
    }
    t *= kBarrierGrowth;
    first_round = false;
  }

  // Polish phase: primal-dual Newton with an independent lambda, driving the
  // complementarity target tau down a geometric ladder from the barrier's
  // level.  Free of the 1/f noise amplification, this reaches machine-level
  // KKT residuals; safeguards (fraction-to-boundary, feasibility check,
  // residual decrease) keep it from leaving the region the barrier reached.
  VectorXd lambda = res.lambda;
  auto comp_sum = [&](const VectorXd& l, const std::vector<SmoothEval>& fv) {
    double eta = 0.0;
    for (int i = 0; i < p; ++i) {
      eta += std::abs(l[i] * fv[i].value);
    }
    return eta;
  };
  auto kkt_norm = [&](const VectorXd& l, const std::vector<SmoothEval>& fv,
                      const SmoothEval& o, double tau) {
    VectorXd rd = o.grad;
    double sq = 0.0;
    for (int i = 0; i < p; ++i) {
      rd += l[i] * fv[i].grad;
      const double rc = -l[i] * fv[i].value - tau;
      sq += rc * rc;
    }
    return std::sqrt(sq + rd.squaredNorm());
  };

  const VectorXd u_snap = res.u;
  const VectorXd lambda_snap = lambda;
  refresh_duals(t);
  const double merit_snap = std::max(res.dual_residual, comp_sum(lambda, fs));

  const double tau_final = 0.02 * tol / p;
  double tau = std::clamp(comp_sum(lambda, fs) / p, tau_final, 1.0);
  while (res.iterations < kBarrierMaxSteps) {
    const bool last_stage = tau <= tau_final * (1.0 + 1e-9);
    const double stage_target =
        last_stage ? 0.25 * tol : 0.5 * std::sqrt(static_cast<double>(p)) * tau;
    for (int k = 0; k < 8 && res.iterations < kBarrierMaxSteps; ++k) {
      const double norm0 = kkt_norm(lambda, fs, obj, tau);
      if (norm0 <= stage_target) {
        break;
      }
      VectorXd rd = obj.grad;
      for (int i = 0; i < p; ++i) {
        rd += lambda[i] * fs[i].grad;
      }
      MatrixXd H = obj.hess;
      VectorXd rhs = -rd;
      for (int i = 0; i < p; ++i) {
        const double fi = fs[i].value;
        H += lambda[i] * fs[i].hess;
        H += (lambda[i] / -fi) * (fs[i].grad * fs[i].grad.transpose());
        const double rc = -lambda[i] * fi - tau;
        rhs -= fs[i].grad * (rc / fi);
      }
      H.diagonal().array() += 1e-14 * std::max(1.0, H.trace() / m);
      Eigen::LDLT<MatrixXd> ldlt(H);
      if (ldlt.info() != Eigen::Success) {
        break;
      }
      const VectorXd du = ldlt.solve(rhs);
      if (!du.allFinite()) {
        break;
      }
      VectorXd dlambda(p);
      for (int i = 0; i < p; ++i) {
        const double rc = -lambda[i] * fs[i].value - tau;
        dlambda[i] = (rc - lambda[i] * fs[i].grad.dot(du)) / fs[i].value;
      }
      double step = 1.0;
      for (int i = 0; i < p; ++i) {
        if (dlambda[i] < 0.0) {
          step = std::min(step, -0.99 * lambda[i] / dlambda[i]);
        }
      }
      bool accepted = false;
      for (int ls = 0; ls < 40; ++ls) {
        const VectorXd u_try = res.u + step * du;
        const VectorXd l_try = lambda + step * dlambda;
        if (eval_point(u_try, fs_try, obj_try)) {
          if (kkt_norm(l_try, fs_try, obj_try, tau) <= (1.0 - 0.1 * step) * norm0) {
            res.u = u_try;
            lambda = l_try;
            fs.swap(fs_try);
            std::swap(obj, obj_try);
            accepted = true;
            break;
          }
        }
        step *= 0.5;
      }
      ++res.iterations;
      if (!accepted) {
        break;
      }
    }
    if (last_stage) {
      break;
    }
    tau = std::max(tau_final, tau / 30.0);
  }

  // Judge the final iterate by the true KKT quantities; fall back to the
  // barrier point if the polish somehow made things worse.
  auto finish = [&](const VectorXd& l) {
    res.lambda = l;
    VectorXd rd = obj.grad;
    for (int i = 0; i < p; ++i) {
      rd += l[i] * fs[i].grad;
    }
    res.dual_residual = rd.norm();
    res.gap = comp_sum(l, fs);
  };
  finish(lambda);
  if (std::max(res.dual_residual, res.gap) > merit_snap) {
    res.u = u_snap;
    if (!eval_point(res.u, fs, obj)) {
      throw SolverError("interior-point lost feasibility");
    }
    finish(lambda_snap);
  }
  res.converged = res.dual_residual <= tol && res.gap <= tol;
  return res;
}

SmoothFn make_box_constraint(int index, double bound, bool upper) {
  return [index, bound, upper](const VectorXd& u) {
    SmoothEval e;
    const int m = static_cast<int>(u.size());
    e.grad = VectorXd::Zero(m);
    e.hess = MatrixXd::Zero(m, m);
    if (upper) {
      e.value = u[index] - bound;
      e.grad[index] = 1.0;
    } else {
      e.value = bound - u[index];
      e.grad[index] = -1.0;
    }
    return e;
  };
}

std::vector<SmoothFn> box_constraints(const Box& box) {
  std::vector<SmoothFn> out;
  const int m = static_cast<int>(box.lo.size());
  out.reserve(2 * m);
  for (int i = 0; i < m; ++i) {
    out.push_back(make_box_constraint(i, box.lo[i], false));
  }
  for (int i = 0; i < m; ++i) {
    out.push_back(make_box_constraint(i, box.hi[i], true));
  }
  return out;
}

// g(u) = beta * s(u) - (d + a.u); the filter's cone constraint.
SmoothFn make_cone_constraint(const ConeGeometry& geom, double beta, double offset,
                              const RowVectorXd& row) {
  return [&geom, beta, offset, row](const VectorXd& u) {
    SmoothEval e;
    double s = 0.0;
    VectorXd gs;
    MatrixXd hs;
    geom.derivatives(u, s, gs, hs);
    e.value = beta * s - offset - row.dot(u);
    e.grad = beta * gs - row.transpose();
    e.hess = beta * hs;
    return e;
  };
}

double cone_value(const ConeGeometry& geom, double beta, double offset,
                  const RowVectorXd& row, const VectorXd& u) {
  return beta * geom.value(u) - offset - row.dot(u);
}

// Minimize beta*s(u) - r.u (+ optional constant) over the box via the same
// interior-point core; strictly feasible start at the box center.
IpmResult minimize_over_box(const ConeGeometry& geom, double beta, const RowVectorXd& r,
                            const Box& box, double tol,
                            const std::function<bool(const VectorXd&)>& early_stop = {}) {
  SmoothFn objective = [&geom, beta, r](const VectorXd& u) {
    SmoothEval e;
    double s = 0.0;
    VectorXd gs;
    MatrixXd hs;
    geom.derivatives(u, s, gs, hs);
    e.value = beta * s - r.dot(u);
    e.grad = beta * gs - r.transpose();
    e.hess = beta * hs;
    return e;
  };
  VectorXd center = 0.5 * (box.lo + box.hi);
  return ipm_minimize(objective, box_constraints(box), std::move(center), tol,
                      early_stop);
}

// Unconstrained damped Newton descent on the cone violation g; used by the
// phase-1 search when no input box exists.  Stops early once g is comfortably
// negative, or reports the stalled minimum.
struct ViolationMin {
  VectorXd u;
  double value = 0.0;
  int iterations = 0;
};

ViolationMin minimize_violation_free(const ConeGeometry& geom, double beta,
                                     double offset, const RowVectorXd& row,
                                     VectorXd u0) {
  const int m = static_cast<int>(u0.size());
  SmoothFn g = make_cone_constraint(geom, beta, offset, row);
  ViolationMin out;
  out.u = std::move(u0);
  SmoothEval e = g(out.u);
  for (out.iterations = 0; out.iterations < kMaxIterations; ++out.iterations) {
    out.value = e.value;
    if (e.value < -1e-3) {
      return out;
    }
    MatrixXd H = e.hess;
    H.diagonal().array() += 1e-12 * std::max(1.0, H.trace() / m) + 1e-14;
    Eigen::LDLT<MatrixXd> ldlt(H);
    VectorXd du = -ldlt.solve(e.grad);
    if (ldlt.info() != Eigen::Success || !du.allFinite()) {
      du = -e.grad;
    }
    double step = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      SmoothEval e_try = g(out.u + step * du);
      if (e_try.value < e.value - 1e-14 * std::abs(e.value)) {
        out.u += step * du;
        e = e_try;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) {
      break;
    }
  }
  out.value = e.value;
  return out;
}

double filter_objective_value(const ConeProblem& p, const VectorXd& u) {
  return (u - p.u_ref).squaredNorm();
}

void maybe_dump(const ConeProblem& p) {
  if (p.debug_dump_path) {
    dump_cone_problem(p, *p.debug_dump_path);
  }
}

}  // namespace

void Box::validate(int m) const {
  if (lo.size() != m || hi.size() != m) {
    throw UsageError("Box: dimension mismatch");
  }
  if (((hi - lo).array() <= 0.0).any()) {
    throw UsageError("Box: lo must be strictly below hi");
  }
}

bool Box::contains(const Eigen::Ref<const VectorXd>& u, double tol) const {
  return (u.array() >= lo.array() - tol).all() && (u.array() <= hi.array() + tol).all();
}

VectorXd Box::clamp(const Eigen::Ref<const VectorXd>& u) const {
  return u.cwiseMax(lo).cwiseMin(hi);
}

void ConeProblem::validate() const {
  const int m = control_dim();
  if (m < 1) {
    throw UsageError("ConeProblem: empty control");
  }
  if (cone_scale < 0.0) {
    throw UsageError("ConeProblem: cone_scale must be nonnegative");
  }
  if (cone_matrix.rows() != m + 1 || cone_matrix.cols() != m + 1) {
    throw UsageError("ConeProblem: cone_matrix must be (m+1)x(m+1)");
  }
  if (affine_row.size() != m) {
    throw UsageError("ConeProblem: affine_row dimension mismatch");
  }
  if (bounds) {
    bounds->validate(m);
  }
  if (linear_objective && linear_objective->size() != m) {
    throw UsageError("ConeProblem: linear_objective dimension mismatch");
  }
}

double cone_violation(const ConeProblem& p, const Eigen::Ref<const VectorXd>& u) {
  ConeGeometry geom(p.cone_matrix);
  return cone_value(geom, p.cone_scale, p.affine_offset, p.affine_row, u);
}

SolveOutcome solve_filter_problem(const ConeProblem& p, double tol) {
  p.validate();
  if (!(tol > 0.0)) {
    throw UsageError("solve_filter_problem: tol must be positive");
  }
  maybe_dump(p);
  const int m = p.control_dim();
  ConeGeometry geom(p.cone_matrix);
  auto g_of = [&](const VectorXd& u) {
    return cone_value(geom, p.cone_scale, p.affine_offset, p.affine_row, u);
  };

  SolveOutcome out;
  out.multipliers = VectorXd::Zero(p.bounds ? 1 + 2 * m : 1);

  // The reference itself is the unconstrained optimum; feasible means done.
  if ((!p.bounds || p.bounds->contains(p.u_ref)) && g_of(p.u_ref) <= 0.0) {
    out.status = SolveStatus::Optimal;
    out.u = p.u_ref;
    out.objective = 0.0;
    out.primal_residual = std::max(0.0, g_of(p.u_ref));
    return out;
  }

  // Phase 1: find a strictly feasible interior point.
  VectorXd u0;
  bool have_interior = false;
  double best_violation = std::numeric_limits<double>::infinity();
  VectorXd best_u = p.u_ref;
  int phase1_iters = 0;

  auto consider = [&](const VectorXd& cand) {
    if (have_interior) {
      return;
    }
    if (p.bounds && !p.bounds->contains(cand)) {
      return;
    }
    if (p.bounds) {
      // Interior points must clear the box strictly for the barrier.
      const VectorXd margin = 1e-9 * (p.bounds->hi - p.bounds->lo);
      if (((cand - p.bounds->lo).array() < margin.array()).any() ||
          ((p.bounds->hi - cand).array() < margin.array()).any()) {
        return;
      }
    }
    const double g = g_of(cand);
    if (g < best_violation) {
      best_violation = g;
      best_u = cand;
    }
    if (g < -1e-11) {
      u0 = cand;
      have_interior = true;
    }
  };

  consider(p.u_ref);
  consider(VectorXd::Zero(m));
  if (p.bounds) {
    consider((0.5 * (p.bounds->lo + p.bounds->hi)).eval());
  }
  const VectorXd dir = p.affine_row.transpose();
  if (dir.norm() > 0.0) {
    for (double alpha = 1e-2; alpha <= 1e6 && !have_interior; alpha *= 10.0) {
      VectorXd cand = alpha * dir;
      if (p.bounds) {
        cand = p.bounds->clamp(cand);
        cand = cand.cwiseMax(p.bounds->lo + 1e-6 * (p.bounds->hi - p.bounds->lo))
                   .cwiseMin(p.bounds->hi - 1e-6 * (p.bounds->hi - p.bounds->lo));
      }
      consider(cand);
    }
  }

  if (!have_interior) {
    if (p.bounds) {
      const IpmResult phase1 = minimize_over_box(
          geom, p.cone_scale,
          p.affine_row, *p.bounds, tol,
          [&](const VectorXd& u) { return g_of(u) < -1e-3; });
      phase1_iters = phase1.iterations;
      const double g1 = g_of(phase1.u);
      if (g1 < best_violation) {
        best_violation = g1;
        best_u = phase1.u;
      }
      if (g1 < -1e-11) {
        u0 = phase1.u;
        have_interior = true;
      }
    } else {
      const ViolationMin vm = minimize_violation_free(
          geom, p.cone_scale, p.affine_offset, p.affine_row, best_u);
      phase1_iters = vm.iterations;
      if (vm.value < best_violation) {
        best_violation = vm.value;
        best_u = vm.u;
      }
      if (vm.value < -1e-11) {
        u0 = vm.u;
        have_interior = true;
      }
    }
  }

  if (!have_interior) {
    out.status = SolveStatus::Infeasible;
    out.u = best_u;
    out.objective = filter_objective_value(p, best_u);
    out.iterations = phase1_iters;
    out.primal_residual = std::max(0.0, best_violation);
    (void)kInfeasibleViolation;
    return out;
  }

  // Phase 2: track the reference subject to cone (+ box).
  SmoothFn objective = [&p, m](const VectorXd& u) {
    SmoothEval e;
    e.value = (u - p.u_ref).squaredNorm();
    e.grad = 2.0 * (u - p.u_ref);
    e.hess = 2.0 * MatrixXd::Identity(m, m);
    return e;
  };
  std::vector<SmoothFn> constraints;
  constraints.push_back(
      make_cone_constraint(geom, p.cone_scale, p.affine_offset, p.affine_row));
  if (p.bounds) {
    auto box = box_constraints(*p.bounds);
    constraints.insert(constraints.end(), box.begin(), box.end());
  }

  IpmResult ipm = ipm_minimize(objective, constraints, u0, tol);
  out.iterations = phase1_iters + ipm.iterations;
  out.u = p.bounds ? p.bounds->clamp(ipm.u) : ipm.u;
  out.objective = filter_objective_value(p, out.u);
  out.primal_residual = std::max(0.0, g_of(out.u));
  out.dual_residual = ipm.dual_residual;
  out.multipliers = ipm.lambda;
  if (!ipm.converged || !out.u.allFinite()) {
    out.status = SolveStatus::NumericalFailure;
    return out;
  }
  out.status = SolveStatus::Optimal;
  return out;
}

SolveOutcome solve_backup_problem(const ConeProblem& p, double tol) {
  p.validate();
  if (!(tol > 0.0)) {
    throw UsageError("solve_backup_problem: tol must be positive");
  }
  if (!p.bounds) {
    throw UsageError("solve_backup_problem: bounds are required");
  }
  maybe_dump(p);
  const RowVectorXd r = p.linear_objective ? *p.linear_objective : p.affine_row;
  ConeGeometry geom(p.cone_matrix);

  IpmResult ipm = minimize_over_box(geom, p.cone_scale, r, *p.bounds, tol);
  SolveOutcome out;
  out.iterations = ipm.iterations;
  out.u = p.bounds->clamp(ipm.u);
  out.objective = p.cone_scale * geom.value(out.u) - r.dot(out.u);
  out.dual_residual = ipm.dual_residual;
  out.multipliers = ipm.lambda;
  out.primal_residual = 0.0;
  out.status = (ipm.converged && out.u.allFinite()) ? SolveStatus::Optimal
                                                    : SolveStatus::NumericalFailure;
  return out;
}

double kkt_residual(const ConeProblem& p, const SolveOutcome& outcome,
                    bool backup_objective) {
  p.validate();
  const int m = p.control_dim();
  const VectorXd& u = outcome.u;
  ConeGeometry geom(p.cone_matrix);

  std::vector<SmoothEval> cons;
  if (!backup_objective) {
    cons.push_back(
        make_cone_constraint(geom, p.cone_scale, p.affine_offset, p.affine_row)(u));
  }
  if (p.bounds) {
    for (const auto& fn : box_constraints(*p.bounds)) {
      cons.push_back(fn(u));
    }
  }
  if (outcome.multipliers.size() != static_cast<Eigen::Index>(cons.size())) {
    throw UsageError("kkt_residual: multiplier layout mismatch");
  }

  VectorXd grad;
  if (backup_objective) {
    const RowVectorXd r = p.linear_objective ? *p.linear_objective : p.affine_row;
    double s = 0.0;
    VectorXd gs;
    MatrixXd hs;
    geom.derivatives(u, s, gs, hs);
    grad = p.cone_scale * gs - r.transpose();
  } else {
    grad = 2.0 * (u - p.u_ref);
  }

  double worst = 0.0;
  for (std::size_t i = 0; i < cons.size(); ++i) {
    const double li = outcome.multipliers[static_cast<Eigen::Index>(i)];
    worst = std::max(worst, -li);                        // dual feasibility
    worst = std::max(worst, cons[i].value);              // primal feasibility
    worst = std::max(worst, std::abs(li * cons[i].value));  // complementarity
    grad += li * cons[i].grad;
  }
  worst = std::max(worst, grad.cwiseAbs().maxCoeff());   // stationarity
  return worst;
}

void dump_cone_problem(const ConeProblem& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw UsageError("dump_cone_problem: cannot open " + path);
  }
  const int m = p.control_dim();
  auto write_vec = [&out](const char* name, const Eigen::Ref<const VectorXd>& v) {
    out << name;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), " %.17g", v[i]);
      out << buf;
    }
    out << "\n";
  };
  out << "cone_problem 1\n";
  out << "m " << m << "\n";
  write_vec("u_ref", p.u_ref);
  write_vec("cone_scale", VectorXd::Constant(1, p.cone_scale));
  for (int i = 0; i < m + 1; ++i) {
    write_vec("cone_row", p.cone_matrix.row(i).transpose());
  }
  write_vec("affine_offset", VectorXd::Constant(1, p.affine_offset));
  write_vec("affine_row", p.affine_row.transpose());
  out << "has_bounds " << (p.bounds ? 1 : 0) << "\n";
  if (p.bounds) {
    write_vec("lo", p.bounds->lo);
    write_vec("hi", p.bounds->hi);
  }
  out << "has_linear_objective " << (p.linear_objective ? 1 : 0) << "\n";
  if (p.linear_objective) {
    write_vec("linear_objective", p.linear_objective->transpose());
  }
}

ConeProblem load_cone_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw UsageError("load_cone_problem: cannot open " + path);
  }
  std::string key;
  int version = 0;
  in >> key >> version;
  if (key != "cone_problem" || version != 1) {
    throw UsageError("load_cone_problem: bad header");
  }
  int m = 0;
  in >> key >> m;
  if (key != "m" || m < 1) {
    throw UsageError("load_cone_problem: bad dimension");
  }
  auto read_vec = [&in](const char* name, Eigen::Index len) {
    std::string k;
    in >> k;
    if (k != name) {
      throw UsageError(std::string("load_cone_problem: expected ") + name);
    }
    VectorXd v(len);
    for (Eigen::Index i = 0; i < len; ++i) {
      in >> v[i];
    }
    return v;
  };
  ConeProblem p;
  p.u_ref = read_vec("u_ref", m);
  p.cone_scale = read_vec("cone_scale", 1)[0];
  p.cone_matrix.resize(m + 1, m + 1);
  for (int i = 0; i < m + 1; ++i) {
    p.cone_matrix.row(i) = read_vec("cone_row", m + 1).transpose();
  }
  p.affine_offset = read_vec("affine_offset", 1)[0];
  p.affine_row = read_vec("affine_row", m).transpose();
  int flag = 0;
  in >> key >> flag;
  if (key != "has_bounds") {
    throw UsageError("load_cone_problem: expected has_bounds");
  }
  if (flag) {
    Box b;
    b.lo = read_vec("lo", m);
    b.hi = read_vec("hi", m);
    p.bounds = std::move(b);
  }
  in >> key >> flag;
  if (key != "has_linear_objective") {
    throw UsageError("load_cone_problem: expected has_linear_objective");
  }
  if (flag) {
    p.linear_objective = read_vec("linear_objective", m).transpose();
  }
  if (!in) {
    throw UsageError("load_cone_problem: truncated file");
  }
  return p;
}

}  // namespace gpcert
