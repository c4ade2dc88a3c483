#pragma once

#include <string>
#include <vector>

#include "gpcert/certificate.hpp"
#include "gpcert/filter.hpp"

namespace gpcert::bench {

struct TrajectoryStep {
  double t = 0.0;
  VectorXd x;
  VectorXd u;
  FilterStatus status = FilterStatus::PassedThrough;
  double constraint_residual = 0.0;
  int selected_count = 0;
  double solve_ms = 0.0;
  double certificate_value = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  VectorXd final_state;
  bool diverged = false;

  double min_certificate() const;
  // CSV with one row per control step; V is the negated certificate for
  // Lyapunov-kind runs and NaN otherwise.
  void save_csv(const std::string& path, const Certificate* cert = nullptr) const;
};

struct SimulateOptions {
  double horizon = 2.5;
  double control_dt = 0.01;
  double integrator_dt = 1e-3;
  double divergence_norm = 1e3;
};

VectorXd rk4_step(const ControlAffineDynamics& dyn, const Eigen::Ref<const VectorXd>& x,
                  const Eigen::Ref<const VectorXd>& u, double dt);

// Zero-order-hold closed loop: the session picks u at each control step, the
// plant integrates with RK4 substeps of integrator_dt.
Trajectory simulate(const TruePlant& plant, ControllerSession& session,
                    const Eigen::Ref<const VectorXd>& x0, const Certificate* cert,
                    const SimulateOptions& options);

}  // namespace gpcert::bench
