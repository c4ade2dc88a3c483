#include "gpcert/bench/simulate.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace gpcert::bench {

double Trajectory::min_certificate() const {
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& step : steps) {
    lowest = std::min(lowest, step.certificate_value);
  }
  return lowest;
}

void Trajectory::save_csv(const std::string& path, const Certificate* cert) const {
  std::ofstream out(path);
  if (!out) {
    throw UsageError("Trajectory::save_csv: cannot open " + path);
  }
  const int n = steps.empty() ? 0 : static_cast<int>(steps.front().x.size());
  const int m = steps.empty() ? 0 : static_cast<int>(steps.front().u.size());
  out << "t";
  for (int i = 0; i < n; ++i) {
    out << ",x" << i;
  }
  for (int i = 0; i < m; ++i) {
    out << ",u" << i;
  }
  out << ",C,V,status,residual,selected,solve_ms\n";
  const bool lyapunov = cert != nullptr && cert->kind == CertificateKind::NegatedLyapunov;
  char buf[40];
  auto emit = [&out, &buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  for (const auto& step : steps) {
    emit(step.t);
    for (int i = 0; i < n; ++i) {
      out << ",";
      emit(step.x[i]);
    }
    for (int i = 0; i < m; ++i) {
      out << ",";
      emit(step.u[i]);
    }
    out << ",";
    emit(step.certificate_value);
    out << ",";
    emit(lyapunov ? -step.certificate_value
                  : std::numeric_limits<double>::quiet_NaN());
    out << "," << to_string(step.status) << ",";
    emit(step.constraint_residual);
    out << "," << step.selected_count << ",";
    emit(step.solve_ms);
    out << "\n";
  }
  if (!out) {
    throw UsageError("Trajectory::save_csv: write failed for " + path);
  }
}

VectorXd rk4_step(const ControlAffineDynamics& dyn, const Eigen::Ref<const VectorXd>& x,
                  const Eigen::Ref<const VectorXd>& u, double dt) {
  const VectorXd k1 = dyn.rhs(x, u);
  const VectorXd k2 = dyn.rhs(x + 0.5 * dt * k1, u);
  const VectorXd k3 = dyn.rhs(x + 0.5 * dt * k2, u);
  const VectorXd k4 = dyn.rhs(x + dt * k3, u);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Trajectory simulate(const TruePlant& plant, ControllerSession& session,
                    const Eigen::Ref<const VectorXd>& x0, const Certificate* cert,
                    const SimulateOptions& options) {
  if (!(options.integrator_dt > 0.0) || options.control_dt < options.integrator_dt) {
    throw UsageError("simulate: need control_dt >= integrator_dt > 0");
  }
  Trajectory traj;
  VectorXd x = x0;
  const int control_steps =
      static_cast<int>(std::llround(options.horizon / options.control_dt));
  const int substeps =
      std::max(1, static_cast<int>(std::llround(options.control_dt / options.integrator_dt)));
  const double h = options.control_dt / substeps;

  for (int step = 0; step < control_steps; ++step) {
    const double t = step * options.control_dt;
    FilterResult result = session.step(x);

    TrajectoryStep row;
    row.t = t;
    row.x = x;
    row.u = result.u;
    row.status = result.status;
    row.constraint_residual = result.constraint_residual;
    row.selected_count = result.selected_count;
    row.solve_ms = result.solve_ms;
    row.certificate_value = cert ? cert->value(x) : 0.0;
    traj.steps.push_back(std::move(row));

    for (int sub = 0; sub < substeps; ++sub) {
      x = rk4_step(plant, x, result.u, h);
    }
    if (!x.allFinite() || x.norm() > options.divergence_norm) {
      traj.diverged = true;
      break;
    }
  }
  traj.final_state = x;
  return traj;
}

}  // namespace gpcert::bench
