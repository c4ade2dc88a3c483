#include "gpcert/bench/polysys.hpp"

#include <random>

#include "gpcert/bench/riccati.hpp"
#include "gpcert/bench/simulate.hpp"
#include "gpcert/filter.hpp"

namespace gpcert::bench {

VectorXd polysys_monomials(const Eigen::Ref<const VectorXd>& x) {
  if (x.size() != 2) {
    throw UsageError("polysys_monomials: state must be 2-dimensional");
  }
  const double x1 = x[0];
  const double x2 = x[1];
  VectorXd v(9);
  v << x1, x2, x1 * x1, x1 * x2, x2 * x2, x1 * x1 * x1, x1 * x1 * x2, x1 * x2 * x2,
      x2 * x2 * x2;
  return v;
}

VectorXd polysys_rhs(const PolysysCoeffs& c, const Eigen::Ref<const VectorXd>& x,
                     const Eigen::Ref<const VectorXd>& u) {
  if (u.size() != 2) {
    throw UsageError("polysys_rhs: control must be 2-dimensional");
  }
  const VectorXd v = polysys_monomials(x);
  VectorXd dx(2);
  dx[0] = c.f1.dot(v) + (1.0 + c.g11.dot(v)) * u[0] + c.g12.dot(v) * u[1];
  dx[1] = c.f2.dot(v) + c.g21.dot(v) * u[0] + (1.0 + c.g22.dot(v)) * u[1];
  return dx;
}

ControlAffineDynamics polysys_dynamics(const PolysysCoeffs& c) {
  ControlAffineDynamics dyn;
  dyn.state_dim = 2;
  dyn.control_dim = 2;
  dyn.drift = [c](const VectorXd& x) {
    const VectorXd v = polysys_monomials(x);
    VectorXd f(2);
    f << c.f1.dot(v), c.f2.dot(v);
    return f;
  };
  dyn.input_gain = [c](const VectorXd& x) {
    const VectorXd v = polysys_monomials(x);
    MatrixXd g(2, 2);
    g << 1.0 + c.g11.dot(v), c.g12.dot(v), c.g21.dot(v), 1.0 + c.g22.dot(v);
    return g;
  };
  return dyn;
}

PolysysPair make_polysys(std::uint64_t seed, double perturbation_scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  PolysysPair pair;
  pair.nominal.seed = seed;
  pair.nominal.perturbation_scale = 0.0;
  pair.truth.seed = seed;
  pair.truth.perturbation_scale = perturbation_scale;

  VectorXd* nominal_vecs[6] = {&pair.nominal.f1,  &pair.nominal.f2,  &pair.nominal.g11,
                               &pair.nominal.g12, &pair.nominal.g21, &pair.nominal.g22};
  for (VectorXd* vec : nominal_vecs) {
    for (int k = 0; k < 9; ++k) {
      (*vec)[k] = 0.5 * unit(rng);
    }
  }

  VectorXd* true_vecs[6] = {&pair.truth.f1,  &pair.truth.f2,  &pair.truth.g11,
                            &pair.truth.g12, &pair.truth.g21, &pair.truth.g22};
  for (int idx = 0; idx < 6; ++idx) {
    for (int k = 0; k < 9; ++k) {
      double delta = perturbation_scale * unit(rng);
      // The linear drift coefficients define the certified linearization and
      // stay exact between the true and nominal plants.
      if (idx < 2 && k < 2) {
        delta = 0.0;
      }
      (*true_vecs[idx])[k] = (*nominal_vecs[idx])[k] + delta;
    }
  }
  return pair;
}

Certificate clf_from_are(const PolysysCoeffs& nominal, double lambda) {
  MatrixXd A(2, 2);
  A << nominal.f1[0], nominal.f1[1], nominal.f2[0], nominal.f2[1];
  const MatrixXd B = MatrixXd::Identity(2, 2);
  const MatrixXd P = solve_care(A, B, MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2));

  Certificate cert;
  cert.kind = CertificateKind::NegatedLyapunov;
  cert.value = [P](const VectorXd& x) { return -x.dot(P * x); };
  cert.gradient = [P](const VectorXd& x) -> RowVectorXd {
    return (-2.0 * P * x).transpose();
  };
  cert.comparison = linear_comparison(lambda);
  return cert;
}

double measure_delta(const TruePlant& truth, const NominalModel& nominal,
                     const Certificate& cert, const Eigen::Ref<const VectorXd>& x,
                     const Eigen::Ref<const VectorXd>& u, double dt) {
  if (!(dt > 0.0)) {
    throw UsageError("measure_delta: dt must be positive");
  }
  // Substep so large sampling intervals keep integrator error negligible
  // next to the O(dt) differencing error.
  const int substeps = std::max(1, static_cast<int>(std::ceil(dt / 1e-3)));
  const double h = dt / substeps;
  VectorXd xt = x;
  for (int k = 0; k < substeps; ++k) {
    xt = rk4_step(truth, xt, u, h);
  }
  const double rate = (cert.value(xt) - cert.value(x)) / dt;
  const RowVectorXd grad = cert.gradient(x);
  const double nominal_rate =
      grad.dot(nominal.drift(x)) + (grad * nominal.input_gain(x)).dot(u);
  return rate - nominal_rate;
}

double exact_delta(const TruePlant& truth, const NominalModel& nominal,
                   const Certificate& cert, const Eigen::Ref<const VectorXd>& x,
                   const Eigen::Ref<const VectorXd>& u) {
  const RowVectorXd grad = cert.gradient(x);
  const VectorXd df = truth.drift(x) - nominal.drift(x);
  const MatrixXd dg = truth.input_gain(x) - nominal.input_gain(x);
  return grad.dot(df) + (grad * dg).dot(u);
}

Dataset build_polysys_dataset(const PolysysPair& pair, const Certificate& cert,
                              const GridSpec& spec) {
  if (spec.coarse_grid.size() != 2 || spec.coarse_grid[0] < 1 || spec.coarse_grid[1] < 1) {
    throw UsageError("build_polysys_dataset: bad coarse grid");
  }
  const TruePlant truth = polysys_dynamics(pair.truth);
  const NominalModel nominal = polysys_dynamics(pair.nominal);

  Dataset data(2, 2);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  const int gx = spec.coarse_grid[0];
  const int gy = spec.coarse_grid[1];
  for (int ix = 0; ix < gx; ++ix) {
    for (int iy = 0; iy < gy; ++iy) {
      VectorXd x(2);
      x[0] = spec.box_lo[0] +
             (gx == 1 ? 0.5 : static_cast<double>(ix) / (gx - 1)) *
                 (spec.box_hi[0] - spec.box_lo[0]);
      x[1] = spec.box_lo[1] +
             (gy == 1 ? 0.5 : static_cast<double>(iy) / (gy - 1)) *
                 (spec.box_hi[1] - spec.box_lo[1]);
      VectorXd u(2);
      u << spec.control_amplitude * unit(rng), spec.control_amplitude * unit(rng);
      const double z = measure_delta(truth, nominal, cert, x, u, spec.measurement_dt);
      data.append(x, u, z, "grid");
    }
  }

  int cluster_id = 0;
  for (const auto& cluster : spec.clusters) {
    if (cluster.per_axis_count.size() != 4) {
      throw UsageError("build_polysys_dataset: cluster axes must be (x1,x2,u1,u2)");
    }
    std::vector<std::vector<double>> axes(4);
    const double centers[4] = {cluster.x_center[0], cluster.x_center[1],
                               cluster.u_center[0], cluster.u_center[1]};
    for (int axis = 0; axis < 4; ++axis) {
      const int count = cluster.per_axis_count[axis];
      if (count < 1) {
        throw UsageError("build_polysys_dataset: cluster counts must be positive");
      }
      for (int k = 0; k < count; ++k) {
        const double offset =
            (count == 1) ? 0.0
                         : -cluster.half_width +
                               2.0 * cluster.half_width * k / (count - 1);
        axes[axis].push_back(centers[axis] + offset);
      }
    }
    const std::string tag = "cluster" + std::to_string(cluster_id++);
    for (double x1 : axes[0]) {
      for (double x2 : axes[1]) {
        for (double u1 : axes[2]) {
          for (double u2 : axes[3]) {
            VectorXd x(2);
            x << x1, x2;
            VectorXd u(2);
            u << u1, u2;
            const double z = measure_delta(truth, nominal, cert, x, u, spec.measurement_dt);
            data.append(x, u, z, tag);
          }
        }
      }
    }
  }
  return data;
}

std::vector<ClusterSpec> default_polysys_clusters(const PolysysPair& pair,
                                                  const Certificate& cert) {
  CertificateProblem prob;
  prob.certificate = cert;
  prob.nominal = polysys_dynamics(pair.nominal);
  prob.u_ref = [](const VectorXd&) { return VectorXd::Zero(2); };

  NominalQpSession session(prob);
  SimulateOptions options;
  options.horizon = 2.5;
  options.control_dt = 0.01;
  options.integrator_dt = 1e-3;
  VectorXd x0(2);
  x0 << -0.4, 0.6;
  const Trajectory traj = simulate(polysys_dynamics(pair.truth), session, x0, &cert, options);

  // Five centers spread along the closed-loop path cover the region the
  // filters actually visit.
  std::vector<ClusterSpec> clusters;
  const int steps = static_cast<int>(traj.steps.size());
  for (int c = 0; c < 5; ++c) {
    const int at = std::min(steps - 1, (c * steps) / 5);
    ClusterSpec spec;
    spec.x_center = traj.steps[at].x;
    spec.u_center = traj.steps[at].u;
    clusters.push_back(std::move(spec));
  }
  return clusters;
}

Dataset synthetic_polysys_dataset(const PolysysPair& pair, const Certificate& cert,
                                  int count, std::uint64_t seed) {
  if (count < 1) {
    throw UsageError("synthetic_polysys_dataset: count must be positive");
  }
  const TruePlant truth = polysys_dynamics(pair.truth);
  const NominalModel nominal = polysys_dynamics(pair.nominal);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  Dataset data(2, 2);
  for (int j = 0; j < count; ++j) {
    VectorXd x(2);
    x << 2.0 * unit(rng), 2.0 * unit(rng);
    VectorXd u(2);
    u << 2.0 * unit(rng), 2.0 * unit(rng);
    const double z = measure_delta(truth, nominal, cert, x, u, 1e-3);
    data.append(x, u, z);
  }
  return data;
}

}  // namespace gpcert::bench
