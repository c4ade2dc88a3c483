#pragma once

#include <cstdint>
#include <vector>

#include "gpcert/certificate.hpp"
#include "gpcert/dataset.hpp"

namespace gpcert::bench {

// Planar polynomial system with cubic monomial coefficients:
//
//   dx/dt = [f1'v; f2'v] + [[1 + g11'v, g12'v], [g21'v, 1 + g22'v]] u,
//   v = [x1, x2, x1^2, x1 x2, x2^2, x1^3, x1^2 x2, x1 x2^2, x2^3].
//
// The input gain is identity at the origin, so the linearization is always
// controllable and the Riccati certificate exists for every draw.
struct PolysysCoeffs {
  VectorXd f1 = VectorXd::Zero(9);
  VectorXd f2 = VectorXd::Zero(9);
  VectorXd g11 = VectorXd::Zero(9);
  VectorXd g12 = VectorXd::Zero(9);
  VectorXd g21 = VectorXd::Zero(9);
  VectorXd g22 = VectorXd::Zero(9);
  std::uint64_t seed = 0;
  double perturbation_scale = 0.0;
};

VectorXd polysys_monomials(const Eigen::Ref<const VectorXd>& x);
VectorXd polysys_rhs(const PolysysCoeffs& c, const Eigen::Ref<const VectorXd>& x,
                     const Eigen::Ref<const VectorXd>& u);
ControlAffineDynamics polysys_dynamics(const PolysysCoeffs& c);

struct PolysysPair {
  PolysysCoeffs truth;
  PolysysCoeffs nominal;
};

// Nominal coefficients i.i.d. uniform on [-0.5, 0.5]; the true plant adds
// i.i.d. uniform perturbations of the given scale to every entry except the
// linear coefficients of f1 and f2, which stay exact.
PolysysPair make_polysys(std::uint64_t seed, double perturbation_scale = 0.4);

// Negated quadratic Lyapunov certificate -x'Px from the Riccati equation of
// the nominal linearization at the origin (A = df/dx|_0, B = I, Q = R = I),
// with linear comparison rate `lambda`.
Certificate clf_from_are(const PolysysCoeffs& nominal, double lambda = 1.0);

// Finite-difference certificate-rate residual: roll the true plant from x
// under constant u for dt, difference C, subtract the nominal rate.
double measure_delta(const TruePlant& truth, const NominalModel& nominal,
                     const Certificate& cert, const Eigen::Ref<const VectorXd>& x,
                     const Eigen::Ref<const VectorXd>& u, double dt);

// Exact model-mismatch rate grad(C) * ((f - f_nom) + (g - g_nom) u); the
// quantity measure_delta approaches as dt -> 0.
double exact_delta(const TruePlant& truth, const NominalModel& nominal,
                   const Certificate& cert, const Eigen::Ref<const VectorXd>& x,
                   const Eigen::Ref<const VectorXd>& u);

struct ClusterSpec {
  VectorXd x_center;
  VectorXd u_center;
  double half_width = 0.1;
  std::vector<int> per_axis_count = {2, 2, 2, 2};
};

struct GridSpec {
  VectorXd box_lo = VectorXd::Constant(2, -2.0);
  VectorXd box_hi = VectorXd::Constant(2, 2.0);
  std::vector<int> coarse_grid = {10, 10};
  double control_amplitude = 2.0;
  std::vector<ClusterSpec> clusters;
  double measurement_dt = 1e-3;
  std::uint64_t seed = 0;
};

// Coarse-grid vertices with random controls plus dense clusters; outputs are
// measured residuals.  Points carry "grid" / "cluster<i>" tags.
Dataset build_polysys_dataset(const PolysysPair& pair, const Certificate& cert,
                              const GridSpec& spec);

// Five cluster centers spaced along a nominal-QP closed-loop trajectory,
// reproducing the densely-sampled operating region of the default dataset.
std::vector<ClusterSpec> default_polysys_clusters(const PolysysPair& pair,
                                                  const Certificate& cert);

// Synthetic dataset of the same shape at arbitrary N for timing studies.
Dataset synthetic_polysys_dataset(const PolysysPair& pair, const Certificate& cert,
                                  int count, std::uint64_t seed);

}  // namespace gpcert::bench
