#pragma once

#include <functional>
#include <optional>

#include "gpcert/common.hpp"
#include "gpcert/gp.hpp"
#include "gpcert/socp.hpp"

namespace gpcert {

// Control-affine vector field pair dx/dt = drift(x) + input_gain(x) u.
struct ControlAffineDynamics {
  int state_dim = 0;
  int control_dim = 0;
  std::function<VectorXd(const VectorXd&)> drift;
  std::function<MatrixXd(const VectorXd&)> input_gain;

  VectorXd rhs(const Eigen::Ref<const VectorXd>& x,
               const Eigen::Ref<const VectorXd>& u) const {
    return drift(x) + input_gain(x) * u;
  }
};

using NominalModel = ControlAffineDynamics;
using TruePlant = ControlAffineDynamics;

enum class CertificateKind { Barrier, NegatedLyapunov };

// Scalar certificate C with the condition dC/dt + comparison(C(x)) >= 0.
// Lyapunov functions are stored negated (C = -V, comparison(s) = lambda*s)
// so barriers and Lyapunov certificates share one inequality direction.
struct Certificate {
  CertificateKind kind = CertificateKind::Barrier;
  std::function<double(const VectorXd&)> value;
  std::function<RowVectorXd(const VectorXd&)> gradient;
  std::function<double(double)> comparison;
};

std::function<double(double)> linear_comparison(double rate);

struct LieDerivatives {
  double lf = 0.0;
  RowVectorXd lg;
};

LieDerivatives lie_derivatives(const Certificate& cert, const ControlAffineDynamics& dyn,
                               const Eigen::Ref<const VectorXd>& x);

// Everything a filtering controller needs besides the plant: the certificate,
// the nominal model it differentiates, the reference to stay close to, input
// bounds, and the confidence-scale settings for the learned variants.
struct CertificateProblem {
  Certificate certificate;
  NominalModel nominal;
  std::function<VectorXd(const VectorXd&)> u_ref;
  std::optional<Box> input_bounds;
  ErrorBoundConfig error_bound;
  double beta = 1.0;
};

}  // namespace gpcert
