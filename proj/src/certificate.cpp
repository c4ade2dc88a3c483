#include "gpcert/certificate.hpp"

namespace gpcert {

std::function<double(double)> linear_comparison(double rate) {
  if (!(rate > 0.0)) {
    throw UsageError("linear_comparison: rate must be positive");
  }
  return [rate](double s) { return rate * s; };
}

LieDerivatives lie_derivatives(const Certificate& cert, const ControlAffineDynamics& dyn,
                               const Eigen::Ref<const VectorXd>& x) {
  const RowVectorXd grad = cert.gradient(x);
  LieDerivatives out;
  out.lf = grad.dot(dyn.drift(x));
  out.lg = grad * dyn.input_gain(x);
  return out;
}

}  // namespace gpcert
