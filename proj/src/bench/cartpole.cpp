#include "gpcert/bench/cartpole.hpp"

#include <cmath>
#include <numbers>

#include "gpcert/bench/riccati.hpp"

namespace gpcert::bench {

namespace {

void validate(const CartPoleParams& p) {
  if (!(p.cart_mass > 0.0 && p.pole_mass > 0.0 && p.pole_length > 0.0 &&
        p.gravity > 0.0 && p.force_limit > 0.0)) {
    throw UsageError("CartPoleParams: all parameters must be positive");
  }
}

// Accelerations of the point-mass cart-pole with theta from upright:
//   sdd = [u + m sin(th) (l thd^2 - g cos(th))] / (M + m sin^2(th))
//   thdd = (g sin(th) - sdd cos(th)) / l
void accelerations(const CartPoleParams& p, double theta, double theta_dot, double force,
                   double& s_dd, double& theta_dd) {
  const double sin_t = std::sin(theta);
  const double cos_t = std::cos(theta);
  const double denom = p.cart_mass + p.pole_mass * sin_t * sin_t;
  s_dd = (force + p.pole_mass * sin_t * (p.pole_length * theta_dot * theta_dot -
                                         p.gravity * cos_t)) /
         denom;
  theta_dd = (p.gravity * sin_t - s_dd * cos_t) / p.pole_length;
}

}  // namespace

CartPoleState CartPoleState::from_vector(const Eigen::Ref<const VectorXd>& x) {
  if (x.size() != 4) {
    throw UsageError("CartPoleState: state must be 4-dimensional");
  }
  return {x[0], x[1], x[2], x[3]};
}

VectorXd CartPoleState::to_vector() const {
  VectorXd x(4);
  x << s, s_dot, theta, theta_dot;
  return x;
}

VectorXd cartpole_rhs(const CartPoleParams& p, const Eigen::Ref<const VectorXd>& x,
                      const Eigen::Ref<const VectorXd>& u) {
  validate(p);
  if (x.size() != 4 || u.size() != 1) {
    throw UsageError("cartpole_rhs: expected 4 states and 1 input");
  }
  double s_dd = 0.0;
  double theta_dd = 0.0;
  accelerations(p, x[2], x[3], u[0], s_dd, theta_dd);
  VectorXd dx(4);
  dx << x[1], s_dd, x[3], theta_dd;
  return dx;
}

ControlAffineDynamics cartpole_dynamics(const CartPoleParams& p) {
  validate(p);
  ControlAffineDynamics dyn;
  dyn.state_dim = 4;
  dyn.control_dim = 1;
  dyn.drift = [p](const VectorXd& x) {
    double s_dd = 0.0;
    double theta_dd = 0.0;
    accelerations(p, x[2], x[3], 0.0, s_dd, theta_dd);
    VectorXd f(4);
    f << x[1], s_dd, x[3], theta_dd;
    return f;
  };
  dyn.input_gain = [p](const VectorXd& x) {
    const double sin_t = std::sin(x[2]);
    const double cos_t = std::cos(x[2]);
    const double denom = p.cart_mass + p.pole_mass * sin_t * sin_t;
    MatrixXd g(4, 1);
    g << 0.0, 1.0 / denom, 0.0, -cos_t / (p.pole_length * denom);
    return g;
  };
  return dyn;
}

double cartpole_energy(const CartPoleParams& p, const Eigen::Ref<const VectorXd>& x) {
  const double s_dot = x[1];
  const double theta = x[2];
  const double theta_dot = x[3];
  const double m = p.pole_mass;
  const double l = p.pole_length;
  const double kinetic = 0.5 * (p.cart_mass + m) * s_dot * s_dot +
                         m * l * s_dot * theta_dot * std::cos(theta) +
                         0.5 * m * l * l * theta_dot * theta_dot;
  const double potential = m * p.gravity * l * std::cos(theta);
  return kinetic + potential;
}

double pendulum_energy_error(const CartPoleParams& p,
                             const Eigen::Ref<const VectorXd>& x) {
  const double m = p.pole_mass;
  const double l = p.pole_length;
  const double energy =
      0.5 * m * l * l * x[3] * x[3] + m * p.gravity * l * std::cos(x[2]);
  return energy - m * p.gravity * l;
}

Certificate cartpole_cbf(double k, double s_lim, double comparison_rate) {
  if (!(k > 0.0) || !(s_lim > 0.0)) {
    throw UsageError("cartpole_cbf: k and s_lim must be positive");
  }
  Certificate cert;
  cert.kind = CertificateKind::Barrier;
  cert.value = [k, s_lim](const VectorXd& x) {
    return -2.0 * x[0] * x[1] + k * (s_lim * s_lim - x[0] * x[0]);
  };
  cert.gradient = [k](const VectorXd& x) -> RowVectorXd {
    RowVectorXd g(4);
    g << -2.0 * x[1] - 2.0 * k * x[0], -2.0 * x[0], 0.0, 0.0;
    return g;
  };
  cert.comparison = linear_comparison(comparison_rate);
  return cert;
}

std::function<VectorXd(const VectorXd&)> swingup_reference(const CartPoleParams& p,
                                                           const SwingupGains& gains) {
  validate(p);

  // LQR about the upright equilibrium of the given model.
  const double M = p.cart_mass;
  const double m = p.pole_mass;
  const double l = p.pole_length;
  const double g = p.gravity;
  MatrixXd A = MatrixXd::Zero(4, 4);
  A(0, 1) = 1.0;
  A(2, 3) = 1.0;
  A(1, 2) = -m * g / M;
  A(3, 2) = (M + m) * g / (l * M);
  MatrixXd B(4, 1);
  B << 0.0, 1.0 / M, 0.0, -1.0 / (l * M);
  const MatrixXd K =
      lqr_gain(A, B, gains.lqr_q.asDiagonal(), MatrixXd::Constant(1, 1, gains.lqr_r));

  auto stabilizing = std::make_shared<bool>(false);
  return [p, gains, K, stabilizing](const VectorXd& x) {
    const double theta = std::remainder(x[2], 2.0 * std::numbers::pi);
    const double theta_dot = x[3];

    // Mode switch with hysteresis; idempotent for repeated calls at one x.
    if (*stabilizing) {
      if (std::abs(theta) > gains.release_angle) {
        *stabilizing = false;
      }
    } else if (std::abs(theta) < gains.catch_angle &&
               std::abs(theta_dot) < gains.catch_rate) {
      *stabilizing = true;
    }

    double force = 0.0;
    if (*stabilizing) {
      VectorXd err(4);
      err << x[0], x[1], theta, theta_dot;
      force = (-K * err)(0);
    } else {
      const double swing = theta_dot * std::cos(theta);
      const double e_err = pendulum_energy_error(p, x);
      if (std::abs(theta_dot) < 1e-3 && std::cos(theta) < 0.0) {
        force = gains.dither_force;
      } else {
        // Proportional pumping fades out as the homoclinic energy is reached,
        // so the pole coasts into the catch region instead of limit-cycling
        // around it; a bang-bang law never settles under zero-order hold.
        force = gains.energy_gain * e_err * swing - gains.recenter_position * x[0] -
                gains.recenter_velocity * x[1];
      }
    }
    VectorXd u(1);
    u[0] = std::clamp(force, -p.force_limit, p.force_limit);
    return u;
  };
}

}  // namespace gpcert::bench
