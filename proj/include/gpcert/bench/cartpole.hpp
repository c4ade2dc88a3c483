#pragma once

#include <memory>

#include "gpcert/certificate.hpp"

namespace gpcert::bench {

// Cart of mass `cart_mass` on a rail, point-mass pole of mass `pole_mass`
// at distance `pole_length` from the pivot.  State x = [s, s_dot, theta,
// theta_dot] with theta measured from upright; input is a horizontal force.
struct CartPoleParams {
  double cart_mass = 0.5;
  double pole_mass = 0.2;
  double pole_length = 0.3;
  double gravity = 9.81;
  double force_limit = 10.0;
};

struct CartPoleState {
  double s = 0.0;
  double s_dot = 0.0;
  double theta = 0.0;
  double theta_dot = 0.0;

  static CartPoleState from_vector(const Eigen::Ref<const VectorXd>& x);
  VectorXd to_vector() const;
};

VectorXd cartpole_rhs(const CartPoleParams& p, const Eigen::Ref<const VectorXd>& x,
                      const Eigen::Ref<const VectorXd>& u);
ControlAffineDynamics cartpole_dynamics(const CartPoleParams& p);

// Kinetic plus potential energy of the full cart-pole; conserved at u = 0.
double cartpole_energy(const CartPoleParams& p, const Eigen::Ref<const VectorXd>& x);

// Pole-only energy relative to the upright target, used by the swing-up law.
double pendulum_energy_error(const CartPoleParams& p,
                             const Eigen::Ref<const VectorXd>& x);

// Rail-limit barrier C(x) = -2 s s_dot + k (s_lim^2 - s^2); the certified
// condition keeps |s| <= s_lim along closed-loop trajectories.
Certificate cartpole_cbf(double k, double s_lim = 0.35, double comparison_rate = 1.0);

struct SwingupGains {
  double energy_gain = 20.0;
  // Cart recentering during the pumping phase; without it the catch happens
  // far from the origin at high cart speed and the LQR loses the pole again.
  double recenter_position = 1.0;
  double recenter_velocity = 1.5;
  double dither_force = 0.4;
  double catch_angle = 0.35;
  double catch_rate = 3.0;
  double release_angle = 0.8;
  VectorXd lqr_q = (VectorXd(4) << 4.0, 1.0, 16.0, 2.0).finished();
  double lqr_r = 0.5;
};

// Hybrid swing-up reference: energy pumping outside the catch region, LQR
// about upright inside it, with hysteresis between the two modes.  The
// returned callable owns its mode flag; calls at the same state are
// idempotent, so one instance serves one control loop.
std::function<VectorXd(const VectorXd&)> swingup_reference(
    const CartPoleParams& p, const SwingupGains& gains = {});

}  // namespace gpcert::bench
