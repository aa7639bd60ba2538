#pragma once

#include <array>

#include "ssev/sim_types.hpp"

namespace ssev::planner {

// Boundary conditions for the lateral quintic: full state at t=0 and t=T_c.
struct LateralBoundary {
  double d0 = 0.0;
  double d0_dot = 0.0;
  double d0_ddot = 0.0;
  double d_fn = 0.0;
  double d_fn_dot = 0.0;
  double d_fn_ddot = 0.0;
};

// Boundary conditions for the longitudinal quartic: full state at t=0 but
// only velocity/acceleration at t=T_c (no terminal position row).
struct LongitudinalBoundary {
  double s0 = 0.0;
  double s0_dot = 0.0;
  double s0_ddot = 0.0;
  double sf_dot = 0.0;
  double sf_ddot = 0.0;
};

using QuinticCoeffs = std::array<double, 6>;
using QuarticCoeffs = std::array<double, 5>;

struct Trajectory {
  QuinticCoeffs p_d{};
  QuarticCoeffs p_s{};
  double horizon = 0.0;
};

struct TrajectorySample {
  double s, s_dot, s_ddot;
  double d, d_dot, d_ddot;
};

QuinticCoeffs solve_lateral_quintic(const LateralBoundary& b, double t_c);
QuarticCoeffs solve_longitudinal_quartic(const LongitudinalBoundary& b, double t_c);

Trajectory make_trajectory(const LateralBoundary& lat, const LongitudinalBoundary& lon,
                           double t_c);

// Polynomial values and first/second derivatives at t; t must lie in
// [0, horizon].
TrajectorySample eval_trajectory(const Trajectory& traj, double t);

struct PidGains {
  double lat_kp = 0.6;
  double lat_ki = 0.0;
  double lat_kd = 0.15;
  double heading_weight = 1.2;
  double speed_kp = 1.0;
  double speed_ki = 0.05;
  double speed_kd = 0.0;
  // How far along the freshly replanned trajectory the reference is taken.
  // One sim step gives almost no corrective authority under per-step
  // replanning; half a second behaves like a pure-pursuit preview.
  double preview = 0.5;
};

struct ActuatorLimits {
  double max_steer = 0.6;   // rad
  double max_accel = 4.0;   // m/s^2, symmetric
};

// Integrator state, owned per episode.
struct PidState {
  double lat_integral = 0.0;
  double speed_integral = 0.0;
  void reset() { lat_integral = speed_integral = 0.0; }
};

struct TrackMode {
  enum Kind { speed_profile, direct_accel } kind = speed_profile;
  double a_x = 0.0;  // used by direct_accel

  static TrackMode speed() { return {speed_profile, 0.0}; }
  static TrackMode direct(double accel) { return {direct_accel, accel}; }
};

struct Controls {
  double steer = 0.0;
  double accel = 0.0;
};

// Lateral steering from PID on cross-track error plus a weighted heading
// term; longitudinal accel from PID on the speed profile, or the raw a_x
// passthrough in direct mode. dt feeds the integrators.
Controls pid_track(const Trajectory& traj, const sim::VehicleState& ego, double elapsed,
                   const PidGains& gains, PidState& state, TrackMode mode, double dt,
                   const ActuatorLimits& limits = {});

}  // namespace ssev::planner
