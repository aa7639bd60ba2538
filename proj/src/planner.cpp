#include "ssev/planner.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ssev::planner {

namespace {

// Gaussian elimination with partial pivoting, in place. n is small (5 or 6).
template <int N>
std::array<double, N> solve_dense(std::array<std::array<double, N>, N> a,
                                  std::array<double, N> rhs) {
  for (int col = 0; col < N; ++col) {
    int pivot = col;
    for (int r = col + 1; r < N; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (a[pivot][col] == 0.0) throw std::runtime_error("singular boundary system");
    std::swap(a[col], a[pivot]);
    std::swap(rhs[col], rhs[pivot]);
    for (int r = col + 1; r < N; ++r) {
      const double f = a[r][col] / a[col][col];
      if (f == 0.0) continue;
      for (int c = col; c < N; ++c) a[r][c] -= f * a[col][c];
      rhs[r] -= f * rhs[col];
    }
  }
  std::array<double, N> x{};
  for (int r = N - 1; r >= 0; --r) {
    double acc = rhs[r];
    for (int c = r + 1; c < N; ++c) acc -= a[r][c] * x[c];
    x[r] = acc / a[r][r];
  }
  return x;
}

}  // namespace

QuinticCoeffs solve_lateral_quintic(const LateralBoundary& b, double t_c) {
  if (t_c <= 0.0) throw std::invalid_argument("solve_lateral_quintic: horizon must be positive");
  const double t = t_c, t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
  std::array<std::array<double, 6>, 6> m = {{
      {1, 0, 0, 0, 0, 0},
      {0, 1, 0, 0, 0, 0},
      {0, 0, 2, 0, 0, 0},
      {1, t, t2, t3, t4, t5},
      {0, 1, 2 * t, 3 * t2, 4 * t3, 5 * t4},
      {0, 0, 2, 6 * t, 12 * t2, 20 * t3},
  }};
  return solve_dense<6>(m, {b.d0, b.d0_dot, b.d0_ddot, b.d_fn, b.d_fn_dot, b.d_fn_ddot});
}

QuarticCoeffs solve_longitudinal_quartic(const LongitudinalBoundary& b, double t_c) {
  if (t_c <= 0.0)
    throw std::invalid_argument("solve_longitudinal_quartic: horizon must be positive");
  const double t = t_c, t2 = t * t, t3 = t2 * t;
  // No terminal-position row: the last two rows pin velocity and acceleration.
  std::array<std::array<double, 5>, 5> m = {{
      {1, 0, 0, 0, 0},
      {0, 1, 0, 0, 0},
      {0, 0, 2, 0, 0},
      {0, 1, 2 * t, 3 * t2, 4 * t3},
      {0, 0, 2, 6 * t, 12 * t2},
  }};
  return solve_dense<5>(m, {b.s0, b.s0_dot, b.s0_ddot, b.sf_dot, b.sf_ddot});
}

Trajectory make_trajectory(const LateralBoundary& lat, const LongitudinalBoundary& lon,
                           double t_c) {
  Trajectory traj;
  traj.p_d = solve_lateral_quintic(lat, t_c);
  traj.p_s = solve_longitudinal_quartic(lon, t_c);
  traj.horizon = t_c;
  return traj;
}

namespace {

// Horner evaluation of p, p' and p''.
template <size_t N>
void eval_poly(const std::array<double, N>& p, double t, double& y, double& dy, double& ddy) {
  y = dy = ddy = 0.0;
  for (int i = static_cast<int>(N) - 1; i >= 0; --i) {
    ddy = ddy * t + 2.0 * dy;
    dy = dy * t + y;
    y = y * t + p[static_cast<size_t>(i)];
  }
}

}  // namespace

TrajectorySample eval_trajectory(const Trajectory& traj, double t) {
  if (t < 0.0 || t > traj.horizon + 1e-12)
    throw std::out_of_range("eval_trajectory: t outside [0, horizon]");
  TrajectorySample out{};
  eval_poly(traj.p_s, t, out.s, out.s_dot, out.s_ddot);
  eval_poly(traj.p_d, t, out.d, out.d_dot, out.d_ddot);
  return out;
}

Controls pid_track(const Trajectory& traj, const sim::VehicleState& ego, double elapsed,
                   const PidGains& gains, PidState& state, TrackMode mode, double dt,
                   const ActuatorLimits& limits) {
  const double t = std::clamp(elapsed, 0.0, traj.horizon);
  const TrajectorySample ref = eval_trajectory(traj, t);

  const double cross_track = ref.d - ego.d;
  // Reference headings beyond ~20 deg are not meaningful lane-driving
  // targets; clamping keeps the heading term corrective when the plant is
  // far off the plan.
  const double heading_ref =
      std::clamp(std::atan2(ref.d_dot, std::max(ref.s_dot, 0.5)), -0.35, 0.35);
  const double heading_err = heading_ref - ego.heading;
  state.lat_integral += cross_track * dt;
  const double cross_track_rate = ref.d_dot - ego.v_d;
  double steer = gains.lat_kp * cross_track + gains.lat_ki * state.lat_integral +
                 gains.lat_kd * cross_track_rate + gains.heading_weight * heading_err;
  steer = std::clamp(steer, -limits.max_steer, limits.max_steer);

  double accel;
  if (mode.kind == TrackMode::direct_accel) {
    accel = mode.a_x;  // passthrough contract
  } else {
    const double speed_err = ref.s_dot - ego.v_s;
    state.speed_integral += speed_err * dt;
    accel = gains.speed_kp * speed_err + gains.speed_ki * state.speed_integral;
  }
  accel = std::clamp(accel, -limits.max_accel, limits.max_accel);

  return {steer, accel};
}

}  // namespace ssev::planner
