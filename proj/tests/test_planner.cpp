#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>

#include "ssev/planner.hpp"
#include "ssev/rng.hpp"

using namespace ssev;
using namespace ssev::planner;

namespace {

// Independent oracle: Gauss-Jordan without pivoting on the same boundary
// systems, coded separately from the library solver.
template <int N>
std::array<double, N> gauss_jordan(std::array<std::array<double, N>, N> m,
                                   std::array<double, N> rhs) {
  for (int col = 0; col < N; ++col) {
    int row = col;
    while (row < N && m[row][col] == 0.0) ++row;
    REQUIRE(row < N);
    std::swap(m[col], m[row]);
    std::swap(rhs[col], rhs[row]);
    const double p = m[col][col];
    for (int c = 0; c < N; ++c) m[col][c] /= p;
    rhs[col] /= p;
    for (int r = 0; r < N; ++r) {
      if (r == col || m[r][col] == 0.0) continue;
      const double f = m[r][col];
      for (int c = 0; c < N; ++c) m[r][c] -= f * m[col][c];
      rhs[r] -= f * rhs[col];
    }
  }
  return rhs;
}

std::array<std::array<double, 6>, 6> quintic_matrix(double t) {
  const double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
  return {{{1, 0, 0, 0, 0, 0},
           {0, 1, 0, 0, 0, 0},
           {0, 0, 2, 0, 0, 0},
           {1, t, t2, t3, t4, t5},
           {0, 1, 2 * t, 3 * t2, 4 * t3, 5 * t4},
           {0, 0, 2, 6 * t, 12 * t2, 20 * t3}}};
}

std::array<std::array<double, 5>, 5> quartic_matrix(double t) {
  const double t2 = t * t, t3 = t2 * t;
  return {{{1, 0, 0, 0, 0},
           {0, 1, 0, 0, 0},
           {0, 0, 2, 0, 0},
           {0, 1, 2 * t, 3 * t2, 4 * t3},
           {0, 0, 2, 6 * t, 12 * t2}}};
}

}  // namespace

TEST_CASE("quintic: zero boundary gives zero coefficients") {
  const QuinticCoeffs p = solve_lateral_quintic({}, 2.0);
  for (double c : p) CHECK(c == 0.0);
}

TEST_CASE("quintic: constant boundary gives constant polynomial") {
  LateralBoundary b;
  b.d0 = b.d_fn = 1.75;
  const QuinticCoeffs p = solve_lateral_quintic(b, 3.0);
  CHECK(p[0] == doctest::Approx(1.75).epsilon(1e-12));
  for (int i = 1; i < 6; ++i) CHECK(std::abs(p[i]) < 1e-12);
}

TEST_CASE("quintic: frozen lane-change solution") {
  LateralBoundary b;
  b.d_fn = 3.5;
  const QuinticCoeffs p = solve_lateral_quintic(b, 4.0);
  CHECK(p[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p[2] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p[3] == doctest::Approx(35.0 / 64.0).epsilon(1e-12));
  CHECK(p[4] == doctest::Approx(-105.0 / 512.0).epsilon(1e-12));
  CHECK(p[5] == doctest::Approx(21.0 / 1024.0).epsilon(1e-12));
}

TEST_CASE("quintic: invalid horizon") {
  CHECK_THROWS(solve_lateral_quintic({}, 0.0));
  CHECK_THROWS(solve_lateral_quintic({}, -1.0));
}

TEST_CASE("quartic: constant velocity") {
  LongitudinalBoundary b{0.0, 10.0, 0.0, 10.0, 0.0};
  const QuarticCoeffs p = solve_longitudinal_quartic(b, 4.0);
  CHECK(p[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(10.0).epsilon(1e-12));
  for (int i = 2; i < 5; ++i) CHECK(std::abs(p[i]) < 1e-12);
}

TEST_CASE("quartic: zero boundary") {
  const QuarticCoeffs p = solve_longitudinal_quartic({}, 3.0);
  for (double c : p) CHECK(c == 0.0);
}

TEST_CASE("quartic: speed-up case matches independent solve") {
  LongitudinalBoundary b{0.0, 8.0, 0.0, 12.0, 0.0};
  const QuarticCoeffs p = solve_longitudinal_quartic(b, 4.0);
  const auto oracle = gauss_jordan<5>(quartic_matrix(4.0), {0.0, 8.0, 0.0, 12.0, 0.0});
  for (int i = 0; i < 5; ++i) CHECK(p[i] == doctest::Approx(oracle[i]).epsilon(1e-10));

  Trajectory traj{{}, p, 4.0};
  const TrajectorySample end = eval_trajectory(traj, 4.0);
  CHECK(end.s_dot == doctest::Approx(12.0).epsilon(1e-9));
  CHECK(std::abs(end.s_ddot) < 1e-9);
}

TEST_CASE("boundary-condition round trip over random boundaries") {
  Rng rng(1234);
  for (int iter = 0; iter < 1000; ++iter) {
    const double t = rng.uniform(0.2, 8.0);
    LateralBoundary lb{rng.uniform(-5, 5), rng.uniform(-3, 3), rng.uniform(-2, 2),
                       rng.uniform(-5, 5), rng.uniform(-3, 3), rng.uniform(-2, 2)};
    LongitudinalBoundary sb{rng.uniform(0, 100), rng.uniform(0, 15), rng.uniform(-2, 2),
                            rng.uniform(0, 15), rng.uniform(-2, 2)};
    const QuinticCoeffs pd = solve_lateral_quintic(lb, t);
    const QuarticCoeffs ps = solve_longitudinal_quartic(sb, t);

    const auto md = quintic_matrix(t);
    const std::array<double, 6> rd = {lb.d0,  lb.d0_dot,   lb.d0_ddot,
                                      lb.d_fn, lb.d_fn_dot, lb.d_fn_ddot};
    for (int r = 0; r < 6; ++r) {
      double acc = 0.0;
      for (int c = 0; c < 6; ++c) acc += md[r][c] * pd[c];
      const double scale = std::max(1.0, std::abs(rd[r]));
      CHECK(std::abs(acc - rd[r]) / scale < 1e-9);
    }
    const auto ms = quartic_matrix(t);
    const std::array<double, 5> rs = {sb.s0, sb.s0_dot, sb.s0_ddot, sb.sf_dot, sb.sf_ddot};
    for (int r = 0; r < 5; ++r) {
      double acc = 0.0;
      for (int c = 0; c < 5; ++c) acc += ms[r][c] * ps[c];
      const double scale = std::max(1.0, std::abs(rs[r]));
      CHECK(std::abs(acc - rs[r]) / scale < 1e-9);
    }
  }
}

TEST_CASE("lane-change symmetry: +/- offsets negate coefficients") {
  for (double dd : {1.0, 3.5, 2.2}) {
    LateralBoundary plus;
    plus.d_fn = dd;
    LateralBoundary minus;
    minus.d_fn = -dd;
    const QuinticCoeffs a = solve_lateral_quintic(plus, 3.0);
    const QuinticCoeffs b = solve_lateral_quintic(minus, 3.0);
    for (int i = 0; i < 6; ++i) CHECK(a[i] == doctest::Approx(-b[i]).epsilon(1e-12));
  }
}

TEST_CASE("horizon scaling: zero-derivative lane change has a fixed shape") {
  LateralBoundary b;
  b.d_fn = 3.5;
  const double t1 = 2.0, t2 = 5.0;
  Trajectory traj1{solve_lateral_quintic(b, t1), {}, t1};
  Trajectory traj2{solve_lateral_quintic(b, t2), {}, t2};
  for (double u = 0.0; u <= 1.0; u += 0.125) {
    const double d1 = eval_trajectory(traj1, u * t1).d;
    const double d2 = eval_trajectory(traj2, u * t2).d;
    CHECK(d1 == doctest::Approx(d2).epsilon(1e-9));
  }
}

TEST_CASE("eval: t=0 reproduces the initial boundary") {
  LateralBoundary lb{1.0, -0.5, 0.25, 3.0, 0.0, 0.0};
  LongitudinalBoundary sb{5.0, 9.0, 0.5, 12.0, 0.0};
  const Trajectory traj = make_trajectory(lb, sb, 3.0);
  const TrajectorySample s0 = eval_trajectory(traj, 0.0);
  CHECK(s0.d == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s0.d_dot == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(s0.d_ddot == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(s0.s == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(s0.s_dot == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(s0.s_ddot == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("eval: constant-velocity trajectory") {
  Trajectory traj{{}, {0.0, 10.0, 0.0, 0.0, 0.0}, 4.0};
  const TrajectorySample s = eval_trajectory(traj, 2.0);
  CHECK(s.s == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(s.s_dot == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(s.s_ddot == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("eval: derivatives match central finite differences") {
  Rng rng(77);
  LateralBoundary lb{rng.uniform(-3, 3), rng.uniform(-1, 1), rng.uniform(-1, 1),
                     rng.uniform(-3, 3), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  LongitudinalBoundary sb{rng.uniform(0, 10), rng.uniform(2, 12), rng.uniform(-1, 1),
                          rng.uniform(2, 12), rng.uniform(-1, 1)};
  const Trajectory traj = make_trajectory(lb, sb, 5.0);
  const double h = 1e-5;
  for (double t = 0.1; t < 4.9; t += 0.37) {
    const TrajectorySample mid = eval_trajectory(traj, t);
    const TrajectorySample lo = eval_trajectory(traj, t - h);
    const TrajectorySample hi = eval_trajectory(traj, t + h);
    CHECK(mid.d_dot == doctest::Approx((hi.d - lo.d) / (2 * h)).epsilon(1e-6));
    CHECK(mid.s_dot == doctest::Approx((hi.s - lo.s) / (2 * h)).epsilon(1e-6));
    CHECK(mid.d_ddot == doctest::Approx((hi.d_dot - lo.d_dot) / (2 * h)).epsilon(1e-6));
    CHECK(mid.s_ddot == doctest::Approx((hi.s_dot - lo.s_dot) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("eval: out-of-range time") {
  Trajectory traj{{}, {}, 2.0};
  CHECK_THROWS(eval_trajectory(traj, -0.1));
  CHECK_THROWS(eval_trajectory(traj, 2.5));
}

TEST_CASE("pid: on-trajectory with matching speed produces null controls") {
  sim::VehicleState ego;
  ego.d = 1.0;
  ego.v_s = 10.0;
  LateralBoundary lb{1.0, 0.0, 0.0, 1.0, 0.0, 0.0};
  LongitudinalBoundary sb{0.0, 10.0, 0.0, 10.0, 0.0};
  const Trajectory traj = make_trajectory(lb, sb, 4.0);
  PidGains gains;
  PidState state;
  const Controls c = pid_track(traj, ego, 0.0, gains, state, TrackMode::speed(), 0.1);
  CHECK(std::abs(c.steer) < 1e-6);
  CHECK(std::abs(c.accel) < 1e-6);
}

TEST_CASE("pid: direct-accel mode is a passthrough") {
  sim::VehicleState ego;
  ego.v_s = 3.0;
  ego.d = -2.0;  // deliberately off the reference
  LateralBoundary lb{0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  LongitudinalBoundary sb{0.0, 10.0, 0.0, 10.0, 0.0};
  const Trajectory traj = make_trajectory(lb, sb, 4.0);
  PidGains gains;
  PidState state;
  const Controls c = pid_track(traj, ego, 0.5, gains, state, TrackMode::direct(1.5), 0.1);
  CHECK(c.accel == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("pid: steer opposes a constant cross-track offset") {
  sim::VehicleState ego;
  ego.d = 0.5;  // left of the reference path at d = 0
  ego.v_s = 10.0;
  LateralBoundary lb{0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  LongitudinalBoundary sb{0.0, 10.0, 0.0, 10.0, 0.0};
  const Trajectory traj = make_trajectory(lb, sb, 4.0);
  PidGains gains;
  PidState state;
  const Controls c = pid_track(traj, ego, 0.0, gains, state, TrackMode::speed(), 0.1);
  CHECK(c.steer < 0.0);
}
