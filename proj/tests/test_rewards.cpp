#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ssev/rewards.hpp"

using namespace ssev;
using namespace ssev::rewards;

namespace {

sim::WorldState empty_world() {
  sim::TrafficParams params;
  params.vehicle_count_min = params.vehicle_count_max = 0;
  return sim::spawn_scenario(1, sim::Scenario::a, params);
}

}  // namespace

TEST_CASE("all-zero case") {
  sim::WorldState w = empty_world();
  w.ego.v_s = 0.0;
  w.ego.d = w.lanes.center(w.lanes.nearest_lane(w.ego.d));
  const RewardComponents c = reward_components(w, {}, {}, false, {});
  CHECK(c.r_s == 0.0);
  CHECK(c.r_c == 0.0);
  CHECK(c.r_ld == 0.0);
  CHECK(c.r_risk == 0.0);
  CHECK(c.r_cf == 0.0);
}

TEST_CASE("collision step pays the full collision penalty") {
  sim::WorldState w = empty_world();
  sim::TrafficVehicle tv;
  tv.st.s = w.ego.s;
  tv.st.d = w.ego.d;
  w.traffic.push_back(tv);
  const RewardComponents c = reward_components(w, {}, {}, false, {});
  CHECK(c.r_c == doctest::Approx(-50.0));
}

TEST_CASE("risk and comfort terms, hand-evaluated") {
  sim::WorldState w = empty_world();
  RewardConfig cfg;
  const ActionSnapshot prev{0.0, 0.0};
  const ActionSnapshot cur{3.5, 2.0};
  const RewardComponents c = reward_components(w, prev, cur, true, cfg);
  CHECK(c.r_risk == doctest::Approx(-5.0));
  CHECK(c.r_cf == doctest::Approx(-0.5 * (3.5 / 7.0 + 2.0 / 4.0)).epsilon(1e-12));
  CHECK(c.r_cf == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("speed reward endpoints and monotonicity") {
  sim::WorldState w = empty_world();
  RewardConfig cfg;
  w.ego.d = w.lanes.center(0);

  auto r_s_at = [&](double v) {
    w.ego.v_s = v;
    return reward_components(w, {}, {}, false, cfg).r_s;
  };

  CHECK(r_s_at(cfg.v_smin) == doctest::Approx(cfg.rho_sp).epsilon(1e-12));
  CHECK(r_s_at(cfg.v_smax) == doctest::Approx(cfg.rho_sp + cfg.rho_mp).epsilon(1e-12));
  CHECK(r_s_at(cfg.v_smax + 5.0) == doctest::Approx(cfg.rho_sp + cfg.rho_mp).epsilon(1e-12));

  double last = -1.0;
  for (double v = 0.0; v <= cfg.v_smax; v += 0.25) {
    const double r = r_s_at(v);
    CHECK(r >= last - 1e-12);
    last = r;
  }
}

TEST_CASE("comfort term vanishes only for an unchanged action") {
  sim::WorldState w = empty_world();
  const ActionSnapshot a{1.0, -0.5};
  CHECK(reward_components(w, a, a, false, {}).r_cf == 0.0);
  CHECK(reward_components(w, a, {1.0, -0.4}, false, {}).r_cf < 0.0);
  CHECK(reward_components(w, a, {0.9, -0.5}, false, {}).r_cf < 0.0);
}

TEST_CASE("penalty terms are never positive") {
  sim::WorldState w = empty_world();
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    w.ego.v_s = rng.uniform(0, 15);
    w.ego.d = rng.uniform(-6, 6);
    const ActionSnapshot prev{rng.uniform(-3.5, 3.5), rng.uniform(-2, 2)};
    const ActionSnapshot cur{rng.uniform(-3.5, 3.5), rng.uniform(-2, 2)};
    const RewardComponents c = reward_components(w, prev, cur, rng.uniform() < 0.5, {});
    CHECK(c.r_c <= 0.0);
    CHECK(c.r_ld <= 0.0);
    CHECK(c.r_risk <= 0.0);
    CHECK(c.r_cf <= 0.0);
  }
}

TEST_CASE("lane deviation is the distance to the nearest centerline") {
  sim::WorldState w = empty_world();
  w.ego.d = 1.0;  // center lane at 0, so 1.0 m off
  CHECK(reward_components(w, {}, {}, false, {}).r_ld == doctest::Approx(-1.0));
  w.ego.d = 2.5;  // nearest is the lane at 3.5, 1.0 m off
  CHECK(reward_components(w, {}, {}, false, {}).r_ld == doctest::Approx(-1.0));
}

TEST_CASE("totals") {
  CHECK(total_reward_phi({0, 0, 0, 0, 0}) == 0.0);
  CHECK(total_reward_phi({4.5, -50.0, -1.0, 0, 0}) == doctest::Approx(-46.5));
  CHECK(total_reward_omega({0, 0, 0, 0, 0}) == 0.0);
  CHECK(total_reward_omega({4.5, 0, 0, -5.0, -0.5}) == doctest::Approx(-1.0));

  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    RewardComponents c{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10),
                       rng.uniform(-10, 10), rng.uniform(-10, 10)};
    const double sum = c.r_s + c.r_c + c.r_ld;
    CHECK(total_reward_phi(c) == doctest::Approx(sum).epsilon(1e-12));
    CHECK(total_reward_omega(c) ==
          doctest::Approx(total_reward_phi(c) + c.r_risk + c.r_cf).epsilon(1e-12));
  }
}
