#pragma once

#include "ssev/sim.hpp"

namespace ssev::rewards {

struct RewardConfig {
  double rho_sp = 0.5;     // starting-phase speed reward
  double rho_mp = 4.0;     // maintaining-phase speed reward
  double rho_coll = -50.0;
  double rho_ld = -1.0;    // lane-deviation penalty per meter
  double rho_risk = -5.0;  // applied when the guard intervenes
  double rho_cf = -0.5;    // action-smoothness penalty
  double v_smin = 8.0;     // m/s, end of the starting phase
  double v_smax = 15.0;    // m/s, end of the maintaining phase
  double a_bar = 4.0;      // comfort normalizer, m/s^2
  double lane_width = 3.5;
};

// The (d_fn, a_x) pair whose step-to-step change feeds the comfort term.
struct ActionSnapshot {
  double d_fn = 0.0;
  double a_x = 0.0;
};

struct RewardComponents {
  double r_s = 0.0;
  double r_c = 0.0;
  double r_ld = 0.0;
  double r_risk = 0.0;
  double r_cf = 0.0;
};

RewardComponents reward_components(const sim::WorldState& world, const ActionSnapshot& prev,
                                   const ActionSnapshot& cur, bool shield_flag,
                                   const RewardConfig& cfg);

inline double total_reward_phi(const RewardComponents& c) { return c.r_s + c.r_c + c.r_ld; }

inline double total_reward_omega(const RewardComponents& c) {
  return c.r_s + c.r_c + c.r_ld + c.r_risk + c.r_cf;
}

}  // namespace ssev::rewards
