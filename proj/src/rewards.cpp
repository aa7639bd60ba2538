#include "ssev/rewards.hpp"

#include <algorithm>
#include <cmath>

namespace ssev::rewards {

RewardComponents reward_components(const sim::WorldState& world, const ActionSnapshot& prev,
                                   const ActionSnapshot& cur, bool shield_flag,
                                   const RewardConfig& cfg) {
  RewardComponents out;

  const double v = world.ego.v_s;
  const double v_sp = std::min(v, cfg.v_smin) / cfg.v_smin;
  const double v_mp = std::clamp((v - cfg.v_smin) / (cfg.v_smax - cfg.v_smin), 0.0, 1.0);
  out.r_s = cfg.rho_sp * v_sp + cfg.rho_mp * v_mp;

  out.r_c = sim::detect_collision(world) ? cfg.rho_coll : 0.0;

  double d_ld = std::numeric_limits<double>::infinity();
  for (double c : world.lanes.lane_centers) d_ld = std::min(d_ld, std::abs(world.ego.d - c));
  out.r_ld = cfg.rho_ld * d_ld;

  out.r_risk = shield_flag ? cfg.rho_risk : 0.0;

  out.r_cf = cfg.rho_cf * (std::abs(cur.d_fn - prev.d_fn) / (2.0 * cfg.lane_width) +
                           std::abs(cur.a_x - prev.a_x) / cfg.a_bar);

  return out;
}

}  // namespace ssev::rewards
