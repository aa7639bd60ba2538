#include "ssev/guard.hpp"

#include <algorithm>
#include <cmath>

namespace ssev::guard {

double safe_distance(double v_ego) { return 3.6 * v_ego; }

double sca(double delta_s, double delta_v, double s_safe, double t_c) {
  if (t_c <= 0.0) throw std::invalid_argument("sca: adjustment horizon must be positive");
  const double sign = delta_s >= 0.0 ? 1.0 : -1.0;
  return 2.0 * (delta_s - sign * s_safe + t_c * delta_v) / (t_c * t_c);
}

double rq_to_tc(double rq_percent, const ShieldConfig& cfg) {
  return std::clamp(cfg.k1 * rq_percent + cfg.b1, cfg.tc_min, cfg.tc_max);
}

namespace {

struct Bounds {
  double pre = std::numeric_limits<double>::infinity();
  double follow = -std::numeric_limits<double>::infinity();
  int binding_pre = -1;
  int binding_follow = -1;
};

// Importance score for a traffic vehicle, via the observation slot map.
double importance_of(const sim::Observation& obs, const rq::RqEval* ev, int traffic_index) {
  if (!ev) return 0.0;
  for (int slot = 0; slot < sim::kVehicleSlots; ++slot)
    if (obs.vehicle_slot[static_cast<size_t>(slot)] == traffic_index)
      return ev->importance[static_cast<size_t>(slot)];
  return 0.0;  // outside the observed nearest-5: no attention mass
}

// SCA bounds over the vehicles that overlap the lanes swept by the lateral
// path from d0 to d_target.
Bounds compute_bounds(const sim::Observation& obs, const sim::WorldState& world,
                      const rq::RqEval* ev, double d0, double d_target, double t_c,
                      const ShieldConfig& cfg) {
  Bounds out;
  const double s_safe = safe_distance(world.ego.v_s);

  const int lane_from = world.lanes.nearest_lane(d0);
  const int lane_to = world.lanes.nearest_lane(d_target);
  auto relevant = [&](double d) {
    const double limit = 0.5 * world.lanes.lane_width + cfg.lane_overlap_margin;
    return std::abs(d - world.lanes.center(lane_from)) <= limit ||
           std::abs(d - world.lanes.center(lane_to)) <= limit;
  };

  struct Candidate {
    double a_safe;
    double criterion;
    int index;
    bool preceding;
  };
  std::vector<Candidate> cands;
  for (size_t i = 0; i < world.traffic.size(); ++i) {
    const sim::VehicleState& o = world.traffic[i].st;
    if (!relevant(o.d)) continue;
    const double delta_s = o.s - world.ego.s;
    const double delta_v = o.v_s - world.ego.v_s;
    // A coincident center means the gap is already violated: emergency bound.
    const double a_safe = delta_s == 0.0 ? cfg.a_min : sca(delta_s, delta_v, s_safe, t_c);
    const double ir = importance_of(obs, ev, static_cast<int>(i));
    const double criterion = a_safe + cfg.k2 * ir + cfg.b2;
    cands.push_back({a_safe, criterion, static_cast<int>(i), delta_s >= 0.0});
  }

  for (const Candidate& c : cands) {
    if (c.preceding) {
      if (cfg.mode == ShieldConfig::Mode::paper) {
        if (out.binding_pre < 0 || c.criterion > out.pre) {
          out.pre = c.criterion;
          out.binding_pre = c.index;
        }
      } else {
        if (c.a_safe < out.pre) {
          out.pre = c.a_safe;
          out.binding_pre = c.index;
        }
      }
    } else {
      if (cfg.mode == ShieldConfig::Mode::paper) {
        if (out.binding_follow < 0 || c.criterion > out.follow) {
          out.follow = c.criterion;
          out.binding_follow = c.index;
        }
      } else {
        if (c.a_safe > out.follow) {
          out.follow = c.a_safe;
          out.binding_follow = c.index;
        }
      }
    }
  }
  return out;
}

}  // namespace

ShieldDecision shield(const sim::Observation& obs, const sim::WorldState& world,
                      const rq::RqModel* rq_model, const agent::ActionOmega& action,
                      const ShieldConfig& cfg, const GuardMode& mode) {
  ShieldDecision dec;
  dec.final_action = action;
  if (mode.kind == GuardMode::off) return dec;

  std::optional<rq::RqEval> ev;
  if (mode.kind == GuardMode::adaptive) {
    if (!rq_model) throw std::invalid_argument("shield: adaptive guard needs a risk model");
    ev = rq::rq_evaluate(*rq_model, obs.x);
    dec.rq_percent = ev->rq_percent;
    dec.t_c_used = rq_to_tc(ev->rq_percent, cfg);
  } else {
    if (rq_model) {
      // Importance scores still feed the paper-mode criterion when available.
      ev = rq::rq_evaluate(*rq_model, obs.x);
      dec.rq_percent = ev->rq_percent;
    }
    dec.t_c_used = mode.fixed_tc;
  }

  const double lane_center = world.lanes.nearest_center(world.ego.d);
  double d_target = lane_center + action.d_fn;

  Bounds b = compute_bounds(obs, world, ev ? &*ev : nullptr, world.ego.d, d_target,
                            dec.t_c_used, cfg);

  // Lateral check: an infeasible or out-of-authority band means the lateral
  // action is risky; hold the current lane and re-derive the band there.
  if (b.pre < b.follow || b.pre < cfg.a_min || b.follow > cfg.a_max) {
    dec.gamma = true;
    dec.lateral_overridden = true;
    dec.final_action.d_fn = 0.0;
    d_target = lane_center;
    b = compute_bounds(obs, world, ev ? &*ev : nullptr, world.ego.d, d_target, dec.t_c_used,
                       cfg);
  }

  dec.a_safe_pre = b.pre;
  dec.a_safe_follow = b.follow;
  dec.binding_pre = b.binding_pre;
  dec.binding_follow = b.binding_follow;

  const double a_x = dec.final_action.a_x;
  if (a_x < b.follow || a_x > b.pre) {
    dec.gamma = true;
    dec.longitudinal_overridden = true;
    dec.final_action.a_x = std::clamp(b.pre, cfg.a_min, cfg.a_max);
  }
  return dec;
}

}  // namespace ssev::guard
