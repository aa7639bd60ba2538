#pragma once

#include <optional>
#include <vector>

#include "ssev/agent.hpp"
#include "ssev/rq.hpp"
#include "ssev/sim.hpp"

namespace ssev::guard {

struct ShieldConfig {
  double k1 = -7.0 / 200.0;  // Linear map rq% -> T_c
  double b1 = 4.0;
  double k2 = 0.92;  // Linear map on the importance score
  double b2 = 0.02;
  double a_max = 2.0;
  double a_min = -2.0;
  enum class Mode { paper, conservative } mode = Mode::conservative;
  double lane_overlap_margin = 0.5;  // m
  double tc_min = 0.5;
  double tc_max = 4.0;
};

// How T_c is chosen per step: from the risk model, pinned, or guard disabled.
struct GuardMode {
  enum Kind { off, adaptive, fixed } kind = adaptive;
  double fixed_tc = 3.0;

  static GuardMode make_off() { return {off, 0.0}; }
  static GuardMode make_adaptive() { return {adaptive, 0.0}; }
  static GuardMode make_fixed(double tc) { return {fixed, tc}; }
};

// Speed-proportional required gap, 3.6 s-equivalent headway.
double safe_distance(double v_ego);

// Constant acceleration that restores exactly the safe gap after t_c.
// delta_s = s_obj - s_ego (center to center), delta_v = v_obj - v_ego.
// delta_s > 0 makes this an upper bound on ego acceleration, delta_s < 0 a
// lower bound. delta_s == 0 is a violated gap and reports a_min directly in
// the shield.
double sca(double delta_s, double delta_v, double s_safe, double t_c);

double rq_to_tc(double rq_percent, const ShieldConfig& cfg = {});

struct ShieldDecision {
  bool gamma = false;
  bool lateral_overridden = false;
  bool longitudinal_overridden = false;
  agent::ActionOmega final_action;
  double a_safe_pre = std::numeric_limits<double>::infinity();
  double a_safe_follow = -std::numeric_limits<double>::infinity();
  int binding_pre = -1;     // traffic index of the binding preceding vehicle
  int binding_follow = -1;  // traffic index of the binding following vehicle
  double t_c_used = 0.0;
  double rq_percent = 0.0;  // NaN-free: 0 when the risk model is not consulted
};

// Algorithm-2 style runtime filter: lateral check first (fall back to lane
// hold), then clamp the longitudinal action into the SCA band.
ShieldDecision shield(const sim::Observation& obs, const sim::WorldState& world,
                      const rq::RqModel* rq_model, const agent::ActionOmega& action,
                      const ShieldConfig& cfg, const GuardMode& mode = GuardMode::make_adaptive());

}  // namespace ssev::guard
