#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ssev/guard.hpp"
#include "ssev/rewards.hpp"
#include "ssev/sim.hpp"

namespace ssev::trace {

struct ShieldLog {
  bool gamma = false;
  bool lateral_overridden = false;
  bool longitudinal_overridden = false;
  double a_safe_pre = 0.0;
  double a_safe_follow = 0.0;
  double t_c_used = 0.0;
  int binding_pre = -1;
  int binding_follow = -1;
};

struct TraceStep {
  double t = 0.0;
  sim::VehicleState ego;
  std::vector<std::pair<int, sim::VehicleState>> traffic;  // id, state
  std::vector<sim::PedestrianState> pedestrians;
  bool collision = false;
  rewards::ActionSnapshot action;  // executed (d_fn, a_x)
  double reward = 0.0;
  std::optional<ShieldLog> shield;
};

using EpisodeTrace = std::vector<TraceStep>;

void write_trace_jsonl(const std::string& path, const EpisodeTrace& steps);
EpisodeTrace read_trace_jsonl(const std::string& path);

// Spatio-temporal diagram (s over t) as a standalone SVG.
void write_trace_svg(const std::string& path, const EpisodeTrace& steps);

}  // namespace ssev::trace
