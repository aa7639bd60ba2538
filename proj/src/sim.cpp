#include "ssev/sim.hpp"

#include <algorithm>
#include <cmath>

namespace ssev::sim {

LaneGeometry LaneGeometry::make(int count, double width, double length) {
  LaneGeometry g;
  g.lane_count = count;
  g.lane_width = width;
  g.road_length = length;
  g.lane_centers.resize(static_cast<size_t>(count));
  const double offset = 0.5 * width * (count - 1);
  for (int i = 0; i < count; ++i) g.lane_centers[static_cast<size_t>(i)] = i * width - offset;
  return g;
}

int LaneGeometry::nearest_lane(double d) const {
  int best = 0;
  double best_dist = std::abs(d - lane_centers[0]);
  for (int i = 1; i < lane_count; ++i) {
    const double dist = std::abs(d - lane_centers[static_cast<size_t>(i)]);
    if (dist < best_dist) {
      best_dist = dist;
      best = i;
    }
  }
  return best;
}

namespace {

constexpr double kPedClearMargin = 0.5;  // how far past the road edge a crossing ends

bool lane_conflict(const WorldState& world, int lane, double s, double min_gap) {
  for (const auto& tv : world.traffic) {
    if (world.lanes.nearest_lane(tv.st.d) == lane && std::abs(tv.st.s - s) < min_gap)
      return true;
  }
  if (world.lanes.nearest_lane(world.ego.d) == lane &&
      std::abs(world.ego.s - s) < min_gap)
    return true;
  return false;
}

void validate_params(const TrafficParams& p) {
  if (p.speed_low > p.speed_high) throw SimError("traffic params: speed_low > speed_high");
  if (p.spawn_range <= 0.0) throw SimError("traffic params: spawn_range must be positive");
  if (p.vehicle_count_min < 0 || p.vehicle_count_max < p.vehicle_count_min)
    throw SimError("traffic params: bad vehicle count range");
  if (p.idm.min_gap <= 0.0 || p.idm.time_headway <= 0.0 || p.idm.max_accel <= 0.0 ||
      p.idm.comfortable_decel <= 0.0)
    throw SimError("traffic params: IDM parameters must be positive");
}

}  // namespace

WorldState spawn_scenario(std::uint64_t seed, Scenario scenario, const TrafficParams& params,
                          const LaneGeometry& lanes) {
  validate_params(params);

  WorldState world;
  world.lanes = lanes;
  world.params = params;
  world.rng = Rng(seed);

  const int ego_lane = static_cast<int>(world.rng.uniform_int(0, lanes.lane_count - 1));
  world.ego.s = 0.0;
  world.ego.d = lanes.center(ego_lane);
  world.ego.v_s = 0.0;
  world.ego.v_d = 0.0;
  world.ego.heading = 0.0;

  const int count = static_cast<int>(
      world.rng.uniform_int(params.vehicle_count_min, params.vehicle_count_max));
  for (int i = 0; i < count; ++i) {
    constexpr int kMaxAttempts = 200;
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      const int lane = static_cast<int>(world.rng.uniform_int(0, lanes.lane_count - 1));
      const double s = world.rng.uniform(params.ego_front_margin, params.spawn_range);
      if (lane_conflict(world, lane, s, params.min_spawn_gap)) continue;
      TrafficVehicle tv;
      tv.st.s = s;
      tv.st.d = lanes.center(lane);
      tv.st.v_s = world.rng.uniform(params.speed_low, params.speed_high);
      tv.desired_speed = tv.st.v_s;
      tv.id = i;
      world.traffic.push_back(tv);
      placed = true;
    }
    if (!placed)
      throw SimError("spawn_scenario: could not place vehicle " + std::to_string(i) +
                     " collision-free; loosen traffic params");
  }

  if (scenario == Scenario::b) {
    constexpr double kHorizon = 60.0;  // episode length covered by the schedule, s
    const double expected = params.pedestrian_rate * kHorizon;
    int n = static_cast<int>(expected);
    if (world.rng.uniform() < expected - n) ++n;
    for (int i = 0; i < n; ++i) {
      CrossingEvent ev;
      ev.time = world.rng.uniform(2.0, kHorizon);
      ev.ds_ahead = world.rng.uniform(30.0, 150.0);
      ev.speed = world.rng.uniform(1.0, 2.0);
      ev.from_left = world.rng.uniform_int(0, 1) == 1 ? 1 : 0;
      world.pending_crossings.push_back(ev);
    }
    std::sort(world.pending_crossings.begin(), world.pending_crossings.end(),
              [](const CrossingEvent& a, const CrossingEvent& b) { return a.time < b.time; });
  }

  return world;
}

double traffic_accel(double gap, double v, double v_leader, double v_desired,
                     const IdmParams& idm) {
  if (gap <= 0.0) return -idm.comfortable_decel;

  const double free_term = std::pow(v / v_desired, idm.exponent);
  double interaction = 0.0;
  if (std::isfinite(gap)) {
    const double dv = v - v_leader;
    const double dyn = v * idm.time_headway +
                       v * dv / (2.0 * std::sqrt(idm.max_accel * idm.comfortable_decel));
    const double s_star = idm.min_gap + std::max(0.0, dyn);
    interaction = (s_star / gap) * (s_star / gap);
  }
  const double a = idm.max_accel * (1.0 - free_term - interaction);
  return std::clamp(a, -idm.comfortable_decel, idm.max_accel);
}

namespace {

// Net longitudinal gap from a follower to the closest in-lane leader
// (vehicle, ego, or active pedestrian). Returns +inf when the lane is free.
struct LeaderInfo {
  double gap = std::numeric_limits<double>::infinity();
  double speed = 0.0;
};

LeaderInfo find_leader(const WorldState& world, size_t self_index) {
  const TrafficVehicle& self = world.traffic[self_index];
  const int lane = world.lanes.nearest_lane(self.st.d);
  LeaderInfo best;

  auto consider = [&](double s, double half_len, double v) {
    const double gap = s - self.st.s - self.st.half_length - half_len;
    if (s > self.st.s && gap < best.gap) best = {gap, v};
  };

  for (size_t j = 0; j < world.traffic.size(); ++j) {
    if (j == self_index) continue;
    const TrafficVehicle& other = world.traffic[j];
    if (world.lanes.nearest_lane(other.st.d) != lane) continue;
    consider(other.st.s, other.st.half_length, other.st.v_s);
  }
  if (world.lanes.nearest_lane(world.ego.d) == lane)
    consider(world.ego.s, world.ego.half_length, world.ego.v_s);
  for (const auto& ped : world.pedestrians) {
    if (!ped.active) continue;
    const double lane_center = world.lanes.center(lane);
    if (std::abs(ped.d - lane_center) > 0.5 * world.lanes.lane_width + kPedestrianRadius)
      continue;
    consider(ped.s, kPedestrianRadius, 0.0);  // crossing pedestrian: zero-speed leader
  }
  return best;
}

}  // namespace

void step_world(WorldState& world, const EgoControls& controls, double dt) {
  if (dt <= 0.0) throw SimError("step_world: dt must be positive");

  // Traffic accelerations from the pre-step snapshot (synchronous update).
  std::vector<double> accel(world.traffic.size());
  for (size_t i = 0; i < world.traffic.size(); ++i) {
    const LeaderInfo leader = find_leader(world, i);
    accel[i] = traffic_accel(leader.gap, world.traffic[i].st.v_s, leader.speed,
                             world.traffic[i].desired_speed, world.params.idm);
  }

  // Ego: kinematic bicycle with clamped actuation.
  {
    constexpr double kMaxSteer = 0.6;
    constexpr double kMaxAccel = 4.0;
    const double steer = std::clamp(controls.steer, -kMaxSteer, kMaxSteer);
    const double a = std::clamp(controls.accel, -kMaxAccel, kMaxAccel);
    VehicleState& e = world.ego;
    const double v = std::hypot(e.v_s, e.v_d);
    e.s += v * std::cos(e.heading) * dt;
    e.d += v * std::sin(e.heading) * dt;
    const double v_new = std::max(0.0, v + a * dt);
    double heading = e.heading + v / kWheelbase * std::tan(steer) * dt;
    heading = std::clamp(heading, -M_PI / 2 + 1e-3, M_PI / 2 - 1e-3);
    e.heading = heading;
    e.v_s = v_new * std::cos(heading);
    e.v_d = v_new * std::sin(heading);
  }

  for (size_t i = 0; i < world.traffic.size(); ++i) {
    VehicleState& st = world.traffic[i].st;
    st.v_s = std::max(0.0, st.v_s + accel[i] * dt);
    st.s += st.v_s * dt;
  }

  for (auto& ped : world.pedestrians) {
    if (!ped.active) continue;
    ped.d += ped.v_d * dt;
    if (std::abs(ped.d) > world.lanes.half_road_width() + kPedClearMargin) ped.active = false;
  }

  world.time += dt;

  // Activate scheduled crossings relative to the ego's current position.
  while (!world.pending_crossings.empty() && world.pending_crossings.front().time <= world.time) {
    const CrossingEvent ev = world.pending_crossings.front();
    world.pending_crossings.erase(world.pending_crossings.begin());
    PedestrianState ped;
    const double edge = world.lanes.half_road_width() + kPedestrianRadius;
    ped.s = world.ego.s + ev.ds_ahead;
    ped.d = ev.from_left ? edge : -edge;
    ped.v_d = ev.from_left ? -ev.speed : ev.speed;
    ped.active = true;
    world.pedestrians.push_back(ped);
  }
}

Observation observe_full(const WorldState& world, const ObsConfig& cfg) {
  Observation obs;
  obs.vehicle_slot.fill(-1);
  obs.ped_slot.fill(-1);

  const VehicleState& e = world.ego;
  obs.x[0] = e.s / cfg.s_max;
  obs.x[1] = e.d / world.lanes.lane_width;
  obs.x[2] = e.v_s / cfg.v_max_ego;
  obs.x[3] = e.v_d;
  obs.x[4] = e.heading;

  // Nearest vehicles by |dS|, ties broken by lower id.
  std::vector<size_t> order(world.traffic.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const double da = std::abs(world.traffic[a].st.s - e.s);
    const double db = std::abs(world.traffic[b].st.s - e.s);
    if (da != db) return da < db;
    return world.traffic[a].id < world.traffic[b].id;
  });

  for (int slot = 0; slot < kVehicleSlots; ++slot) {
    const int base = 5 + 5 * slot;
    if (static_cast<size_t>(slot) < order.size()) {
      const size_t idx = order[static_cast<size_t>(slot)];
      const VehicleState& o = world.traffic[idx].st;
      obs.x[base + 0] = (o.s - e.s) / cfg.s_max_rel;
      obs.x[base + 1] = (o.d - e.d) / (3.0 * world.lanes.lane_width);
      obs.x[base + 2] = (o.v_s - e.v_s) / cfg.v_max_rel;
      obs.x[base + 3] = o.v_d - e.v_d;
      obs.x[base + 4] = o.heading;
      obs.vehicle_slot[static_cast<size_t>(slot)] = static_cast<int>(idx);
    } else {
      obs.x[base + 0] = 1.0;  // distant, laterally offset phantom
      obs.x[base + 1] = 1.0;
      obs.x[base + 2] = 0.0;
      obs.x[base + 3] = 0.0;
      obs.x[base + 4] = 0.0;
    }
  }

  std::vector<size_t> peds;
  for (size_t i = 0; i < world.pedestrians.size(); ++i)
    if (world.pedestrians[i].active) peds.push_back(i);
  std::sort(peds.begin(), peds.end(), [&](size_t a, size_t b) {
    const double da = std::abs(world.pedestrians[a].s - e.s);
    const double db = std::abs(world.pedestrians[b].s - e.s);
    if (da != db) return da < db;
    return a < b;
  });

  for (int slot = 0; slot < kPedestrianSlots; ++slot) {
    const int base = 5 + 5 * kVehicleSlots + 3 * slot;
    if (static_cast<size_t>(slot) < peds.size()) {
      const PedestrianState& p = world.pedestrians[peds[static_cast<size_t>(slot)]];
      obs.x[base + 0] = (p.s - e.s) / cfg.s_max_rel;
      obs.x[base + 1] = (p.d - e.d) / (3.0 * world.lanes.lane_width);
      obs.x[base + 2] = p.v_d;
      obs.ped_slot[static_cast<size_t>(slot)] = static_cast<int>(peds[static_cast<size_t>(slot)]);
    } else {
      obs.x[base + 0] = 1.0;
      obs.x[base + 1] = 1.0;
      obs.x[base + 2] = 0.0;
    }
  }

  return obs;
}

StateVector observe(const WorldState& world, const ObsConfig& cfg) {
  return observe_full(world, cfg).x;
}

bool obb_overlap(const Obb& a, const Obb& b) {
  // Separating axis over both rectangles' edge normals; closed comparison so
  // exact edge contact counts as overlap.
  const Obb* boxes[2] = {&a, &b};
  for (const Obb* box : boxes) {
    const double axes[2][2] = {
        {std::cos(box->heading), std::sin(box->heading)},
        {-std::sin(box->heading), std::cos(box->heading)},
    };
    for (const auto& ax : axes) {
      auto project = [&](const Obb& r, double& lo, double& hi) {
        const double c = r.cx * ax[0] + r.cy * ax[1];
        const double ux = std::cos(r.heading), uy = std::sin(r.heading);
        const double ext = std::abs((ux * ax[0] + uy * ax[1])) * r.half_len +
                           std::abs((-uy * ax[0] + ux * ax[1])) * r.half_wid;
        lo = c - ext;
        hi = c + ext;
      };
      double alo, ahi, blo, bhi;
      project(a, alo, ahi);
      project(b, blo, bhi);
      if (ahi < blo || bhi < alo) return false;
    }
  }
  return true;
}

bool obb_disc_overlap(const Obb& box, double px, double py, double radius) {
  // Transform the disc center into the box frame and clamp.
  const double c = std::cos(box.heading), s = std::sin(box.heading);
  const double rx = px - box.cx, ry = py - box.cy;
  const double lx = rx * c + ry * s;
  const double ly = -rx * s + ry * c;
  const double qx = std::clamp(lx, -box.half_len, box.half_len);
  const double qy = std::clamp(ly, -box.half_wid, box.half_wid);
  const double dx = lx - qx, dy = ly - qy;
  return dx * dx + dy * dy <= radius * radius;
}

bool detect_collision(const WorldState& world) {
  const Obb ego = vehicle_obb(world.ego);
  for (const auto& tv : world.traffic)
    if (obb_overlap(ego, vehicle_obb(tv.st))) return true;
  for (const auto& ped : world.pedestrians)
    if (ped.active && obb_disc_overlap(ego, ped.s, ped.d, kPedestrianRadius)) return true;
  return false;
}

}  // namespace ssev::sim
