#pragma once

#include <cstdint>
#include <vector>

#include "ssev/rng.hpp"

namespace ssev::sim {

inline constexpr double kDt = 0.1;                 // simulation step, s
inline constexpr double kPedestrianRadius = 0.3;   // footprint disc, m
inline constexpr double kWheelbase = 2.7;          // ego bicycle model, m

struct LaneGeometry {
  int lane_count = 3;
  double lane_width = 3.5;
  double road_length = 760.0;
  std::vector<double> lane_centers;  // symmetric around d = 0

  static LaneGeometry make(int count = 3, double width = 3.5, double length = 760.0);

  double center(int lane) const { return lane_centers[static_cast<size_t>(lane)]; }
  int nearest_lane(double d) const;
  double nearest_center(double d) const { return center(nearest_lane(d)); }
  double half_road_width() const { return 0.5 * lane_width * lane_count; }
};

struct VehicleState {
  double s = 0.0;        // longitudinal position, m
  double d = 0.0;        // lateral position, m
  double v_s = 0.0;      // longitudinal speed, m/s
  double v_d = 0.0;      // lateral speed, m/s
  double heading = 0.0;  // rad, relative to road axis
  double half_length = 2.35;
  double half_width = 0.95;
};

struct TrafficVehicle {
  VehicleState st;
  double desired_speed = 10.0;  // IDM free-flow target, set at spawn
  int id = -1;
};

struct PedestrianState {
  double s = 0.0;
  double d = 0.0;
  double v_d = 0.0;  // crossing speed, signed
  bool active = false;
};

// A pre-drawn pedestrian crossing; activated when sim time passes `time`.
struct CrossingEvent {
  double time = 0.0;
  double ds_ahead = 0.0;  // longitudinal offset from ego at activation
  double speed = 0.0;
  int from_left = 0;      // 1: starts at +edge moving down, 0: at -edge moving up
};

struct IdmParams {
  double min_gap = 2.0;            // jam distance s0, m
  double time_headway = 1.5;       // s
  double max_accel = 1.5;          // m/s^2
  double comfortable_decel = 2.5;  // m/s^2, also the braking cap
  double exponent = 4.0;
};

// Traffic-model parameters (the sigma of the data-collection loop).
struct TrafficParams {
  double spawn_range = 180.0;  // m ahead of ego
  double speed_low = 8.0;
  double speed_high = 12.0;
  int vehicle_count_min = 10;
  int vehicle_count_max = 16;
  IdmParams idm;
  double pedestrian_rate = 0.05;  // expected crossings per second (scenario b)
  double min_spawn_gap = 20.0;    // same-lane center-to-center at spawn, m
  double ego_front_margin = 15.0;
};

enum class Scenario { a, b };

struct WorldState {
  VehicleState ego;
  std::vector<TrafficVehicle> traffic;
  std::vector<PedestrianState> pedestrians;
  std::vector<CrossingEvent> pending_crossings;  // sorted by time
  LaneGeometry lanes;
  TrafficParams params;
  double time = 0.0;
  Rng rng;
};

}  // namespace ssev::sim
