#pragma once

#include <array>
#include <limits>
#include <stdexcept>
#include <string>

#include "ssev/sim_types.hpp"

namespace ssev::sim {

class SimError : public std::runtime_error {
 public:
  explicit SimError(const std::string& what) : std::runtime_error(what) {}
};

// Fixed-length normalized observation (Table-style layout):
// 5 ego features, 5 x 5 vehicle slots, 3 x 2 pedestrian slots.
inline constexpr int kStateDim = 36;
inline constexpr int kVehicleSlots = 5;
inline constexpr int kPedestrianSlots = 2;

using StateVector = std::array<double, kStateDim>;

struct ObsConfig {
  double s_max = 760.0;      // ego longitudinal normalizer
  double s_max_rel = 200.0;  // relative longitudinal normalizer
  double v_max_rel = 11.11;  // relative speed normalizer
  double v_max_ego = 15.0;   // ego speed normalizer
};

// Observation plus the world indices occupying each slot (-1 = padded).
// The slot map lets the shield pull a vehicle's importance score back out.
struct Observation {
  StateVector x{};
  std::array<int, kVehicleSlots> vehicle_slot{};
  std::array<int, kPedestrianSlots> ped_slot{};
};

struct EgoControls {
  double steer = 0.0;  // rad
  double accel = 0.0;  // m/s^2
};

WorldState spawn_scenario(std::uint64_t seed, Scenario scenario, const TrafficParams& params,
                          const LaneGeometry& lanes = LaneGeometry::make());

void step_world(WorldState& world, const EgoControls& controls, double dt = kDt);

// IDM acceleration toward `v_desired` behind a leader at net distance `gap`
// (use +inf when there is no leader). gap <= 0 reports the braking cap.
double traffic_accel(double gap, double v, double v_leader, double v_desired,
                     const IdmParams& idm);

Observation observe_full(const WorldState& world, const ObsConfig& cfg = {});
StateVector observe(const WorldState& world, const ObsConfig& cfg = {});

// Closed-set overlap test between the ego rectangle and any traffic
// rectangle or pedestrian disc.
bool detect_collision(const WorldState& world);

// Oriented-rectangle overlap (separating axis, closed set). Exposed for the
// collision tests.
struct Obb {
  double cx, cy, heading, half_len, half_wid;
};
bool obb_overlap(const Obb& a, const Obb& b);
bool obb_disc_overlap(const Obb& a, double px, double py, double radius);

inline Obb vehicle_obb(const VehicleState& v) {
  return Obb{v.s, v.d, v.heading, v.half_length, v.half_width};
}

}  // namespace ssev::sim
