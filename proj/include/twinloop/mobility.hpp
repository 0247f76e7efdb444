#pragma once

// Manhattan-grid random-turn mobility and RSU placement.

#include <span>
#include <vector>

#include "twinloop/model.hpp"
#include "twinloop/rng.hpp"

namespace twinloop::mobility {

struct RoadGrid {
  double extent = 2000.0;        // square side, metres
  double block_length = 250.0;   // spacing of the intersection lattice

  int lines() const;             // roads per axis, e.g. 9 for the defaults
  /// 4x4 lattice at {250, 750, 1250, 1750}^2 for the defaults.
  std::vector<Vec2> rsu_positions() const;
  bool on_road(Vec2 p) const;
  bool contains(Vec2 p) const;

  friend bool operator==(const RoadGrid&, const RoadGrid&) = default;
};

enum class Heading { north, south, east, west };

struct VehicleKinematics {
  int vehicle_id = 0;
  Vec2 position;
  Heading heading = Heading::east;
  double speed = 10.0;  // m/s

  friend bool operator==(const VehicleKinematics&, const VehicleKinematics&) = default;
};

struct SpeedRange {
  double min = 8.0;
  double max = 14.0;

  friend bool operator==(const SpeedRange&, const SpeedRange&) = default;
};

/// Places `count` vehicles uniformly on the road edges, with ids starting at
/// `first_id` and speeds uniform in `speeds`.
std::vector<VehicleKinematics> spawn_vehicles(const RoadGrid& grid, int count, int first_id,
                                              SpeedRange speeds, Rng& rng);

/// Advances one vehicle by speed*dt along the road, turning at intersections.
void advance(const RoadGrid& grid, VehicleKinematics& vehicle, double dt, Rng& rng);

/// Advances every vehicle in order. Throws ParameterError if dt <= 0.
void step(const RoadGrid& grid, std::span<VehicleKinematics> vehicles, double dt, Rng& rng);

/// Picks a new direction of travel along the vehicle's current road.
void reassign_route(const RoadGrid& grid, VehicleKinematics& vehicle, Rng& rng);

/// Euclidean distance clamped below at model::kMinDistance.
double distance(Vec2 a, Vec2 b);

}  // namespace twinloop::mobility
