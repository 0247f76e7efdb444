#include "twinloop/mobility.hpp"

#include <array>
#include <cmath>
#include <string>

#include "twinloop/errors.hpp"

namespace twinloop::mobility {

namespace {

constexpr double kEps = 1e-9;

bool is_horizontal(Heading h) { return h == Heading::east || h == Heading::west; }

Heading reverse(Heading h) {
  switch (h) {
    case Heading::north: return Heading::south;
    case Heading::south: return Heading::north;
    case Heading::east: return Heading::west;
    case Heading::west: return Heading::east;
  }
  return h;
}

double sign(Heading h) { return (h == Heading::north || h == Heading::east) ? 1.0 : -1.0; }

double& along(Vec2& p, Heading h) { return is_horizontal(h) ? p.x : p.y; }
double along(const Vec2& p, Heading h) { return is_horizontal(h) ? p.x : p.y; }

// Distance to the next intersection strictly ahead, or a negative value if
// the road ends here.
double distance_to_next(const RoadGrid& grid, const Vec2& p, Heading h) {
  const double c = along(p, h);
  const double b = grid.block_length;
  double target;
  if (sign(h) > 0) {
    target = (std::floor(c / b + kEps) + 1.0) * b;
    if (target > grid.extent + kEps) return -1.0;
  } else {
    target = (std::ceil(c / b - kEps) - 1.0) * b;
    if (target < -kEps) return -1.0;
  }
  return std::abs(target - c);
}

bool road_ahead(const RoadGrid& grid, const Vec2& p, Heading h) {
  return distance_to_next(grid, p, h) > 0.0;
}

Heading choose_turn(const RoadGrid& grid, const Vec2& at, Heading current, Rng& rng) {
  std::array<Heading, 4> options{};
  std::size_t n = 0;
  for (Heading h : {Heading::north, Heading::south, Heading::east, Heading::west}) {
    if (h == reverse(current)) continue;
    if (road_ahead(grid, at, h)) options[n++] = h;
  }
  if (n == 0) return reverse(current);  // dead end
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  return options[pick(rng)];
}

}  // namespace

int RoadGrid::lines() const { return static_cast<int>(std::floor(extent / block_length + kEps)) + 1; }

std::vector<Vec2> RoadGrid::rsu_positions() const {
  // RSUs sit at the centre of every 2x2 block group.
  std::vector<Vec2> out;
  const double pitch = 2.0 * block_length;
  const int per_axis = static_cast<int>(std::floor(extent / pitch + kEps));
  for (int r = 0; r < per_axis; ++r) {
    for (int c = 0; c < per_axis; ++c) {
      out.push_back({block_length + c * pitch, block_length + r * pitch});
    }
  }
  return out;
}

bool RoadGrid::contains(Vec2 p) const {
  return p.x >= -kEps && p.x <= extent + kEps && p.y >= -kEps && p.y <= extent + kEps;
}

bool RoadGrid::on_road(Vec2 p) const {
  if (!contains(p)) return false;
  auto on_line = [this](double c) {
    const double k = std::round(c / block_length);
    return std::abs(c - k * block_length) < 1e-6;
  };
  return on_line(p.x) || on_line(p.y);
}

std::vector<VehicleKinematics> spawn_vehicles(const RoadGrid& grid, int count, int first_id,
                                              SpeedRange speeds, Rng& rng) {
  if (count < 0) throw ParameterError("vehicle count must be non-negative");
  std::vector<VehicleKinematics> out;
  out.reserve(static_cast<std::size_t>(count));
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<int> line(0, grid.lines() - 1);
  std::uniform_real_distribution<double> offset(0.0, grid.extent);
  std::uniform_real_distribution<double> speed(speeds.min, speeds.max);
  for (int i = 0; i < count; ++i) {
    VehicleKinematics v;
    v.vehicle_id = first_id + i;
    const bool horizontal = coin(rng);
    const double fixed = line(rng) * grid.block_length;
    const double free = offset(rng);
    v.position = horizontal ? Vec2{free, fixed} : Vec2{fixed, free};
    const bool forward = coin(rng);
    v.heading = horizontal ? (forward ? Heading::east : Heading::west)
                           : (forward ? Heading::north : Heading::south);
    if (!road_ahead(grid, v.position, v.heading)) v.heading = reverse(v.heading);
    v.speed = speed(rng);
    out.push_back(v);
  }
  return out;
}

void advance(const RoadGrid& grid, VehicleKinematics& vehicle, double dt, Rng& rng) {
  double remaining = vehicle.speed * dt;
  while (remaining > 0.0) {
    double gap = distance_to_next(grid, vehicle.position, vehicle.heading);
    if (gap <= 0.0) {
      vehicle.heading = choose_turn(grid, vehicle.position, vehicle.heading, rng);
      continue;
    }
    if (remaining < gap) {
      along(vehicle.position, vehicle.heading) += sign(vehicle.heading) * remaining;
      return;
    }
    // Snap onto the intersection so the cross coordinate stays exact.
    double& c = along(vehicle.position, vehicle.heading);
    c = std::round((c + sign(vehicle.heading) * gap) / grid.block_length) * grid.block_length;
    remaining -= gap;
    vehicle.heading = choose_turn(grid, vehicle.position, vehicle.heading, rng);
  }
}

void step(const RoadGrid& grid, std::span<VehicleKinematics> vehicles, double dt, Rng& rng) {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw ParameterError("mobility step requires dt > 0, got " + std::to_string(dt));
  }
  for (auto& v : vehicles) advance(grid, v, dt, rng);
}

void reassign_route(const RoadGrid& grid, VehicleKinematics& vehicle, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  if (coin(rng)) vehicle.heading = reverse(vehicle.heading);
  if (!road_ahead(grid, vehicle.position, vehicle.heading)) {
    vehicle.heading = reverse(vehicle.heading);
  }
}

double distance(Vec2 a, Vec2 b) {
  const double d = std::hypot(a.x - b.x, a.y - b.y);
  return d < model::kMinDistance ? model::kMinDistance : d;
}

}  // namespace twinloop::mobility
