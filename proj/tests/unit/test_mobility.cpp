#include "doctest.h"

#include <cmath>

#include "twinloop/errors.hpp"
#include "twinloop/mobility.hpp"

using namespace twinloop;
using namespace twinloop::mobility;

TEST_CASE("default grid and RSU lattice") {
  const RoadGrid grid;
  CHECK(grid.lines() == 9);
  const auto rsu = grid.rsu_positions();
  REQUIRE(rsu.size() == 16);
  int k = 0;
  for (double y : {250.0, 750.0, 1250.0, 1750.0}) {
    for (double x : {250.0, 750.0, 1250.0, 1750.0}) {
      bool found = false;
      for (const auto& p : rsu) found = found || (p.x == x && p.y == y);
      CHECK(found);
      ++k;
    }
  }
  CHECK(k == 16);
}

TEST_CASE("spawn places vehicles on roads inside the extent") {
  const RoadGrid grid;
  Rng rng = make_stream(7, "spawn");
  CHECK(spawn_vehicles(grid, 0, 0, {}, rng).empty());

  Rng a = make_stream(11, "spawn");
  Rng b = make_stream(11, "spawn");
  const auto va = spawn_vehicles(grid, 45, 0, {}, a);
  const auto vb = spawn_vehicles(grid, 45, 0, {}, b);
  REQUIRE(va.size() == 45);
  CHECK(va == vb);
  for (int i = 0; i < 45; ++i) {
    CHECK(va[i].vehicle_id == i);
    CHECK(grid.contains(va[i].position));
    CHECK(grid.on_road(va[i].position));
    CHECK(va[i].speed >= 8.0);
    CHECK(va[i].speed <= 14.0);
  }
}

TEST_CASE("mid-edge vehicle heading east moves exactly speed*dt") {
  const RoadGrid grid;
  VehicleKinematics v;
  v.position = {110.0, 500.0};
  v.heading = Heading::east;
  v.speed = 10.0;
  Rng rng = make_stream(1, "t");
  advance(grid, v, 1.0, rng);
  CHECK(v.position.x == 120.0);
  CHECK(v.position.y == 500.0);
}

TEST_CASE("step rejects non-positive dt") {
  const RoadGrid grid;
  Rng rng = make_stream(1, "t");
  auto vs = spawn_vehicles(grid, 3, 0, {}, rng);
  CHECK_THROWS_AS(step(grid, vs, 0.0, rng), ParameterError);
  CHECK_THROWS_AS(step(grid, vs, -1.0, rng), ParameterError);
}

TEST_CASE("vehicles stay on the grid over long runs and trajectories are reproducible") {
  const RoadGrid grid;
  Rng s1 = make_stream(3, "spawn"), s2 = make_stream(3, "spawn");
  auto a = spawn_vehicles(grid, 30, 0, {}, s1);
  auto b = spawn_vehicles(grid, 30, 0, {}, s2);
  Rng m1 = make_stream(3, "move"), m2 = make_stream(3, "move");
  for (int t = 0; t < 2000; ++t) {
    const double dt = 0.37 + 0.11 * (t % 7);
    step(grid, a, dt, m1);
    step(grid, b, dt, m2);
    for (const auto& v : a) {
      REQUIRE(grid.contains(v.position));
      REQUIRE(grid.on_road(v.position));
    }
  }
  CHECK(a == b);
}

TEST_CASE("corner vehicles turn instead of leaving the grid") {
  const RoadGrid grid;
  VehicleKinematics v;
  v.position = {1995.0, 0.0};
  v.heading = Heading::east;
  v.speed = 10.0;
  Rng rng = make_stream(5, "t");
  advance(grid, v, 1.0, rng);
  CHECK(grid.contains(v.position));
  CHECK(v.position.x == 2000.0);
  CHECK(v.position.y == doctest::Approx(5.0));
  CHECK(v.heading == Heading::north);
}

TEST_CASE("distance") {
  CHECK(distance({0, 0}, {3, 4}) == 5.0);
  CHECK(distance({42, 17}, {42, 17}) == 1.0);
  CHECK(distance({250, 250}, {1750, 1750}) == doctest::Approx(2121.32).epsilon(1e-6));
  CHECK(distance({250, 250}, {1750, 1750}) == std::hypot(1500.0, 1500.0));
  CHECK(distance({1, 9}, {7, 2}) == distance({7, 2}, {1, 9}));
}

TEST_CASE("route reassignment keeps the vehicle where it is") {
  const RoadGrid grid;
  Rng rng = make_stream(9, "t");
  auto vs = spawn_vehicles(grid, 20, 0, {}, rng);
  for (auto& v : vs) {
    const auto before = v.position;
    reassign_route(grid, v, rng);
    CHECK(v.position == before);
  }
}
