#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "twinloop/errors.hpp"
#include "twinloop/simcore.hpp"

using namespace twinloop;
using namespace twinloop::sim;

namespace {

World small_world(std::uint64_t seed = 1) {
  const auto sc = default_scenario();
  const auto m = resolve_multipliers(sc, seed);
  return make_world(sc, seed, "test", m.front());
}

model::Task task_for(int vid, double demand, double size) {
  model::Task t;
  t.vehicle_id = vid;
  t.demand_cycles = demand;
  t.size_bits = size;
  return t;
}

std::vector<TaskOutcomeRecord> random_run(std::uint64_t seed, double until) {
  const auto sc = default_scenario();
  const auto m = resolve_multipliers(sc, seed);
  RandomController rc(make_stream(seed, "pt/random"));
  Simulator s(make_world(sc, seed, "pt", m.front()), rc);
  s.schedule_phases(sc.phases, m);
  s.run_until(until);
  return s.take_records();
}

}  // namespace

TEST_CASE("default schedule") {
  const auto sc = default_scenario();
  REQUIRE(sc.phases.size() == 4);
  CHECK(sc.server_count() == 16);
  CHECK(sc.action_count() == 17);
  CHECK(sc.observation_size() == 52);
  CHECK(sc.horizon() == 3500.0);
  const double heavy[] = {0.05, 0.05, 0.10, 0.15, 0.25, 0.40};
  for (int i = 0; i < 6; ++i) {
    CHECK(sc.phases[0].task_type_weights[i] == doctest::Approx(1.0 / 6.0));
    CHECK(sc.phases[1].task_type_weights[i] == heavy[i]);
    CHECK(sc.phases[3].task_type_weights[i] == heavy[5 - i]);
  }
  CHECK(sc.phases[0].vehicle_count == 45);
  CHECK(sc.phases[1].vehicle_count == 65);
  CHECK(sc.phases[2].arrival_rate == doctest::Approx(1.2 / 8.0));
  CHECK(sc.phases[2].degraded_servers.size() == 8);

  int low = 0, mid = 0, high = 0;
  for (const auto& s : sc.servers) {
    const double want = s.tier == model::Tier::server_low ? 2.0e9 : s.tier == model::Tier::server_mid ? 2.5e9 : 3.5e9;
    CHECK(s.base_rate == want);
    low += s.tier == model::Tier::server_low;
    mid += s.tier == model::Tier::server_mid;
    high += s.tier == model::Tier::server_high;
  }
  CHECK(low == 4);
  CHECK(mid == 4);
  CHECK(high == 8);
  CHECK_NOTHROW(sc.validate());
}

TEST_CASE("scenario validation names the offending key") {
  auto sc = default_scenario();
  sc.phases[1].task_type_weights[0] += 0.01;
  try {
    sc.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.path() == "scenario.phases[1].task_type_weights");
  }
  sc = default_scenario();
  sc.phases[2].start_time = 1600.0;
  CHECK_THROWS_AS(sc.validate(), ConfigError);
}

TEST_CASE("observation layout") {
  World w = small_world();
  const auto obs = build_observation(w, 0, task_for(0, 2e9, 3e6));
  REQUIRE(obs.size() == 52);
  CHECK(obs[0] == w.vehicles[0].node.rate / 1e9);
  CHECK(obs[1] == 0.0);
  CHECK(obs[2] == 3e6 / 1e7);
  CHECK(obs[3] == 2e9 / 1e10);
  for (int j = 0; j < 16; ++j) {
    CHECK(obs[4 + 3 * j] == w.servers[j].rate / 1e9);
    CHECK(obs[5 + 3 * j] == 0.0);
    const double d = mobility::distance(w.vehicles[0].node.position, w.servers[j].position);
    CHECK(obs[6 + 3 * j] == model::uplink_rate(w.channel, d) / 1e7);
  }
  const auto again = build_observation(w, 0, task_for(0, 2e9, 3e6));
  CHECK(obs == again);
  for (double x : obs) CHECK(std::isfinite(x));
}

TEST_CASE("assign_task reserves cycles at decision time") {
  World w = small_world();
  w.vehicles[0].node.rate = 1e9;
  auto rec = assign_task(w, task_for(0, 1e9, 1e6), kLocalAction);
  CHECK(rec.t_e2e == 1.0);
  CHECK(rec.t_trans == 0.0);
  CHECK(w.vehicles[0].node.backlog_cycles == 1e9);

  const double f = w.servers[3].rate;
  const auto a = assign_task(w, task_for(1, 1e9, 1e6), 4);
  const auto b = assign_task(w, task_for(2, 2e9, 1e6), 4);
  CHECK(a.t_comp == 1e9 / f);
  CHECK(b.t_comp == (1e9 + 2e9) / f);
  CHECK(a.t_e2e == a.t_trans + a.t_comp);
  CHECK(b.t_e2e == b.t_trans + b.t_comp);

  const auto z = assign_task(w, task_for(3, 1e9, 0.0), 1);
  CHECK(z.t_trans == 0.0);

  CHECK_THROWS_AS(assign_task(w, task_for(0, 1e9, 1.0), 17), ActionError);
  CHECK_THROWS_AS(assign_task(w, task_for(0, 1e9, 1.0), -1), ActionError);
}

TEST_CASE("drain_backlogs") {
  std::vector<model::ComputeNode> n(3);
  n[0].rate = 1e9, n[0].backlog_cycles = 2e9;
  n[1].rate = 1e9, n[1].backlog_cycles = 0.0;
  n[2].rate = 1e9, n[2].backlog_cycles = 5e8;
  drain_backlogs(n, 1.0);
  CHECK(n[0].backlog_cycles == 1e9);
  CHECK(n[1].backlog_cycles == 0.0);
  CHECK(n[2].backlog_cycles == 0.0);
  drain_backlogs(n, 1e6);
  CHECK(n[1].backlog_cycles == 0.0);
}

TEST_CASE("lazy settle matches one-shot drain") {
  model::ComputeNode a, b;
  a.rate = b.rate = 2.5e9;
  a.backlog_cycles = b.backlog_cycles = 7e9;
  settle(a, 0.4);
  settle(a, 1.1);
  settle(a, 2.0);
  std::vector<model::ComputeNode> v{b};
  drain_backlogs(v, 2.0);
  CHECK(a.backlog_cycles == doctest::Approx(v[0].backlog_cycles).epsilon(1e-12));
  CHECK(a.updated_at == 2.0);
}

TEST_CASE("arrival process counts") {
  const auto sc = default_scenario();
  PhaseConfig ph = sc.phases[0];
  Rng rng = make_stream(4, "arr");
  const auto one = generate_arrivals(ph, sc.task_types, 0, rng);
  CHECK(one.size() >= 40);
  CHECK(one.size() <= 90);
  for (const auto& t : one) {
    CHECK(t.created_at >= ph.start_time);
    CHECK(t.created_at < ph.end_time);
  }

  std::size_t total = 0;
  for (int v = 0; v < 45; ++v) {
    Rng r = make_stream(4, "arr", static_cast<std::uint64_t>(v));
    total += generate_arrivals(ph, sc.task_types, v, r).size();
  }
  // 45 * 500 / 8 = 2812.5, sd about 53.
  CHECK(static_cast<double>(total) == doctest::Approx(2812.5).epsilon(0.1));

  ph.task_type_weights = {1, 0, 0, 0, 0, 0};
  Rng r2 = make_stream(5, "arr");
  for (const auto& t : generate_arrivals(ph, sc.task_types, 0, r2)) CHECK(t.type == 0);
}

TEST_CASE("interarrival mean") {
  Rng rng = make_stream(8, "x");
  double sum = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) sum += sample_interarrival(0.125, rng);
  CHECK(sum / n == doctest::Approx(8.0).epsilon(0.02));
}

TEST_CASE("phase transitions") {
  const auto sc = default_scenario();
  const auto mult = resolve_multipliers(sc, 21);
  World w = make_world(sc, 21, "pt", mult.front());
  w.servers[0].backlog_cycles = 3e9;
  w.servers[0].updated_at = 0.0;

  w.now = 500.0;
  auto ch = apply_phase_transition(w, sc.phases[1], 1, mult[1]);
  CHECK(w.vehicles.size() == 65);
  CHECK(ch.added.size() == 20);
  CHECK(ch.added.front() == 45);

  w.now = 1500.0;
  apply_phase_transition(w, sc.phases[2], 2, mult[2]);
  int degraded = 0;
  for (const auto& s : w.servers) {
    if (s.rate != s.base_rate) {
      ++degraded;
      CHECK(s.rate >= 0.30 * s.base_rate);
      CHECK(s.rate <= 0.50 * s.base_rate);
    }
  }
  CHECK(degraded == 8);
  CHECK(w.arrival_rate == doctest::Approx(0.15));

  w.now = 2500.0;
  apply_phase_transition(w, sc.phases[3], 3, mult[3]);
  for (const auto& s : w.servers) CHECK(s.rate == s.base_rate);
}

TEST_CASE("backlogs survive phase transitions") {
  const auto sc = default_scenario();
  const auto mult = resolve_multipliers(sc, 2);
  World w = make_world(sc, 2, "pt", mult.front());
  w.servers[5].backlog_cycles = 1e13;
  w.now = 500.0;
  apply_phase_transition(w, sc.phases[1], 1, mult[1]);
  CHECK(w.servers[5].backlog_cycles == doctest::Approx(1e13 - 500.0 * w.servers[5].rate));
}

TEST_CASE("event queue ordering") {
  EventQueue q;
  q.push({2.0, EventKind::task_arrival, 1});
  q.push({1.0, EventKind::task_arrival, 2});
  q.push({1.0, EventKind::dt_sync_apply, 3});
  q.push({1.0, EventKind::phase_transition, 4});
  q.push({1.0, EventKind::dt_trigger, 5});
  q.push({1.0, EventKind::task_arrival, 6});
  std::vector<int> order;
  while (!q.empty()) order.push_back(q.pop().subject);
  CHECK(order == std::vector<int>{4, 5, 3, 2, 6, 1});
}

TEST_CASE("nearest-rank summary") {
  std::vector<TaskOutcomeRecord> recs;
  for (int i = 1; i <= 100; ++i) {
    TaskOutcomeRecord r;
    r.decision_time = 10.0 + i;
    r.t_e2e = static_cast<double>(i);
    recs.push_back(r);
  }
  const std::vector<PhaseBounds> one{{"p", 0.0, 500.0}, {"q", 500.0, 600.0}};
  const auto s = summarise(recs, one);
  CHECK(s[0].count == 100);
  CHECK(*s[0].mean == 50.5);
  CHECK(*s[0].p90 == 90.0);
  CHECK(*s[0].p99 == 99.0);
  CHECK(s[1].count == 0);
  CHECK_FALSE(s[1].mean.has_value());
  CHECK_FALSE(s[1].p99.has_value());

  const std::vector<TaskOutcomeRecord> single{{0, 0, 0, 1.0, 0, 0, 5.0, 5.0}};
  const auto s1 = summarise(single, one);
  CHECK(*s1[0].mean == 5.0);
  CHECK(*s1[0].p90 == 5.0);
  CHECK(*s1[0].p99 == 5.0);

  CHECK(nearest_rank_percentile({3, 1, 2}, 50) == 2.0);
  CHECK(nearest_rank_percentile({7, 7, 7, 7}, 90) == 7.0);
}

TEST_CASE("random run accounting") {
  const auto sc = default_scenario();
  // sum over phases of M * lambda * duration
  double expected = 0.0;
  for (const auto& ph : sc.phases) expected += ph.vehicle_count * ph.arrival_rate * (ph.end_time - ph.start_time);
  CHECK(expected == doctest::Approx(30437.5));

  std::vector<double> hist(17, 0.0);
  double total = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto recs = random_run(seed, sc.horizon());
    CHECK(static_cast<double>(recs.size()) == doctest::Approx(expected).epsilon(0.05));
    const auto bounds = phase_bounds(sc.phases);
    for (const auto& r : recs) {
      hist[static_cast<std::size_t>(r.action)] += 1.0;
      total += 1.0;
      REQUIRE(r.decision_time >= bounds[static_cast<std::size_t>(r.phase)].start);
      REQUIRE(r.decision_time < bounds[static_cast<std::size_t>(r.phase)].end);
      if (r.action == kLocalAction) {
        REQUIRE(r.t_trans == 0.0);
      } else {
        REQUIRE(r.t_e2e == r.t_trans + r.t_comp);
      }
    }
    const auto summary = summarise(recs, bounds);
    CHECK(*summary[2].mean > 10.0 * *summary[0].mean);
  }
  for (double h : hist) CHECK(std::abs(h / total - 1.0 / 17.0) < 0.01);
}

TEST_CASE("duration zero yields no tasks") {
  CHECK(random_run(3, 0.0).empty());
}

TEST_CASE("records csv round trip") {
  const auto recs = random_run(6, 300.0);
  REQUIRE(!recs.empty());
  std::stringstream ss;
  write_records_csv(ss, recs);
  std::string header;
  std::getline(std::stringstream(ss.str()), header);
  CHECK(header == kRecordCsvHeader);
  const auto back = read_records_csv(ss);
  CHECK(back == recs);

  std::stringstream bad("task_id,vehicle_id\n1,2\n");
  CHECK_THROWS_AS(read_records_csv(bad), LoadError);
}

TEST_CASE("association range masks distant servers") {
  auto sc = default_scenario();
  sc.max_association_range = 400.0;
  const auto m = resolve_multipliers(sc, 1);
  World w = make_world(sc, 1, "pt", m.front());
  const auto mask = action_mask(w, 0);
  CHECK(mask[0]);
  for (int j = 0; j < 16; ++j) {
    const double d = mobility::distance(w.vehicles[0].node.position, w.servers[j].position);
    CHECK(mask[j + 1] == (d <= 400.0));
  }
  RandomController rc(make_stream(1, "r"));
  for (int i = 0; i < 200; ++i) {
    const auto a = rc.decide(w, 0, {});
    CHECK(mask[static_cast<std::size_t>(a)]);
  }
}
