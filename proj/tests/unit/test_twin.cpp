#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "twinloop/errors.hpp"
#include "twinloop/twin.hpp"

using namespace twinloop;
using namespace twinloop::twin;

namespace {

struct Pt {
  sim::ScenarioConfig sc = sim::default_scenario();
  learner::Hyperparams hp;
  learner::AgentTeam team;
  std::unique_ptr<sim::Simulator> sim;

  Pt(std::uint64_t seed, double until) : team(hp, learner::network_shape(sc, hp), seed, "pt") {
    const auto m = sim::resolve_multipliers(sc, seed);
    sim::World w = sim::make_world(sc, seed, "pt", m.front());
    for (const auto& v : w.vehicles) team.add_fresh(v.kinematics.vehicle_id);
    sim = std::make_unique<sim::Simulator>(std::move(w), team);
    sim->schedule_phases(sc.phases, m);
    sim->run_until(until);
  }
};

model::Task probe_task(int vid) {
  model::Task t;
  t.vehicle_id = vid;
  t.demand_cycles = 3e9;
  t.size_bits = 2e6;
  return t;
}

}  // namespace

TEST_CASE("trigger schedule") {
  const auto phases = sim::default_scenario().phases;
  CHECK(schedule_triggers(phases, 0).triggers.empty());
  const auto k1 = schedule_triggers(phases, 1);
  REQUIRE(k1.triggers.size() == 3);
  CHECK(k1.triggers[0].time == 500.0);
  CHECK(k1.triggers[1].time == 1500.0);
  CHECK(k1.triggers[2].time == 2500.0);
  const auto k4 = schedule_triggers(phases, 4);
  REQUIRE(k4.triggers.size() == 12);
  CHECK(k4.triggers[0].time == 500.0);
  CHECK(k4.triggers[1].time == 750.0);
  CHECK(k4.triggers[2].time == 1000.0);
  CHECK(k4.triggers[3].time == 1250.0);
  for (const auto& t : k4.triggers) {
    const auto& ph = phases[static_cast<std::size_t>(t.phase)];
    CHECK(t.time >= ph.start_time);
    CHECK(t.time < ph.end_time);
  }
  CHECK_THROWS_AS(schedule_triggers(phases, -1), ParameterError);
}

TEST_CASE("sync latency") {
  DTConfig c;
  CHECK(c.effective_sync_latency() == 20.0);
  c.scenario_count = 3;
  CHECK(c.effective_sync_latency() == 60.0);
  c.sync_latency = 0.0;
  CHECK(c.effective_sync_latency() == 0.0);
  c.t_dt = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("snapshot at the phase-1 boundary holds 65 vehicles and agents") {
  Pt pt(4, 500.0);
  // the t=500 transition fires only once run_until passes it
  pt.sim->run_until(500.0 + 1e-9);
  const auto snap = capture_snapshot(pt.sim->world(), pt.team, 500.0 + 1e-9);
  CHECK(snap.vehicles.size() == 65);
  CHECK(snap.agent_weights.size() == 65);
  CHECK(snap.servers.size() == 16);
  CHECK(snap.arrival_rate == 0.125);
  CHECK(snap.phase_index == 1);
}

TEST_CASE("snapshots are immutable and deterministic") {
  Pt pt(5, 321.0);
  const auto a = capture_snapshot(pt.sim->world(), pt.team, 321.0);
  const auto b = capture_snapshot(pt.sim->world(), pt.team, 321.0);
  CHECK(a == b);
  const auto fp = fingerprint(a);
  pt.sim->world().servers[0].backlog_cycles += 1e9;
  pt.sim->run_until(400.0);
  CHECK(fingerprint(a) == fp);
  CHECK_FALSE(capture_snapshot(pt.sim->world(), pt.team, 400.0) == a);
}

TEST_CASE("capture does not touch the physical world") {
  Pt pt(6, 250.0);
  const sim::World before = pt.sim->world();
  capture_snapshot(pt.sim->world(), pt.team, 260.0);
  const auto& w = pt.sim->world();
  CHECK(w.now == before.now);
  CHECK(w.servers == before.servers);
  for (std::size_t i = 0; i < w.vehicles.size(); ++i) {
    CHECK(w.vehicles[i].node == before.vehicles[i].node);
    CHECK(w.vehicles[i].kinematics == before.vehicles[i].kinematics);
  }
  CHECK(w.mobility_rng == before.mobility_rng);
}

TEST_CASE("snapshot encoding round trips") {
  Pt pt(7, 200.0);
  const auto snap = capture_snapshot(pt.sim->world(), pt.team, 200.0, true);
  const auto back = decode_snapshot(encode_snapshot(snap));
  CHECK(back == snap);
  CHECK(back.servers == snap.servers);
  CHECK(back.vehicles == snap.vehicles);
  CHECK(back.agent_weights == snap.agent_weights);
  const auto path = std::filesystem::temp_directory_path() / "twinloop_snapshot_test.bin";
  save_snapshot(path.string(), snap);
  CHECK(load_snapshot(path.string()) == snap);
  std::filesystem::remove(path);
  auto bytes = encode_snapshot(snap);
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS_AS(decode_snapshot(bytes), LoadError);
}

TEST_CASE("reconstructed twin reproduces the capture-time observations") {
  Pt pt(8, 777.0);
  const double at = 777.5;
  const auto snap = capture_snapshot(pt.sim->world(), pt.team, at);
  sim::World copy = pt.sim->world();
  copy.now = at;
  sim::advance_mobility(copy, at);

  const auto env = reconstruct_env(snap, pt.sc, pt.hp, {8, "twin/x/0"});
  sim::World twin = env.world;
  for (std::size_t v = 0; v < copy.vehicles.size(); ++v) {
    const int id = static_cast<int>(v);
    CHECK(sim::build_observation(twin, id, probe_task(id)) == sim::build_observation(copy, id, probe_task(id)));
  }
  Rng srng = make_stream(8, "probe");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 5; ++k) {
    std::vector<double> s(52);
    for (auto& x : s) x = u(srng);
    for (int id : {0, 17, 60}) {
      const auto qa = learner::forward_q(pt.team.agent(id).online, s);
      const auto qb = learner::forward_q(env.team.agent(id).online, s);
      CHECK(qa == qb);
    }
  }
}

TEST_CASE("different twin streams give different routes from the same state") {
  Pt pt(9, 300.0);
  const auto snap = capture_snapshot(pt.sim->world(), pt.team, 300.0);
  sim::World a = reconstruct_world(snap, pt.sc, {9, "twin/a"});
  sim::World b = reconstruct_world(snap, pt.sc, {9, "twin/b"});
  for (std::size_t i = 0; i < a.vehicles.size(); ++i) {
    CHECK(a.vehicles[i].kinematics.position == b.vehicles[i].kinematics.position);
  }
  sim::advance_mobility(a, 400.0);
  sim::advance_mobility(b, 400.0);
  int differ = 0;
  for (std::size_t i = 0; i < a.vehicles.size(); ++i) {
    differ += !(a.vehicles[i].kinematics.position == b.vehicles[i].kinematics.position);
  }
  CHECK(differ > 0);
}

TEST_CASE("perturbation bounds") {
  Pt pt(10, 100.0);
  const auto snap = capture_snapshot(pt.sim->world(), pt.team, 100.0);
  Rng r0 = make_stream(1, "p");
  CHECK(perturb_scenario(snap, 0.0, r0).is_identity());
  Rng r = make_stream(2, "p");
  const auto p = perturb_scenario(snap, 0.05, r);
  CHECK(p.speed.size() == snap.vehicles.size());
  for (const auto& [id, f] : p.speed) {
    CHECK(f >= 0.95);
    CHECK(f <= 1.05);
    CHECK(10.0 * f >= 9.5);
    CHECK(10.0 * f <= 10.5);
  }
  for (double f : p.demand) {
    CHECK(1e10 * f >= 0.95e10);
    CHECK(1e10 * f <= 1.05e10);
  }
  const auto w = reconstruct_world(snap, pt.sc, {1, "twin/p"}, &p);
  for (std::size_t i = 0; i < w.task_types.size(); ++i) {
    CHECK(w.task_types[i].demand_cycles == snap.task_types[i].demand_cycles * p.demand[i]);
  }
  CHECK(w.servers == snap.servers);
  CHECK(w.arrival_rate == snap.arrival_rate);
  CHECK_THROWS_AS(perturb_scenario(snap, 1.0, r), ParameterError);
}

TEST_CASE("twin training") {
  Pt pt(11, 600.0);
  const auto snap = capture_snapshot(pt.sim->world(), pt.team, 600.0);

  SUBCASE("zero budget leaves the weights alone") {
    auto env = reconstruct_env(snap, pt.sc, pt.hp, {11, "twin/z"});
    DTConfig cfg;
    cfg.t_dt = 1e-9;
    const auto stats = dt_train(env, cfg);
    CHECK(stats.decisions == 0);
    CHECK(env.team.export_weights() == snap.agent_weights);
  }

  SUBCASE("decision count and buffer pairing") {
    learner::Hyperparams hp = pt.hp;
    hp.batch_size = 4;
    auto env = reconstruct_env(snap, pt.sc, hp, {11, "twin/d"});
    DTConfig cfg;
    cfg.t_dt = 100.0;
    const auto stats = dt_train(env, cfg);
    // 65 vehicles * 100 s / 8 s
    CHECK(static_cast<double>(stats.decisions) == doctest::Approx(812.5).epsilon(0.15));
    std::uint64_t buffered = 0, active = 0;
    for (int id : env.team.ids()) {
      buffered += env.team.agent(id).buffer.size();
      active += env.team.agent(id).decisions > 0;
    }
    CHECK(buffered == stats.decisions - active);
    CHECK(stats.train_steps > 0);
  }

  SUBCASE("temperature is reset and annealed") {
    auto env = reconstruct_env(snap, pt.sc, pt.hp, {11, "twin/t"});
    DTConfig cfg;
    cfg.t_dt = 200.0;
    reset_exploration(env.team, pt.hp, cfg, 0.125, 200.0);
    for (int id : env.team.ids()) CHECK(env.team.agent(id).tau == pt.hp.tau0);
    const double decay = env.team.agent(0).tau_decay;
    CHECK(std::pow(decay, 0.125 * 200.0 * 0.8) * pt.hp.tau0 == doctest::Approx(pt.hp.tau_min).epsilon(1e-9));
  }

  SUBCASE("multi-scenario chaining") {
    DTConfig cfg;
    cfg.t_dt = 50.0;
    cfg.scenario_count = 3;
    learner::Hyperparams hp = pt.hp;
    hp.batch_size = 4;
    const auto r = run_trigger(snap, pt.sc, hp, cfg, 11, 0);
    CHECK(r.scenarios == 3);
    CHECK(r.weights.size() == snap.agent_weights.size());
    CHECK_FALSE(r.weights == snap.agent_weights);
    cfg.scenario_count = 1;
    const auto single = run_trigger(snap, pt.sc, pt.hp, cfg, 11, 0);
    auto env = reconstruct_env(snap, pt.sc, pt.hp, {11, "twin/0/0"});
    dt_train(env, cfg);
    CHECK(single.weights == env.team.export_weights());
  }
}

TEST_CASE("weight sync") {
  Pt pt(12, 300.0);
  const auto snap = capture_snapshot(pt.sim->world(), pt.team, 300.0);
  DTConfig cfg;
  cfg.t_dt = 60.0;
  const auto r = run_trigger(snap, pt.sc, pt.hp, cfg, 12, 0);
  Rng clone = make_stream(12, "sync");

  const double tau_before = pt.team.agent(3).tau;
  const auto rep = sync_weights(pt.team, r.weights, false, clone);
  CHECK_FALSE(rep.mismatch());
  CHECK(rep.applied.size() == 45);
  CHECK(pt.team.export_weights() == r.weights);
  CHECK(pt.team.agent(3).tau == tau_before);

  const auto again = sync_weights(pt.team, pt.team.export_weights(), false, clone);
  CHECK(pt.team.export_weights() == r.weights);
  CHECK(again.applied.size() == 45);

  sync_weights(pt.team, r.weights, true, clone);
  for (int id : pt.team.ids()) CHECK(pt.team.agent(id).tau == pt.hp.tau_min);

  auto partial = r.weights;
  partial.erase(0);
  partial[99] = r.weights.at(1);
  const auto mis = sync_weights(pt.team, partial, false, clone);
  CHECK(mis.mismatch());
  CHECK(mis.cloned == std::vector<int>{0});
  CHECK(mis.ignored == std::vector<int>{99});
}
