#include "twinloop/twin.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "twinloop/errors.hpp"

namespace twinloop::twin {

using nlohmann::json;

double DTConfig::effective_sync_latency() const {
  return sync_latency.value_or(static_cast<double>(scenario_count) * t_dt / speedup);
}

void DTConfig::validate() const {
  auto need = [](bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError("dt." + key, what);
  };
  need(std::isfinite(t_dt) && t_dt > 0.0, "t_dt", "must be positive");
  need(scenario_count >= 1, "scenario_count", "must be >= 1");
  need(perturbation >= 0.0 && perturbation < 1.0, "perturbation", "must lie in [0, 1)");
  need(std::isfinite(speedup) && speedup > 0.0, "speedup", "must be positive");
  need(!tau_reset || (*tau_reset > 0.0 && std::isfinite(*tau_reset)), "tau_reset", "must be positive");
  need(tau_floor_fraction > 0.0 && tau_floor_fraction <= 1.0, "tau_floor_fraction",
       "must lie in (0, 1]");
  need(!sync_latency || (*sync_latency >= 0.0 && std::isfinite(*sync_latency)), "sync_latency",
       "must be >= 0");
}

TriggerSchedule schedule_triggers(const std::vector<sim::PhaseConfig>& phases, int k) {
  if (k < 0) throw ParameterError("triggers per phase must be non-negative");
  TriggerSchedule s;
  s.k = k;
  for (std::size_t i = 1; i < phases.size(); ++i) {
    const double length = phases[i].end_time - phases[i].start_time;
    for (int m = 0; m < k; ++m) {
      s.triggers.push_back({phases[i].start_time + m * length / k, static_cast<int>(i)});
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Snapshot capture and codec

Snapshot capture_snapshot(const sim::World& world, const learner::AgentTeam& team, double at,
                          bool include_replay) {
  if (at < world.now) throw ParameterError("cannot capture a snapshot in the past");
  sim::World copy = world;
  copy.now = at;
  sim::advance_mobility(copy, at);
  for (auto& s : copy.servers) sim::settle(s, at);
  for (auto& v : copy.vehicles) sim::settle(v.node, at);

  Snapshot snap;
  snap.captured_at = at;
  snap.phase_index = copy.phase_index;
  snap.servers = copy.servers;
  for (const auto& v : copy.vehicles) snap.vehicles.push_back({v.node, v.kinematics});
  snap.arrival_rate = copy.arrival_rate;
  snap.task_type_weights = copy.task_type_weights;
  snap.task_types = copy.task_types;
  snap.agent_weights = team.export_weights();
  if (include_replay) {
    for (int id : team.ids()) {
      const auto& buf = team.agent(id).buffer;
      auto& out = snap.replay[id];
      for (std::size_t i = 0; i < buf.size(); ++i) out.push_back(buf[i]);
    }
  }
  return snap;
}

namespace {

constexpr const char* kSnapshotFormat = "twinloop-snapshot";
constexpr int kSnapshotVersion = 1;

json node_to_json(const model::ComputeNode& n) {
  return {{"id", n.node_id},          {"tier", model::to_string(n.tier)}, {"rate", n.rate},
          {"base_rate", n.base_rate}, {"backlog", n.backlog_cycles},      {"x", n.position.x},
          {"y", n.position.y},        {"updated_at", n.updated_at}};
}

model::ComputeNode node_from_json(const json& j) {
  model::ComputeNode n;
  n.node_id = j.at("id").get<int>();
  n.tier = model::tier_from_string(j.at("tier").get<std::string>());
  n.rate = j.at("rate").get<double>();
  n.base_rate = j.at("base_rate").get<double>();
  n.backlog_cycles = j.at("backlog").get<double>();
  n.position = {j.at("x").get<double>(), j.at("y").get<double>()};
  n.updated_at = j.at("updated_at").get<double>();
  return n;
}

json to_json(const Snapshot& s) {
  json servers = json::array();
  for (const auto& n : s.servers) servers.push_back(node_to_json(n));
  json vehicles = json::array();
  for (const auto& v : s.vehicles) {
    json j = node_to_json(v.node);
    j["heading"] = static_cast<int>(v.kinematics.heading);
    j["speed"] = v.kinematics.speed;
    j["kx"] = v.kinematics.position.x;
    j["ky"] = v.kinematics.position.y;
    vehicles.push_back(std::move(j));
  }
  json types = json::array();
  for (const auto& t : s.task_types) {
    types.push_back({{"id", t.id}, {"demand_cycles", t.demand_cycles}, {"data_bits", t.data_bits}});
  }
  json agents = json::array();
  for (const auto& [id, w] : s.agent_weights) {
    agents.push_back({{"id", id}, {"online", json::binary(w.online)}, {"target", json::binary(w.target)}});
  }
  json replay = json::array();
  for (const auto& [id, ts] : s.replay) {
    json items = json::array();
    for (const auto& t : ts) items.push_back({{"s", t.s}, {"a", t.a}, {"r", t.r}, {"s_next", t.s_next}});
    replay.push_back({{"id", id}, {"transitions", std::move(items)}});
  }
  return {{"format", kSnapshotFormat},
          {"version", kSnapshotVersion},
          {"captured_at", s.captured_at},
          {"phase_index", s.phase_index},
          {"arrival_rate", s.arrival_rate},
          {"task_type_weights", s.task_type_weights},
          {"task_types", types},
          {"servers", servers},
          {"vehicles", vehicles},
          {"agents", agents},
          {"replay", replay}};
}

Snapshot from_json(const json& j) {
  if (j.at("format") != kSnapshotFormat) throw LoadError("not a snapshot");
  if (j.at("version").get<int>() != kSnapshotVersion) throw LoadError("unsupported snapshot version");
  Snapshot s;
  s.captured_at = j.at("captured_at").get<double>();
  s.phase_index = j.at("phase_index").get<int>();
  s.arrival_rate = j.at("arrival_rate").get<double>();
  s.task_type_weights = j.at("task_type_weights").get<std::vector<double>>();
  for (const auto& t : j.at("task_types")) {
    s.task_types.push_back({t.at("id").get<int>(), t.at("demand_cycles").get<double>(),
                            t.at("data_bits").get<double>()});
  }
  for (const auto& n : j.at("servers")) s.servers.push_back(node_from_json(n));
  for (const auto& v : j.at("vehicles")) {
    VehicleState vs;
    vs.node = node_from_json(v);
    vs.kinematics.vehicle_id = vs.node.node_id;
    vs.kinematics.position = {v.at("kx").get<double>(), v.at("ky").get<double>()};
    const int heading = v.at("heading").get<int>();
    if (heading < 0 || heading > 3) throw LoadError("bad heading in snapshot");
    vs.kinematics.heading = static_cast<mobility::Heading>(heading);
    vs.kinematics.speed = v.at("speed").get<double>();
    s.vehicles.push_back(vs);
  }
  for (const auto& a : j.at("agents")) {
    learner::AgentWeights w;
    w.online = a.at("online").get_binary();
    w.target = a.at("target").get_binary();
    s.agent_weights.emplace(a.at("id").get<int>(), std::move(w));
  }
  for (const auto& r : j.at("replay")) {
    auto& out = s.replay[r.at("id").get<int>()];
    for (const auto& t : r.at("transitions")) {
      out.push_back({t.at("s").get<std::vector<double>>(), t.at("a").get<int>(), t.at("r").get<double>(),
                     t.at("s_next").get<std::vector<double>>()});
    }
  }
  return s;
}

}  // namespace

bool operator==(const Snapshot& a, const Snapshot& b) { return encode_snapshot(a) == encode_snapshot(b); }

std::vector<std::uint8_t> encode_snapshot(const Snapshot& snap) { return json::to_cbor(to_json(snap)); }

Snapshot decode_snapshot(std::span<const std::uint8_t> bytes) {
  try {
    return from_json(json::from_cbor(bytes.begin(), bytes.end()));
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed snapshot: ") + e.what());
  }
}

std::uint64_t fingerprint(const Snapshot& snap) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : encode_snapshot(snap)) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void save_snapshot(const std::string& path, const Snapshot& snap) {
  const auto bytes = encode_snapshot(snap);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot write snapshot '" + path + "'");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Snapshot load_snapshot(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot open snapshot '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_snapshot(bytes);
}

// ---------------------------------------------------------------------------
// Scenario construction

bool Perturbation::is_identity() const {
  auto ones = [](const auto& range) {
    for (double f : range) {
      if (f != 1.0) return false;
    }
    return true;
  };
  for (const auto& [id, f] : speed) {
    if (f != 1.0) return false;
  }
  return ones(demand) && ones(size);
}

Perturbation perturb_scenario(const Snapshot& snap, double magnitude, Rng& rng) {
  if (!(magnitude >= 0.0 && magnitude < 1.0)) throw ParameterError("perturbation magnitude must lie in [0, 1)");
  std::uniform_real_distribution<double> factor(1.0 - magnitude, 1.0 + magnitude);
  Perturbation p;
  for (const auto& v : snap.vehicles) p.speed[v.kinematics.vehicle_id] = factor(rng);
  for (std::size_t i = 0; i < snap.task_types.size(); ++i) {
    p.demand.push_back(factor(rng));
    p.size.push_back(factor(rng));
  }
  return p;
}

sim::World reconstruct_world(const Snapshot& snap, const sim::ScenarioConfig& scenario,
                             const TwinStreams& streams, const Perturbation* perturbation) {
  sim::World w;
  w.seed = streams.seed;
  w.stream_domain = streams.domain;
  w.mobility_rng = make_stream(streams.seed, streams.domain + "/mobility");
  w.spawn_rng = make_stream(streams.seed, streams.domain + "/spawn");
  w.channel = scenario.channel;
  w.grid = scenario.grid;
  w.speeds = scenario.speeds;
  w.scales = scenario.scales;
  w.max_association_range = scenario.max_association_range;
  w.vehicle_rate_min = scenario.vehicle_rate_min;
  w.vehicle_rate_max = scenario.vehicle_rate_max;

  w.now = w.mobility_time = snap.captured_at;
  w.phase_index = snap.phase_index;
  w.arrival_rate = snap.arrival_rate;
  w.task_type_weights = snap.task_type_weights;
  w.task_types = snap.task_types;
  if (perturbation) {
    for (std::size_t i = 0; i < w.task_types.size() && i < perturbation->demand.size(); ++i) {
      w.task_types[i].demand_cycles *= perturbation->demand[i];
      w.task_types[i].data_bits *= perturbation->size[i];
    }
  }
  w.servers = snap.servers;
  for (std::size_t i = 0; i < snap.vehicles.size(); ++i) {
    const auto& vs = snap.vehicles[i];
    if (vs.kinematics.vehicle_id != static_cast<int>(i)) {
      throw ParameterError("snapshot vehicle ids must be contiguous from 0");
    }
    sim::Vehicle v;
    v.node = vs.node;
    v.kinematics = vs.kinematics;
    if (perturbation) {
      if (const auto it = perturbation->speed.find(vs.kinematics.vehicle_id); it != perturbation->speed.end()) {
        v.kinematics.speed *= it->second;
      }
    }
    mobility::reassign_route(w.grid, v.kinematics, w.mobility_rng);
    v.arrivals = make_stream(streams.seed, streams.domain + "/arrivals",
                             static_cast<std::uint64_t>(vs.kinematics.vehicle_id));
    w.vehicles.push_back(std::move(v));
  }
  return w;
}

TwinEnv reconstruct_env(const Snapshot& snap, const sim::ScenarioConfig& scenario, const learner::Hyperparams& hp,
                        const TwinStreams& streams) {
  learner::AgentTeam team(hp, learner::network_shape(scenario, hp), streams.seed, streams.domain + "/agents");
  for (const auto& [id, w] : snap.agent_weights) team.add_from_weights(id, w, hp.tau0);
  for (const auto& [id, transitions] : snap.replay) {
    if (!team.contains(id)) continue;
    for (const auto& t : transitions) team.agent(id).buffer.push(t);
  }
  return TwinEnv{reconstruct_world(snap, scenario, streams), std::move(team)};
}

// ---------------------------------------------------------------------------
// Twin training

void reset_exploration(learner::AgentTeam& team, const learner::Hyperparams& hp, const DTConfig& cfg,
                       double arrival_rate, double annealing_budget) {
  const double tau0 = cfg.tau_reset.value_or(hp.tau0);
  const double decisions = arrival_rate * annealing_budget * cfg.tau_floor_fraction;
  double decay = 1.0;
  if (decisions >= 1.0 && tau0 > hp.tau_min) decay = std::pow(hp.tau_min / tau0, 1.0 / decisions);
  team.set_tau(tau0);
  team.set_tau_decay(decay);
}

TrainStats dt_train(TwinEnv& env, const DTConfig& cfg, bool reset_tau) {
  if (reset_tau) reset_exploration(env.team, env.team.hyperparams(), cfg, env.world.arrival_rate, cfg.t_dt);
  env.team.set_learning(true);
  const auto decisions0 = env.team.total_decisions();
  const auto steps0 = env.team.total_train_steps();
  const double end = env.world.now + cfg.t_dt;
  sim::Simulator simulator(std::move(env.world), env.team);
  simulator.run_until(end);
  env.world = std::move(simulator.world());
  env.world.now = end;
  return {env.team.total_decisions() - decisions0, env.team.total_train_steps() - steps0};
}

TriggerResult run_trigger(const Snapshot& snap, const sim::ScenarioConfig& scenario, const learner::Hyperparams& hp,
                          const DTConfig& cfg, std::uint64_t seed, int trigger_index) {
  const auto idx = static_cast<std::uint64_t>(trigger_index);
  const std::string base = "twin/" + std::to_string(trigger_index);
  TwinEnv env = reconstruct_env(snap, scenario, hp, {seed, base + "/0"});
  reset_exploration(env.team, hp, cfg, snap.arrival_rate, cfg.t_dt * cfg.scenario_count);

  TriggerResult result;
  for (int sc = 0; sc < cfg.scenario_count; ++sc) {
    if (sc > 0) {
      Rng rng = make_stream(seed, "perturbation", idx, static_cast<std::uint64_t>(sc));
      const Perturbation p = perturb_scenario(snap, cfg.perturbation, rng);
      env.world = reconstruct_world(snap, scenario, {seed, base + "/" + std::to_string(sc)}, &p);
      for (int id : env.team.ids()) env.team.agent(id).pending.reset();
    }
    const auto stats = dt_train(env, cfg, false);
    result.decisions += stats.decisions;
    result.train_steps += stats.train_steps;
    ++result.scenarios;
  }
  result.weights = env.team.export_weights();
  return result;
}

SyncReport sync_weights(learner::AgentTeam& team, const learner::TeamWeights& weights, bool exploit,
                        Rng& clone_rng) {
  SyncReport report;
  std::vector<int> sources;
  for (const auto& [id, w] : weights) sources.push_back(id);
  for (int id : team.ids()) {
    if (const auto it = weights.find(id); it != weights.end()) {
      team.agent(id).set_weights(it->second);
      report.applied.push_back(id);
    } else if (!sources.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, sources.size() - 1);
      team.agent(id).set_weights(weights.at(sources[pick(clone_rng)]));
      report.cloned.push_back(id);
    }
  }
  for (const auto& [id, w] : weights) {
    if (!team.contains(id)) report.ignored.push_back(id);
  }
  if (exploit) team.set_tau(team.hyperparams().tau_min);
  return report;
}

}  // namespace twinloop::twin
