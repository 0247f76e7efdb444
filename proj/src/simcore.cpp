#include "twinloop/simcore.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "twinloop/errors.hpp"

namespace twinloop::sim {

namespace {

std::string index_path(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

bool positive(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

// ---------------------------------------------------------------------------
// Scenario defaults and validation

std::vector<ServerSpec> default_servers(const mobility::RoadGrid& grid) {
  using model::Tier;
  constexpr Tier pattern[4] = {Tier::server_low, Tier::server_high, Tier::server_mid,
                               Tier::server_high};
  const auto positions = grid.rsu_positions();
  const int per_row = static_cast<int>(std::lround(std::sqrt(positions.size())));
  std::vector<ServerSpec> out;
  out.reserve(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const int row = static_cast<int>(i) / per_row;
    const int col = static_cast<int>(i) % per_row;
    const Tier tier = pattern[(col + row) % 4];
    const double rate = tier == Tier::server_low ? 2.0e9 : tier == Tier::server_mid ? 2.5e9 : 3.5e9;
    out.push_back({positions[i], tier, rate});
  }
  return out;
}

std::vector<PhaseConfig> default_phases(const std::vector<ServerSpec>& servers) {
  const std::vector<double> uniform(model::kTaskTypeCount, 1.0 / model::kTaskTypeCount);
  const std::vector<double> heavy{0.05, 0.05, 0.10, 0.15, 0.25, 0.40};
  const std::vector<double> light(heavy.rbegin(), heavy.rend());

  // Half the servers degrade: the lowest-id 4 high, 2 mid and 2 low tier.
  std::vector<int> degraded;
  int want_high = 4, want_mid = 2, want_low = 2;
  for (std::size_t j = 0; j < servers.size(); ++j) {
    int* want = servers[j].tier == model::Tier::server_high  ? &want_high
                : servers[j].tier == model::Tier::server_mid ? &want_mid
                                                             : &want_low;
    if (*want > 0) {
      --*want;
      degraded.push_back(static_cast<int>(j));
    }
  }

  PhaseConfig warmup{.name = "warmup", .start_time = 0.0, .end_time = 500.0,
                     .vehicle_count = 45, .arrival_rate = 1.0 / 8.0,
                     .task_type_weights = uniform};
  PhaseConfig p1 = warmup;
  p1.name = "phase1";
  p1.start_time = 500.0;
  p1.end_time = 1500.0;
  p1.vehicle_count = 65;
  p1.task_type_weights = heavy;
  PhaseConfig p2 = p1;
  p2.name = "phase2";
  p2.start_time = 1500.0;
  p2.end_time = 2500.0;
  p2.arrival_rate = 1.2 / 8.0;
  p2.degraded_servers = degraded;
  PhaseConfig p3 = p2;
  p3.name = "phase3";
  p3.start_time = 2500.0;
  p3.end_time = 3500.0;
  p3.degraded_servers.clear();
  p3.task_type_weights = light;
  return {warmup, p1, p2, p3};
}

ScenarioConfig default_scenario() {
  ScenarioConfig s;
  s.task_types = model::default_task_types();
  s.servers = default_servers(s.grid);
  s.phases = default_phases(s.servers);
  return s;
}

void ScenarioConfig::validate() const {
  const std::string root = "scenario";
  require(positive(grid.extent), root + ".grid.extent", "must be positive");
  require(positive(grid.block_length), root + ".grid.block_length", "must be positive");
  {
    const double blocks = grid.extent / grid.block_length;
    require(std::abs(blocks - std::round(blocks)) < 1e-9 && blocks >= 1.0,
            root + ".grid.block_length", "extent must be a whole number of blocks");
  }
  require(positive(channel.bandwidth_hz), root + ".channel.bandwidth_hz", "must be positive");
  require(positive(channel.tx_power_w), root + ".channel.tx_power_w", "must be positive");
  require(positive(channel.path_loss_exponent), root + ".channel.path_loss_exponent",
          "must be positive");
  require(positive(channel.noise_power_w), root + ".channel.noise_power_w", "must be positive");

  require(!task_types.empty(), root + ".task_types", "at least one task type is required");
  for (std::size_t i = 0; i < task_types.size(); ++i) {
    const auto p = index_path(root + ".task_types", i);
    require(task_types[i].id == static_cast<int>(i), p + ".id", "ids must be 0..n-1 in order");
    require(positive(task_types[i].demand_cycles), p + ".demand_cycles", "must be positive");
    require(positive(task_types[i].data_bits), p + ".data_bits", "must be positive");
  }

  require(!servers.empty(), root + ".servers", "at least one server is required");
  for (std::size_t j = 0; j < servers.size(); ++j) {
    const auto p = index_path(root + ".servers", j);
    require(positive(servers[j].base_rate), p + ".base_rate", "must be positive");
    require(servers[j].tier != model::Tier::vehicle, p + ".tier", "must be a server tier");
    require(grid.contains(servers[j].position), p + ".position", "must lie inside the grid");
  }

  require(positive(vehicle_rate_min) && vehicle_rate_max >= vehicle_rate_min,
          root + ".vehicle_rate", "need 0 < min <= max");
  require(positive(speeds.min) && speeds.max >= speeds.min, root + ".vehicle_speed",
          "need 0 < min <= max");
  require(positive(scales.rate) && positive(scales.backlog) && positive(scales.size) &&
              positive(scales.demand) && positive(scales.uplink),
          root + ".feature_scales", "all scales must be positive");
  require(std::isfinite(max_association_range) && max_association_range >= 0.0,
          root + ".max_association_range", "must be >= 0 (0 disables masking)");

  require(!phases.empty(), root + ".phases", "at least one phase is required");
  for (std::size_t i = 0; i < phases.size(); ++i) {
    const auto& ph = phases[i];
    const auto p = index_path(root + ".phases", i);
    if (i == 0) {
      require(ph.start_time == 0.0, p + ".start_time", "first phase must start at 0");
    } else {
      require(ph.start_time == phases[i - 1].end_time, p + ".start_time",
              "phases must be contiguous");
    }
    require(std::isfinite(ph.end_time) && ph.end_time > ph.start_time, p + ".end_time",
            "must be after start_time");
    require(ph.vehicle_count >= 0, p + ".vehicle_count", "must be non-negative");
    require(positive(ph.arrival_rate), p + ".arrival_rate", "must be positive");
    require(ph.task_type_weights.size() == task_types.size(), p + ".task_type_weights",
            "needs one weight per task type");
    double sum = 0.0;
    for (double w : ph.task_type_weights) {
      require(std::isfinite(w) && w >= 0.0, p + ".task_type_weights", "weights must be >= 0");
      sum += w;
    }
    require(std::abs(sum - 1.0) <= 1e-12, p + ".task_type_weights",
            "weights must sum to 1 (got " + format_double(sum) + ")");
    for (const auto& [id, m] : ph.server_rate_multipliers) {
      require(id >= 0 && id < server_count(), p + ".server_rate_multipliers",
              "unknown server " + std::to_string(id));
      require(std::isfinite(m) && m > 0.0 && m <= 1.0, p + ".server_rate_multipliers",
              "multipliers must lie in (0, 1]");
    }
    for (int id : ph.degraded_servers) {
      require(id >= 0 && id < server_count(), p + ".degraded_servers",
              "unknown server " + std::to_string(id));
    }
    require(ph.degradation_min > 0.0 && ph.degradation_min <= ph.degradation_max &&
                ph.degradation_max <= 1.0,
            p + ".degradation_range", "need 0 < min <= max <= 1");
  }
}

// ---------------------------------------------------------------------------
// World construction and state updates

std::vector<std::map<int, double>> resolve_multipliers(const ScenarioConfig& scenario,
                                                       std::uint64_t seed) {
  Rng rng = make_stream(seed, "degradation");
  std::vector<std::map<int, double>> out;
  out.reserve(scenario.phases.size());
  for (const auto& ph : scenario.phases) {
    std::map<int, double> m;
    std::uniform_real_distribution<double> draw(ph.degradation_min, ph.degradation_max);
    for (int id : ph.degraded_servers) m[id] = draw(rng);
    for (const auto& [id, v] : ph.server_rate_multipliers) m[id] = v;
    out.push_back(std::move(m));
  }
  return out;
}

World make_world(const ScenarioConfig& scenario, std::uint64_t seed, std::string domain,
                 const std::map<int, double>& initial_multipliers) {
  World w;
  w.seed = seed;
  w.stream_domain = std::move(domain);
  w.mobility_rng = make_stream(seed, w.stream_domain + "/mobility");
  w.spawn_rng = make_stream(seed, w.stream_domain + "/spawn");
  w.task_types = scenario.task_types;
  w.channel = scenario.channel;
  w.grid = scenario.grid;
  w.speeds = scenario.speeds;
  w.scales = scenario.scales;
  w.max_association_range = scenario.max_association_range;
  w.vehicle_rate_min = scenario.vehicle_rate_min;
  w.vehicle_rate_max = scenario.vehicle_rate_max;

  for (std::size_t j = 0; j < scenario.servers.size(); ++j) {
    const auto& spec = scenario.servers[j];
    model::ComputeNode n;
    n.node_id = static_cast<int>(j);
    n.tier = spec.tier;
    n.base_rate = spec.base_rate;
    const auto it = initial_multipliers.find(static_cast<int>(j));
    n.rate = spec.base_rate * (it == initial_multipliers.end() ? 1.0 : it->second);
    n.position = spec.position;
    w.servers.push_back(n);
  }
  if (!scenario.phases.empty()) {
    const auto& first = scenario.phases.front();
    w.arrival_rate = first.arrival_rate;
    w.task_type_weights = first.task_type_weights;
    add_vehicles(w, first.vehicle_count);
  }
  return w;
}

std::vector<int> add_vehicles(World& world, int count) {
  const int first = static_cast<int>(world.vehicles.size());
  auto kin = mobility::spawn_vehicles(world.grid, count, first, world.speeds, world.spawn_rng);
  std::uniform_real_distribution<double> rate(world.vehicle_rate_min, world.vehicle_rate_max);
  std::vector<int> ids;
  for (auto& k : kin) {
    Vehicle v;
    v.node.node_id = k.vehicle_id;
    v.node.tier = model::Tier::vehicle;
    v.node.base_rate = v.node.rate = rate(world.spawn_rng);
    v.node.position = k.position;
    v.node.updated_at = world.now;
    v.kinematics = k;
    v.arrivals = make_stream(world.seed, world.stream_domain + "/arrivals",
                             static_cast<std::uint64_t>(k.vehicle_id));
    ids.push_back(k.vehicle_id);
    world.vehicles.push_back(std::move(v));
  }
  return ids;
}

void drain_backlogs(std::span<model::ComputeNode> nodes, double dt) {
  if (!(dt >= 0.0)) throw ParameterError("drain interval must be non-negative");
  for (auto& n : nodes) n.backlog_cycles = std::max(0.0, n.backlog_cycles - n.rate * dt);
}

void settle(model::ComputeNode& node, double now) {
  const double dt = now - node.updated_at;
  if (dt > 0.0) node.backlog_cycles = std::max(0.0, node.backlog_cycles - node.rate * dt);
  node.updated_at = now;
}

void advance_mobility(World& world, double t) {
  if (t <= world.mobility_time) return;
  const double dt = t - world.mobility_time;
  for (auto& v : world.vehicles) {
    mobility::advance(world.grid, v.kinematics, dt, world.mobility_rng);
    v.node.position = v.kinematics.position;
  }
  world.mobility_time = t;
}

Observation build_observation(World& world, int vehicle_id, const model::Task& task) {
  auto& vehicle = world.vehicles.at(static_cast<std::size_t>(vehicle_id));
  const auto& sc = world.scales;
  settle(vehicle.node, world.now);
  Observation obs;
  obs.reserve(4 + 3 * world.servers.size());
  obs.push_back(vehicle.node.rate / sc.rate);
  obs.push_back(vehicle.node.backlog_cycles / sc.backlog);
  obs.push_back(task.size_bits / sc.size);
  obs.push_back(task.demand_cycles / sc.demand);
  for (auto& server : world.servers) {
    settle(server, world.now);
    const double d = mobility::distance(vehicle.node.position, server.position);
    obs.push_back(server.rate / sc.rate);
    obs.push_back(server.backlog_cycles / sc.backlog);
    obs.push_back(model::uplink_rate(world.channel, d) / sc.uplink);
  }
  return obs;
}

std::vector<bool> action_mask(const World& world, int vehicle_id) {
  std::vector<bool> mask(static_cast<std::size_t>(world.action_count()), true);
  if (world.max_association_range <= 0.0) return mask;
  const auto& pos = world.vehicles.at(static_cast<std::size_t>(vehicle_id)).node.position;
  for (std::size_t j = 0; j < world.servers.size(); ++j) {
    mask[j + 1] = mobility::distance(pos, world.servers[j].position) <= world.max_association_range;
  }
  return mask;
}

TaskOutcomeRecord assign_task(World& world, const model::Task& task, Action action) {
  if (action < 0 || action >= world.action_count()) {
    throw ActionError("action " + std::to_string(action) + " outside [0, " +
                      std::to_string(world.server_count()) + "]");
  }
  auto& vehicle = world.vehicles.at(static_cast<std::size_t>(task.vehicle_id));
  model::ComputeNode& target =
      action == kLocalAction ? vehicle.node : world.servers[static_cast<std::size_t>(action - 1)];
  settle(target, world.now);
  settle(vehicle.node, world.now);
  const auto lat =
      model::end_to_end_latency(action, task, vehicle.node, world.servers, world.channel);
  target.backlog_cycles += task.demand_cycles;

  TaskOutcomeRecord rec;
  rec.task_id = task.task_id;
  rec.vehicle_id = task.vehicle_id;
  rec.phase = world.phase_index;
  rec.decision_time = world.now;
  rec.action = action;
  rec.t_trans = lat.transmission;
  rec.t_comp = lat.computation;
  rec.t_e2e = lat.end_to_end;
  return rec;
}

double sample_interarrival(double rate, Rng& rng) {
  std::exponential_distribution<double> gap(rate);
  return gap(rng);
}

int sample_task_type(std::span<const double> weights, Rng& rng) {
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  return pick(rng);
}

std::vector<model::Task> generate_arrivals(const PhaseConfig& phase,
                                           std::span<const model::TaskType> types,
                                           int vehicle_id, Rng& rng) {
  std::vector<model::Task> out;
  double t = phase.start_time + sample_interarrival(phase.arrival_rate, rng);
  std::int64_t id = 0;
  while (t < phase.end_time) {
    const int type = sample_task_type(phase.task_type_weights, rng);
    const auto& tt = types[static_cast<std::size_t>(type)];
    out.push_back({id++, vehicle_id, type, tt.demand_cycles, tt.data_bits, t});
    t += sample_interarrival(phase.arrival_rate, rng);
  }
  return out;
}

PhaseChange apply_phase_transition(World& world, const PhaseConfig& phase, int phase_index,
                                   const std::map<int, double>& multipliers) {
  PhaseChange change;
  for (auto& s : world.servers) {
    settle(s, world.now);
    const auto it = multipliers.find(s.node_id);
    s.rate = s.base_rate * (it == multipliers.end() ? 1.0 : it->second);
  }
  const int current = static_cast<int>(world.vehicles.size());
  if (phase.vehicle_count > current) {
    change.added = add_vehicles(world, phase.vehicle_count - current);
  } else {
    while (static_cast<int>(world.vehicles.size()) > phase.vehicle_count) {
      change.removed.push_back(world.vehicles.back().kinematics.vehicle_id);
      world.vehicles.pop_back();
    }
  }
  change.arrival_rate_changed = phase.arrival_rate != world.arrival_rate;
  world.arrival_rate = phase.arrival_rate;
  world.task_type_weights = phase.task_type_weights;
  world.phase_index = phase_index;
  return change;
}

// ---------------------------------------------------------------------------
// Event loop

bool EventQueue::Later::operator()(const Event& a, const Event& b) const {
  if (a.time != b.time) return a.time > b.time;
  if (a.kind != b.kind) return static_cast<int>(a.kind) > static_cast<int>(b.kind);
  return a.sequence > b.sequence;
}

void EventQueue::push(Event e) {
  e.sequence = next_sequence_++;
  heap_.push(e);
}

Event EventQueue::pop() {
  Event e = heap_.top();
  heap_.pop();
  return e;
}

Action RandomController::decide(const World& world, int vehicle_id, const Observation&) {
  if (world.max_association_range <= 0.0) {
    std::uniform_int_distribution<Action> pick(0, world.action_count() - 1);
    return pick(rng_);
  }
  const auto mask = action_mask(world, vehicle_id);
  std::vector<Action> allowed;
  for (std::size_t a = 0; a < mask.size(); ++a) {
    if (mask[a]) allowed.push_back(static_cast<Action>(a));
  }
  std::uniform_int_distribution<std::size_t> pick(0, allowed.size() - 1);
  return allowed[pick(rng_)];
}

namespace {
std::vector<std::uint64_t>& grow(std::vector<std::uint64_t>& v, std::size_t n) {
  if (v.size() < n) v.resize(n, 0);
  return v;
}
}  // namespace

Simulator::Simulator(World world, Controller& controller)
    : world_(std::move(world)), controller_(&controller) {
  for (const auto& v : world_.vehicles) schedule_next_arrival(v.kinematics.vehicle_id);
}

void Simulator::schedule_phases(const std::vector<PhaseConfig>& phases,
                                std::vector<std::map<int, double>> multipliers) {
  phases_ = phases;
  multipliers_ = std::move(multipliers);
  for (std::size_t i = 1; i < phases_.size(); ++i) {
    schedule(phases_[i].start_time, EventKind::phase_transition, static_cast<int>(i));
  }
}

void Simulator::schedule(double time, EventKind kind, int subject) {
  queue_.push({time, kind, subject, 0, 0});
}

void Simulator::schedule_next_arrival(int vehicle_id) {
  auto& v = world_.vehicles[static_cast<std::size_t>(vehicle_id)];
  Event e;
  e.time = world_.now + sample_interarrival(world_.arrival_rate, v.arrivals);
  e.kind = EventKind::task_arrival;
  e.subject = vehicle_id;
  e.generation = grow(arrival_generation_, static_cast<std::size_t>(vehicle_id) + 1)
      [static_cast<std::size_t>(vehicle_id)];
  queue_.push(e);
}

void Simulator::run_until(double t_end) {
  while (!queue_.empty() && queue_.top().time < t_end) {
    const Event e = queue_.pop();
    world_.now = e.time;
    switch (e.kind) {
      case EventKind::task_arrival: handle_arrival(e); break;
      case EventKind::phase_transition: handle_phase(e); break;
      case EventKind::dt_trigger:
      case EventKind::dt_sync_apply:
        if (handler_) handler_(*this, e);
        break;
    }
  }
}

void Simulator::handle_arrival(const Event& e) {
  const auto id = static_cast<std::size_t>(e.subject);
  if (id >= world_.vehicles.size() || id >= arrival_generation_.size() ||
      arrival_generation_[id] != e.generation) {
    return;  // vehicle left or its arrival process was rescheduled
  }
  advance_mobility(world_, world_.now);
  auto& vehicle = world_.vehicles[id];
  const int type = sample_task_type(world_.task_type_weights, vehicle.arrivals);
  const auto& tt = world_.task_types[static_cast<std::size_t>(type)];
  const model::Task task{world_.next_task_id++, e.subject, type, tt.demand_cycles, tt.data_bits,
                         world_.now};

  const Observation obs = build_observation(world_, e.subject, task);
  const Action action = controller_->decide(world_, e.subject, obs);
  const TaskOutcomeRecord rec = assign_task(world_, task, action);
  controller_->observe_outcome(e.subject, obs, action, model::reward(rec.t_e2e));
  records_.push_back(rec);
  ++decisions_;
  schedule_next_arrival(e.subject);
}

void Simulator::handle_phase(const Event& e) {
  const auto idx = static_cast<std::size_t>(e.subject);
  advance_mobility(world_, world_.now);
  const auto change =
      apply_phase_transition(world_, phases_.at(idx), e.subject, multipliers_.at(idx));
  if (!change.removed.empty()) {
    for (int id : change.removed) ++grow(arrival_generation_, id + 1)[static_cast<std::size_t>(id)];
    controller_->on_vehicles_removed(change.removed);
  }
  if (!change.added.empty()) controller_->on_vehicles_added(change.added);
  if (change.arrival_rate_changed) {
    for (const auto& v : world_.vehicles) {
      const int id = v.kinematics.vehicle_id;
      ++grow(arrival_generation_, id + 1)[static_cast<std::size_t>(id)];
      schedule_next_arrival(id);
    }
  } else {
    for (int id : change.added) schedule_next_arrival(id);
  }
}

// ---------------------------------------------------------------------------
// Reporting

std::vector<PhaseBounds> phase_bounds(const std::vector<PhaseConfig>& phases) {
  std::vector<PhaseBounds> out;
  for (const auto& p : phases) out.push_back({p.name, p.start_time, p.end_time});
  return out;
}

double nearest_rank_percentile(std::vector<double> values, double p) {
  if (values.empty()) throw ParameterError("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

std::vector<PhaseSummary> summarise(std::span<const TaskOutcomeRecord> records,
                                    std::span<const PhaseBounds> phases) {
  std::vector<std::vector<double>> latencies(phases.size());
  for (const auto& r : records) {
    for (std::size_t i = 0; i < phases.size(); ++i) {
      if (r.decision_time >= phases[i].start && r.decision_time < phases[i].end) {
        latencies[i].push_back(r.t_e2e);
        break;
      }
    }
  }
  std::vector<PhaseSummary> out;
  for (std::size_t i = 0; i < phases.size(); ++i) {
    PhaseSummary s;
    s.name = phases[i].name;
    s.count = latencies[i].size();
    if (s.count > 0) {
      const double sum = std::accumulate(latencies[i].begin(), latencies[i].end(), 0.0);
      s.mean = sum / static_cast<double>(s.count);
      s.p90 = nearest_rank_percentile(latencies[i], 90.0);
      s.p99 = nearest_rank_percentile(latencies[i], 99.0);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_records_csv(std::ostream& out, std::span<const TaskOutcomeRecord> records) {
  out << kRecordCsvHeader << '\n';
  for (const auto& r : records) {
    out << r.task_id << ',' << r.vehicle_id << ',' << r.phase << ','
        << format_double(r.decision_time) << ',' << r.action << ',' << format_double(r.t_trans)
        << ',' << format_double(r.t_comp) << ',' << format_double(r.t_e2e) << '\n';
  }
}

namespace {

template <typename T>
T parse_field(std::string_view s, std::size_t line) {
  T value{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw LoadError("records CSV line " + std::to_string(line) + ": bad field '" +
                    std::string(s) + "'");
  }
  return value;
}

}  // namespace

std::vector<TaskOutcomeRecord> read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kRecordCsvHeader) {
    throw LoadError("records CSV: missing or unexpected header");
  }
  std::vector<TaskOutcomeRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos;) {
      f.push_back(rest.substr(0, pos));
      rest.remove_prefix(pos + 1);
    }
    f.push_back(rest);
    if (f.size() != 8) {
      throw LoadError("records CSV line " + std::to_string(lineno) + ": expected 8 fields");
    }
    TaskOutcomeRecord r;
    r.task_id = parse_field<std::int64_t>(f[0], lineno);
    r.vehicle_id = parse_field<int>(f[1], lineno);
    r.phase = parse_field<int>(f[2], lineno);
    r.decision_time = parse_field<double>(f[3], lineno);
    r.action = parse_field<int>(f[4], lineno);
    r.t_trans = parse_field<double>(f[5], lineno);
    r.t_comp = parse_field<double>(f[6], lineno);
    r.t_e2e = parse_field<double>(f[7], lineno);
    out.push_back(r);
  }
  return out;
}

}  // namespace twinloop::sim
