#pragma once

// Discrete-event engine for the vehicular offloading world: Poisson task
// arrivals, lazily drained fluid backlogs, observation construction, phase
// transitions and per-task outcome records.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "twinloop/mobility.hpp"
#include "twinloop/model.hpp"
#include "twinloop/rng.hpp"

namespace twinloop::sim {

/// Divisors applied to observation features so network inputs stay O(1).
struct FeatureScales {
  double rate = 1e9;
  double backlog = 1e10;
  double size = 1e7;
  double demand = 1e10;
  double uplink = 1e7;

  friend bool operator==(const FeatureScales&, const FeatureScales&) = default;
};

struct PhaseConfig {
  std::string name;
  double start_time = 0.0;
  double end_time = 0.0;
  int vehicle_count = 0;
  double arrival_rate = 1.0 / 8.0;  // tasks/s per vehicle
  std::vector<double> task_type_weights;
  /// Fixed rate multipliers keyed by server index.
  std::map<int, double> server_rate_multipliers;
  /// Servers whose multiplier is drawn once per run, uniformly from
  /// [degradation_min, degradation_max].
  std::vector<int> degraded_servers;
  double degradation_min = 0.30;
  double degradation_max = 0.50;

  friend bool operator==(const PhaseConfig&, const PhaseConfig&) = default;
};

struct ServerSpec {
  Vec2 position;
  model::Tier tier = model::Tier::server_high;
  double base_rate = 3.5e9;

  friend bool operator==(const ServerSpec&, const ServerSpec&) = default;
};

struct ScenarioConfig {
  mobility::RoadGrid grid;
  model::ChannelParams channel;
  std::vector<model::TaskType> task_types;
  std::vector<ServerSpec> servers;
  double vehicle_rate_min = 0.8e9;
  double vehicle_rate_max = 1.2e9;
  mobility::SpeedRange speeds;
  FeatureScales scales;
  /// Offloading is masked beyond this distance; 0 disables the mask.
  double max_association_range = 0.0;
  std::vector<PhaseConfig> phases;

  int server_count() const { return static_cast<int>(servers.size()); }
  int action_count() const { return server_count() + 1; }
  int observation_size() const { return 4 + 3 * server_count(); }
  double horizon() const { return phases.empty() ? 0.0 : phases.back().end_time; }

  /// Throws ConfigError naming the offending key.
  void validate() const;

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

/// 16 RSUs on the 4x4 lattice: 4 low (2.0 GHz), 4 mid (2.5 GHz) and
/// 8 high (3.5 GHz) tier, interleaved so every lattice row has one low, one
/// mid and two high servers.
std::vector<ServerSpec> default_servers(const mobility::RoadGrid& grid);

/// Warmup plus the three 1000 s context shifts.
std::vector<PhaseConfig> default_phases(const std::vector<ServerSpec>& servers);

ScenarioConfig default_scenario();

/// Feature vector (f_i, L_i, b_i, D_i, {f_j, L_j, r_ij}_j), scaled.
using Observation = std::vector<double>;

struct TaskOutcomeRecord {
  std::int64_t task_id = 0;
  int vehicle_id = 0;
  int phase = 0;
  double decision_time = 0.0;
  Action action = 0;
  double t_trans = 0.0;
  double t_comp = 0.0;
  double t_e2e = 0.0;

  friend bool operator==(const TaskOutcomeRecord&, const TaskOutcomeRecord&) = default;
};

struct Vehicle {
  model::ComputeNode node;
  mobility::VehicleKinematics kinematics;
  Rng arrivals;
};

/// Everything the event loop mutates. Vehicle ids are contiguous:
/// vehicles[i].kinematics.vehicle_id == i.
struct World {
  double now = 0.0;
  double mobility_time = 0.0;
  int phase_index = 0;
  std::int64_t next_task_id = 0;

  std::vector<model::ComputeNode> servers;
  std::vector<Vehicle> vehicles;

  std::vector<model::TaskType> task_types;
  std::vector<double> task_type_weights;
  double arrival_rate = 1.0 / 8.0;

  model::ChannelParams channel;
  mobility::RoadGrid grid;
  mobility::SpeedRange speeds;
  FeatureScales scales;
  double max_association_range = 0.0;
  double vehicle_rate_min = 0.8e9;
  double vehicle_rate_max = 1.2e9;

  std::uint64_t seed = 0;
  std::string stream_domain;  // prefix for per-vehicle arrival streams
  Rng mobility_rng;
  Rng spawn_rng;

  int server_count() const { return static_cast<int>(servers.size()); }
  int action_count() const { return server_count() + 1; }
};

/// Resolves every phase's rate multipliers, drawing the degraded ones from
/// the run's "degradation" stream.
std::vector<std::map<int, double>> resolve_multipliers(const ScenarioConfig& scenario,
                                                       std::uint64_t seed);

/// Builds the world at t = 0 in the first phase's context.
World make_world(const ScenarioConfig& scenario, std::uint64_t seed, std::string domain,
                 const std::map<int, double>& initial_multipliers);

/// Appends `count` vehicles with fresh kinematics, processing rates and
/// arrival streams. Returns the new ids.
std::vector<int> add_vehicles(World& world, int count);

/// L <- max(0, L - f dt) on every node.
void drain_backlogs(std::span<model::ComputeNode> nodes, double dt);

/// Lazily drains one node up to `now`.
void settle(model::ComputeNode& node, double now);

/// Moves every vehicle forward to time `t` (no-op if already there).
void advance_mobility(World& world, double t);

Observation build_observation(World& world, int vehicle_id, const model::Task& task);

/// Actions allowed for the vehicle; all true when no association range is set.
std::vector<bool> action_mask(const World& world, int vehicle_id);

/// Computes the decision-time latency and reserves the task's cycles on the
/// chosen node.
TaskOutcomeRecord assign_task(World& world, const model::Task& task, Action action);

double sample_interarrival(double rate, Rng& rng);
int sample_task_type(std::span<const double> weights, Rng& rng);

/// One vehicle's task arrivals over [phase.start_time, phase.end_time).
std::vector<model::Task> generate_arrivals(const PhaseConfig& phase,
                                           std::span<const model::TaskType> types,
                                           int vehicle_id, Rng& rng);

struct PhaseChange {
  std::vector<int> added;
  std::vector<int> removed;
  bool arrival_rate_changed = false;
};

/// Switches the world into `phase` at the current time: vehicle count, arrival
/// rate, task mix and server rates. Backlogs are preserved.
PhaseChange apply_phase_transition(World& world, const PhaseConfig& phase, int phase_index,
                                   const std::map<int, double>& multipliers);

enum class EventKind : int {
  phase_transition = 0,
  dt_trigger = 1,
  dt_sync_apply = 2,
  task_arrival = 3,
};

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::task_arrival;
  int subject = 0;  // vehicle id, phase index or trigger index
  std::uint64_t generation = 0;
  std::uint64_t sequence = 0;
};

/// Min-queue on (time, kind, insertion order).
class EventQueue {
 public:
  void push(Event e);
  Event pop();
  const Event& top() const { return heap_.top(); }
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }

 private:
  struct Later {
    bool operator()(const Event& a, const Event& b) const;
  };
  std::priority_queue<Event, std::vector<Event>, Later> heap_;
  std::uint64_t next_sequence_ = 0;
};

/// Decision-making side of the loop.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual Action decide(const World& world, int vehicle_id, const Observation& obs) = 0;
  virtual void observe_outcome(int vehicle_id, const Observation& obs, Action action,
                               double reward) = 0;
  virtual void on_vehicles_added(std::span<const int> ids) { (void)ids; }
  virtual void on_vehicles_removed(std::span<const int> ids) { (void)ids; }
};

/// Uniform choice over the allowed actions; never learns.
class RandomController final : public Controller {
 public:
  explicit RandomController(Rng rng) : rng_(std::move(rng)) {}
  Action decide(const World& world, int vehicle_id, const Observation& obs) override;
  void observe_outcome(int, const Observation&, Action, double) override {}

 private:
  Rng rng_;
};

class Simulator {
 public:
  using ControlHandler = std::function<void(Simulator&, const Event&)>;

  Simulator(World world, Controller& controller);

  /// Schedules transitions for phases[1..] with their resolved multipliers.
  void schedule_phases(const std::vector<PhaseConfig>& phases,
                       std::vector<std::map<int, double>> multipliers);
  void schedule(double time, EventKind kind, int subject);
  void set_control_handler(ControlHandler handler) { handler_ = std::move(handler); }

  /// Processes every event with time < t_end. Arrivals at or beyond t_end are
  /// left in the queue.
  void run_until(double t_end);

  World& world() { return world_; }
  const World& world() const { return world_; }
  Controller& controller() { return *controller_; }
  const std::vector<TaskOutcomeRecord>& records() const { return records_; }
  std::vector<TaskOutcomeRecord> take_records() { return std::move(records_); }
  std::uint64_t decisions() const { return decisions_; }

 private:
  void schedule_next_arrival(int vehicle_id);
  void handle_arrival(const Event& e);
  void handle_phase(const Event& e);

  World world_;
  Controller* controller_;
  EventQueue queue_;
  std::vector<PhaseConfig> phases_;
  std::vector<std::map<int, double>> multipliers_;
  ControlHandler handler_;
  std::vector<TaskOutcomeRecord> records_;
  std::vector<std::uint64_t> arrival_generation_;  // indexed by vehicle id, never shrinks
  std::uint64_t decisions_ = 0;
};

struct PhaseBounds {
  std::string name;
  double start = 0.0;
  double end = 0.0;

  friend bool operator==(const PhaseBounds&, const PhaseBounds&) = default;
};

std::vector<PhaseBounds> phase_bounds(const std::vector<PhaseConfig>& phases);

struct PhaseSummary {
  std::string name;
  std::size_t count = 0;
  std::optional<double> mean;
  std::optional<double> p90;
  std::optional<double> p99;
};

/// Nearest-rank percentile: the ceil(p/100 n)-th smallest sample.
double nearest_rank_percentile(std::vector<double> values, double p);

/// Per-phase statistics of t_e2e, attributing records by decision_time.
std::vector<PhaseSummary> summarise(std::span<const TaskOutcomeRecord> records,
                                    std::span<const PhaseBounds> phases);

inline constexpr const char* kRecordCsvHeader =
    "task_id,vehicle_id,phase,decision_time,action,t_trans,t_comp,t_e2e";

/// Shortest round-trip decimal representation.
std::string format_double(double v);

void write_records_csv(std::ostream& out, std::span<const TaskOutcomeRecord> records);
std::vector<TaskOutcomeRecord> read_records_csv(std::istream& in);

}  // namespace twinloop::sim
