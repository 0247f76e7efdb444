#pragma once

// Digital-twin adaptation loop: capture a snapshot of the physical world,
// rebuild it as an accelerated twin, train the agents there, and copy the
// resulting weights back.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "twinloop/learner.hpp"
#include "twinloop/simcore.hpp"

namespace twinloop::twin {

struct VehicleState {
  model::ComputeNode node;
  mobility::VehicleKinematics kinematics;

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

/// Immutable record of the physical world at one instant: server and vehicle
/// rates, backlogs and positions, the arrival rate, the task mix and every
/// agent's parameters.
struct Snapshot {
  double captured_at = 0.0;
  int phase_index = 0;
  std::vector<model::ComputeNode> servers;
  std::vector<VehicleState> vehicles;
  double arrival_rate = 0.0;
  std::vector<double> task_type_weights;
  std::vector<model::TaskType> task_types;
  learner::TeamWeights agent_weights;
  /// Only filled when the twin is configured to inherit replay contents.
  std::map<int, std::vector<learner::Transition>> replay;

  friend bool operator==(const Snapshot& a, const Snapshot& b);
};

struct DTConfig {
  double t_dt = 500.0;              // simulated twin seconds per scenario
  int scenario_count = 1;           // 1 single-scenario, 3 multi-scenario
  double perturbation = 0.05;
  double speedup = 25.0;            // twin speed relative to the physical world
  std::optional<double> tau_reset;  // defaults to hyperparams.tau0
  double tau_floor_fraction = 0.8;  // share of the budget spent annealing
  /// Overrides the (scenario_count * t_dt / speedup) sync latency.
  std::optional<double> sync_latency;
  bool inherit_replay = false;

  double effective_sync_latency() const;
  /// Throws ConfigError naming the offending key under `dt.`.
  void validate() const;

  friend bool operator==(const DTConfig&, const DTConfig&) = default;
};

struct Trigger {
  double time = 0.0;
  int phase = 0;

  friend bool operator==(const Trigger&, const Trigger&) = default;
};

struct TriggerSchedule {
  int k = 0;
  std::vector<Trigger> triggers;
};

/// k evenly spaced triggers per non-warmup phase, the first at the phase start.
TriggerSchedule schedule_triggers(const std::vector<sim::PhaseConfig>& phases, int k);

/// Snapshot at time `at` (>= world.now). The physical world is not modified:
/// draining and motion up to `at` are applied to a private copy.
Snapshot capture_snapshot(const sim::World& world, const learner::AgentTeam& team, double at,
                          bool include_replay = false);

/// Stable 64-bit fingerprint of the encoded snapshot.
std::uint64_t fingerprint(const Snapshot& snap);

std::vector<std::uint8_t> encode_snapshot(const Snapshot& snap);
Snapshot decode_snapshot(std::span<const std::uint8_t> bytes);
void save_snapshot(const std::string& path, const Snapshot& snap);
Snapshot load_snapshot(const std::string& path);

/// Multiplicative scenario factors, each uniform in [1 - m, 1 + m].
struct Perturbation {
  std::map<int, double> speed;  // per vehicle id
  std::vector<double> demand;   // per task type
  std::vector<double> size;     // per task type

  bool is_identity() const;
};

Perturbation perturb_scenario(const Snapshot& snap, double magnitude, Rng& rng);

/// Random-streams used by one twin scenario.
struct TwinStreams {
  std::uint64_t seed = 0;
  std::string domain;  // e.g. "twin/3/1"
};

/// World rebuilt from the snapshot: same node states, positions, arrival rate
/// and task mix; fresh arrival streams; routes re-drawn from the twin's
/// mobility stream.
sim::World reconstruct_world(const Snapshot& snap, const sim::ScenarioConfig& scenario,
                             const TwinStreams& streams, const Perturbation* perturbation = nullptr);

struct TwinEnv {
  sim::World world;
  learner::AgentTeam team;
};

/// World plus a team initialised from the snapshot's agent weights.
TwinEnv reconstruct_env(const Snapshot& snap, const sim::ScenarioConfig& scenario,
                        const learner::Hyperparams& hp, const TwinStreams& streams);

struct TrainStats {
  std::uint64_t decisions = 0;
  std::uint64_t train_steps = 0;
};

/// Resets every twin agent's temperature to tau0 with a geometric decay that
/// reaches tau_min after `tau_floor_fraction` of `annealing_budget` seconds
/// (defaults to cfg.t_dt).
void reset_exploration(learner::AgentTeam& team, const learner::Hyperparams& hp, const DTConfig& cfg,
                       double arrival_rate, double annealing_budget);

/// Runs the twin for cfg.t_dt simulated seconds with learning enabled.
/// When `reset_tau` is set, temperatures are reset first (over one budget).
TrainStats dt_train(TwinEnv& env, const DTConfig& cfg, bool reset_tau = true);

struct TriggerResult {
  learner::TeamWeights weights;
  std::uint64_t decisions = 0;
  std::uint64_t train_steps = 0;
  int scenarios = 0;
};

/// scenario_count sequential twin scenarios (the first unperturbed), chaining
/// weights from one to the next.
TriggerResult run_trigger(const Snapshot& snap, const sim::ScenarioConfig& scenario,
                          const learner::Hyperparams& hp, const DTConfig& cfg, std::uint64_t seed,
                          int trigger_index);

struct SyncReport {
  std::vector<int> applied;
  std::vector<int> cloned;   // present in the physical world but not in the twin
  std::vector<int> ignored;  // present in the twin only
  bool mismatch() const { return !cloned.empty() || !ignored.empty(); }
};

/// Copies twin weights into the physical team bit-exactly. With `exploit`,
/// every agent's temperature is clamped to tau_min afterwards.
SyncReport sync_weights(learner::AgentTeam& team, const learner::TeamWeights& weights, bool exploit,
                        Rng& clone_rng);

}  // namespace twinloop::twin
