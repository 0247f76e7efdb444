#pragma once

// Analytic latency model: V2I uplink rate, transmission delay, fluid
// computation delay on servers and vehicles, end-to-end latency and reward.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace twinloop {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// Index of an offloading target: 0 runs the task locally, j in [1, N]
/// sends it to server j-1.
using Action = int;
inline constexpr Action kLocalAction = 0;

}  // namespace twinloop

namespace twinloop::model {

/// Distances below this are clamped before evaluating the path-loss term.
inline constexpr double kMinDistance = 1.0;

struct ChannelParams {
  double bandwidth_hz = 1e6;
  double tx_power_w = 1.0;  // 30 dBm
  double path_loss_exponent = 4.0;
  double noise_power_w = 1e-13;

  /// Throws ParameterError unless every field is finite and positive.
  void validate() const;

  friend bool operator==(const ChannelParams&, const ChannelParams&) = default;
};

struct TaskType {
  int id = 0;
  double demand_cycles = 0.0;
  double data_bits = 0.0;

  friend bool operator==(const TaskType&, const TaskType&) = default;
};

inline constexpr int kTaskTypeCount = 6;

/// Six types, demands log-spaced over [1e9, 1e10] cycles and sizes
/// log-spaced over [5e5, 1e7] bits, ordered light to heavy.
std::vector<TaskType> default_task_types();

struct Task {
  std::int64_t task_id = 0;
  int vehicle_id = 0;
  int type = 0;
  double demand_cycles = 0.0;
  double size_bits = 0.0;
  double created_at = 0.0;
};

enum class Tier { vehicle, server_low, server_mid, server_high };

std::string_view to_string(Tier tier);
Tier tier_from_string(std::string_view name);

/// A processing element with a fluid backlog. `updated_at` is the simulated
/// time up to which `backlog_cycles` has been drained.
struct ComputeNode {
  int node_id = 0;
  Tier tier = Tier::vehicle;
  double rate = 1e9;       // cycles/s currently in effect
  double base_rate = 1e9;  // rate before any degradation
  double backlog_cycles = 0.0;
  Vec2 position;
  double updated_at = 0.0;

  friend bool operator==(const ComputeNode&, const ComputeNode&) = default;
};

/// B log2(1 + P d^-alpha / sigma^2), with d clamped below at kMinDistance.
double uplink_rate(const ChannelParams& channel, double distance_m);

double transmission_delay(double size_bits, double rate_bps);

/// (L + D) / f for a server node.
double server_compute_delay(double backlog_cycles, double demand_cycles, double rate);

/// (L + D) / f for the vehicle's own processor.
double local_compute_delay(double backlog_cycles, double demand_cycles, double rate);

struct Latency {
  double transmission = 0.0;
  double computation = 0.0;
  double end_to_end = 0.0;
};

/// Latency of executing `task` under `action` given the current node states.
/// The distance to the chosen server is taken from the node positions.
Latency end_to_end_latency(Action action, const Task& task, const ComputeNode& vehicle,
                           std::span<const ComputeNode> servers, const ChannelParams& channel);

inline double reward(double end_to_end_latency) { return -end_to_end_latency; }

}  // namespace twinloop::model
