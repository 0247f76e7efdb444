#include "twinloop/model.hpp"

#include <cmath>
#include <string>

#include "twinloop/errors.hpp"

namespace twinloop::model {

namespace {

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

void require_rate(double rate, const char* what) {
  if (!positive_finite(rate)) {
    throw ParameterError(std::string(what) + " must be finite and positive, got " +
                         std::to_string(rate));
  }
}

void require_non_negative(double v, const char* what) {
  if (!std::isfinite(v) || v < 0.0) {
    throw ParameterError(std::string(what) + " must be finite and non-negative, got " +
                         std::to_string(v));
  }
}

double fluid_delay(double backlog, double demand, double rate) {
  require_rate(rate, "processing rate");
  require_non_negative(backlog, "backlog");
  require_non_negative(demand, "demand");
  return (backlog + demand) / rate;
}

}  // namespace

void ChannelParams::validate() const {
  require_rate(bandwidth_hz, "bandwidth");
  require_rate(tx_power_w, "transmit power");
  require_rate(path_loss_exponent, "path-loss exponent");
  require_rate(noise_power_w, "noise power");
}

std::vector<TaskType> default_task_types() {
  std::vector<TaskType> types;
  types.reserve(kTaskTypeCount);
  const double demand_lo = std::log10(1e9), demand_hi = std::log10(1e10);
  const double size_lo = std::log10(5e5), size_hi = std::log10(1e7);
  for (int i = 0; i < kTaskTypeCount; ++i) {
    const double u = static_cast<double>(i) / (kTaskTypeCount - 1);
    types.push_back({i, std::pow(10.0, demand_lo + u * (demand_hi - demand_lo)),
                     std::pow(10.0, size_lo + u * (size_hi - size_lo))});
  }
  // pin the endpoints exactly
  types.front().demand_cycles = 1e9;
  types.front().data_bits = 5e5;
  types.back().demand_cycles = 1e10;
  types.back().data_bits = 1e7;
  return types;
}

std::string_view to_string(Tier tier) {
  switch (tier) {
    case Tier::vehicle: return "vehicle";
    case Tier::server_low: return "low";
    case Tier::server_mid: return "mid";
    case Tier::server_high: return "high";
  }
  return "unknown";
}

Tier tier_from_string(std::string_view name) {
  if (name == "vehicle") return Tier::vehicle;
  if (name == "low") return Tier::server_low;
  if (name == "mid") return Tier::server_mid;
  if (name == "high") return Tier::server_high;
  throw ParameterError("unknown tier '" + std::string(name) + "'");
}

double uplink_rate(const ChannelParams& channel, double distance_m) {
  channel.validate();
  if (std::isnan(distance_m)) throw ParameterError("distance is NaN");
  const double d = distance_m < kMinDistance ? kMinDistance : distance_m;
  const double snr = channel.tx_power_w * std::pow(d, -channel.path_loss_exponent) /
                     channel.noise_power_w;
  return channel.bandwidth_hz * std::log2(1.0 + snr);
}

double transmission_delay(double size_bits, double rate_bps) {
  require_rate(rate_bps, "uplink rate");
  require_non_negative(size_bits, "data size");
  return size_bits / rate_bps;
}

double server_compute_delay(double backlog_cycles, double demand_cycles, double rate) {
  return fluid_delay(backlog_cycles, demand_cycles, rate);
}

double local_compute_delay(double backlog_cycles, double demand_cycles, double rate) {
  return fluid_delay(backlog_cycles, demand_cycles, rate);
}

Latency end_to_end_latency(Action action, const Task& task, const ComputeNode& vehicle,
                           std::span<const ComputeNode> servers, const ChannelParams& channel) {
  if (action < 0 || action > static_cast<Action>(servers.size())) {
    throw ActionError("action " + std::to_string(action) + " outside [0, " +
                      std::to_string(servers.size()) + "]");
  }
  Latency out;
  if (action == kLocalAction) {
    out.computation =
        local_compute_delay(vehicle.backlog_cycles, task.demand_cycles, vehicle.rate);
    out.end_to_end = out.computation;
    return out;
  }
  const ComputeNode& server = servers[static_cast<std::size_t>(action - 1)];
  const double d = std::hypot(vehicle.position.x - server.position.x,
                              vehicle.position.y - server.position.y);
  out.transmission = transmission_delay(task.size_bits, uplink_rate(channel, d));
  out.computation = server_compute_delay(server.backlog_cycles, task.demand_cycles, server.rate);
  out.end_to_end = out.transmission + out.computation;
  return out;
}

}  // namespace twinloop::model
