#pragma once

// Baseline and variant orchestration: Random, Online, Offline, Exploit and
// DT-assisted runs over the physical world, plus phase-wise comparison.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "twinloop/learner.hpp"
#include "twinloop/simcore.hpp"
#include "twinloop/twin.hpp"

namespace twinloop::experiments {

enum class MethodKind { random, online, offline, exploit, dt };

std::string to_string(MethodKind kind);
MethodKind method_kind_from_string(const std::string& name);

struct MethodSpec {
  MethodKind kind = MethodKind::online;
  int k = 0;             // triggers per phase (exploit, dt)
  double t_dt = 500.0;   // twin seconds per scenario (exploit, dt)
  bool multi = false;    // three scenarios per trigger (dt)
  std::string weights_path{};  // offline

  /// e.g. "online", "exploit_k1_T250", "dt_multi_k2_T500".
  std::string label() const;
  /// Throws ConfigError naming the offending key under `method.`.
  void validate() const;

  friend bool operator==(const MethodSpec&, const MethodSpec&) = default;
};

struct Settings {
  sim::ScenarioConfig scenario = sim::default_scenario();
  learner::Hyperparams hp;
  twin::DTConfig dt;
  /// Truncates the run before the scenario horizon.
  std::optional<double> duration;

  double horizon() const;

  friend bool operator==(const Settings&, const Settings&) = default;
};

struct RunStats {
  std::uint64_t decisions = 0;
  std::uint64_t train_steps = 0;
  int triggers = 0;
  int syncs = 0;
  int twin_scenarios = 0;
  std::uint64_t twin_decisions = 0;
  std::uint64_t twin_train_steps = 0;
  int sync_mismatches = 0;
};

struct RunArtifacts {
  std::string label;
  MethodSpec method;
  std::uint64_t seed = 0;
  std::vector<sim::PhaseBounds> phases;
  std::vector<sim::TaskOutcomeRecord> records;
  std::vector<sim::PhaseSummary> summary;
  RunStats stats;
  learner::TeamWeights final_weights;  // empty for random
};

/// Observer hook invoked right after every weight synchronisation.
using SyncObserver = std::function<void(const learner::AgentTeam&, const twin::SyncReport&)>;

RunArtifacts run_method(const Settings& settings, const MethodSpec& method, std::uint64_t seed,
                        const SyncObserver& on_sync = {});

RunArtifacts run_random(const Settings& settings, std::uint64_t seed);
RunArtifacts run_online(const Settings& settings, std::uint64_t seed);
RunArtifacts run_offline(const Settings& settings, std::uint64_t seed, const std::string& weights_path);
RunArtifacts run_exploit(const Settings& settings, std::uint64_t seed, int k, double t_dt);
RunArtifacts run_dt(const Settings& settings, std::uint64_t seed, int k, double t_dt, bool multi);

struct RunRequest {
  MethodSpec method;
  std::uint64_t seed = 0;
};

/// Runs independent requests on up to `jobs` threads; results keep request order.
std::vector<RunArtifacts> run_batch(const Settings& settings, std::span<const RunRequest> requests,
                                    unsigned jobs);

// ---------------------------------------------------------------------------
// Reporting

struct ComparisonRow {
  std::string label;
  std::optional<std::uint64_t> seed;  // empty on median-over-seeds rows
  std::vector<sim::PhaseSummary> phases;
};

struct SeriesPoint {
  double window_start = 0.0;
  std::string label;
  double mean_latency = 0.0;  // NaN when the window holds no task
};

struct ComparisonReport {
  std::vector<sim::PhaseBounds> phases;
  std::vector<ComparisonRow> rows;
  std::vector<SeriesPoint> series;
  double window = 50.0;

  /// Stats per phase times phases, e.g. 12 for 3 stats over 4 phases.
  std::size_t grid_columns() const { return 3 * phases.size(); }
};

/// Windowed mean latency over [0, horizon) in windows of `window` seconds.
std::vector<SeriesPoint> time_series(std::span<const sim::TaskOutcomeRecord> records, const std::string& label,
                                     double horizon, double window);

/// Table-shaped comparison. Labels with several seeds get one row per seed
/// plus a median row. Throws ParameterError if phase bounds differ.
ComparisonReport compare(std::span<const RunArtifacts> runs, double window = 50.0);

/// Median of per-seed phase statistics.
std::vector<sim::PhaseSummary> median_summary(std::span<const std::vector<sim::PhaseSummary>> per_seed);

nlohmann::json report_to_json(const ComparisonReport& report);
std::string report_to_text(const ComparisonReport& report);

struct BarRow {
  std::string label;
  std::string phase;
  double mean = 0.0;
};

/// Phase-mean bars (one row per label and phase, in first-seen label order).
std::vector<BarRow> bar_data(const ComparisonReport& report);
void write_bar_csv(std::ostream& out, std::span<const BarRow> rows);
void write_series_csv(std::ostream& out, std::span<const SeriesPoint> series);

// ---------------------------------------------------------------------------
// Artifact I/O

nlohmann::json summary_to_json(const RunArtifacts& run);
/// Writes records.csv, summary.json and, when present, weights.bin.
void write_run(const RunArtifacts& run, const std::filesystem::path& dir);
/// Reads a directory written by write_run (weights are not loaded).
RunArtifacts read_run(const std::filesystem::path& dir);
/// Every run directory (one holding summary.json) under `root`, sorted.
std::vector<std::filesystem::path> find_runs(const std::filesystem::path& root);

}  // namespace twinloop::experiments
