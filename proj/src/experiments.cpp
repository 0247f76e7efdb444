#include "twinloop/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include "twinloop/errors.hpp"

namespace twinloop::experiments {

using nlohmann::json;

std::string to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::random: return "random";
    case MethodKind::online: return "online";
    case MethodKind::offline: return "offline";
    case MethodKind::exploit: return "exploit";
    case MethodKind::dt: return "dt";
  }
  return "unknown";
}

MethodKind method_kind_from_string(const std::string& name) {
  for (auto k : {MethodKind::random, MethodKind::online, MethodKind::offline, MethodKind::exploit, MethodKind::dt}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("method.kind", "unknown method '" + name + "'");
}

std::string MethodSpec::label() const {
  std::ostringstream s;
  s << to_string(kind);
  if (kind == MethodKind::exploit || kind == MethodKind::dt) {
    if (kind == MethodKind::dt) s << (multi ? "_multi" : "_single");
    s << "_k" << k << "_T" << sim::format_double(t_dt);
  }
  return s.str();
}

void MethodSpec::validate() const {
  if (k < 0) throw ConfigError("method.k", "must be >= 0");
  if ((kind == MethodKind::exploit || kind == MethodKind::dt) && !(std::isfinite(t_dt) && t_dt > 0.0)) {
    throw ConfigError("method.t_dt", "must be positive");
  }
  if (kind == MethodKind::offline && weights_path.empty()) {
    throw ConfigError("method.weights_path", "offline runs need a weights file");
  }
  if (multi && kind != MethodKind::dt) throw ConfigError("method.multi", "only applies to dt runs");
}

double Settings::horizon() const {
  const double h = scenario.horizon();
  return duration ? std::min(h, *duration) : h;
}

// ---------------------------------------------------------------------------
// Physical-world runs

namespace {

RunArtifacts run_physical(const Settings& st, const MethodSpec& method, std::uint64_t seed,
                          const learner::TeamWeights* preload, const SyncObserver& on_sync) {
  st.scenario.validate();
  st.hp.validate();
  method.validate();
  if (st.duration && !(*st.duration >= 0.0)) throw ConfigError("duration", "must be >= 0");

  const auto& scenario = st.scenario;
  auto multipliers = sim::resolve_multipliers(scenario, seed);
  sim::World world = sim::make_world(scenario, seed, "pt", multipliers.front());
  std::vector<int> initial_ids;
  for (const auto& v : world.vehicles) initial_ids.push_back(v.kinematics.vehicle_id);

  std::unique_ptr<sim::RandomController> random;
  std::unique_ptr<learner::AgentTeam> team;
  sim::Controller* controller = nullptr;
  if (method.kind == MethodKind::random) {
    random = std::make_unique<sim::RandomController>(make_stream(seed, "pt/random"));
    controller = random.get();
  } else {
    team = std::make_unique<learner::AgentTeam>(st.hp, learner::network_shape(scenario, st.hp), seed, "pt");
    if (method.kind == MethodKind::offline) {
      team->set_preloaded(*preload);
      team->on_vehicles_added(initial_ids);
      team->set_learning(false);
      team->set_tau(st.hp.tau_min);
    } else {
      for (int id : initial_ids) team->add_fresh(id);
    }
    controller = team.get();
  }

  sim::Simulator simulator(std::move(world), *controller);
  simulator.schedule_phases(scenario.phases, multipliers);

  RunArtifacts out;
  out.label = method.label();
  out.method = method;
  out.seed = seed;
  out.phases = sim::phase_bounds(scenario.phases);

  const bool uses_twin = method.kind == MethodKind::exploit || method.kind == MethodKind::dt;
  twin::DTConfig dt = st.dt;
  dt.t_dt = method.t_dt;
  dt.scenario_count = method.multi ? 3 : 1;
  if (uses_twin) dt.validate();
  std::map<int, learner::TeamWeights> in_flight;
  Rng sync_rng = make_stream(seed, "sync");

  if (uses_twin && method.k > 0) {
    const auto schedule = twin::schedule_triggers(scenario.phases, method.k);
    for (std::size_t i = 0; i < schedule.triggers.size(); ++i) {
      simulator.schedule(schedule.triggers[i].time, sim::EventKind::dt_trigger, static_cast<int>(i));
    }
    simulator.set_control_handler([&](sim::Simulator& s, const sim::Event& e) {
      if (e.kind == sim::EventKind::dt_trigger) {
        const auto snap = twin::capture_snapshot(s.world(), *team, e.time, dt.inherit_replay);
        auto result = twin::run_trigger(snap, scenario, st.hp, dt, seed, e.subject);
        ++out.stats.triggers;
        out.stats.twin_scenarios += result.scenarios;
        out.stats.twin_decisions += result.decisions;
        out.stats.twin_train_steps += result.train_steps;
        in_flight[e.subject] = std::move(result.weights);
        team->suspend_updates();
        s.schedule(e.time + dt.effective_sync_latency(), sim::EventKind::dt_sync_apply, e.subject);
      } else {
        const auto it = in_flight.find(e.subject);
        const auto report =
            twin::sync_weights(*team, it->second, method.kind == MethodKind::exploit, sync_rng);
        in_flight.erase(it);
        team->resume_updates();
        ++out.stats.syncs;
        if (report.mismatch()) ++out.stats.sync_mismatches;
        if (on_sync) on_sync(*team, report);
      }
    });
  }

  simulator.run_until(st.horizon());

  out.records = simulator.take_records();
  out.summary = sim::summarise(out.records, out.phases);
  out.stats.decisions = simulator.decisions();
  if (team) {
    out.stats.train_steps = team->total_train_steps();
    out.final_weights = team->export_weights();
  }
  return out;
}

}  // namespace

RunArtifacts run_method(const Settings& settings, const MethodSpec& method, std::uint64_t seed,
                        const SyncObserver& on_sync) {
  if (method.kind == MethodKind::offline) {
    method.validate();
    const auto weights = learner::load_team_weights(method.weights_path);
    if (weights.empty()) throw LoadError("weights file '" + method.weights_path + "' holds no agents");
    return run_physical(settings, method, seed, &weights, on_sync);
  }
  return run_physical(settings, method, seed, nullptr, on_sync);
}

RunArtifacts run_random(const Settings& settings, std::uint64_t seed) {
  return run_method(settings, {.kind = MethodKind::random}, seed);
}

RunArtifacts run_online(const Settings& settings, std::uint64_t seed) {
  return run_method(settings, {.kind = MethodKind::online}, seed);
}

RunArtifacts run_offline(const Settings& settings, std::uint64_t seed, const std::string& weights_path) {
  return run_method(settings, {.kind = MethodKind::offline, .weights_path = weights_path}, seed);
}

RunArtifacts run_exploit(const Settings& settings, std::uint64_t seed, int k, double t_dt) {
  return run_method(settings, {.kind = MethodKind::exploit, .k = k, .t_dt = t_dt}, seed);
}

RunArtifacts run_dt(const Settings& settings, std::uint64_t seed, int k, double t_dt, bool multi) {
  return run_method(settings, {.kind = MethodKind::dt, .k = k, .t_dt = t_dt, .multi = multi}, seed);
}

std::vector<RunArtifacts> run_batch(const Settings& settings, std::span<const RunRequest> requests,
                                    unsigned jobs) {
  std::vector<RunArtifacts> results(requests.size());
  std::vector<std::exception_ptr> errors(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < requests.size();) {
      try {
        results[i] = run_method(settings, requests[i].method, requests[i].seed);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(requests.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

// ---------------------------------------------------------------------------
// Reporting

std::vector<SeriesPoint> time_series(std::span<const sim::TaskOutcomeRecord> records, const std::string& label,
                                     double horizon, double window) {
  if (!(window > 0.0)) throw ParameterError("time-series window must be positive");
  const auto n = static_cast<std::size_t>(std::ceil(horizon / window - 1e-12));
  std::vector<double> sum(n, 0.0);
  std::vector<std::size_t> count(n, 0);
  for (const auto& r : records) {
    if (r.decision_time < 0.0 || r.decision_time >= horizon) continue;
    const auto w = std::min(n - 1, static_cast<std::size_t>(r.decision_time / window));
    sum[w] += r.t_e2e;
    ++count[w];
  }
  std::vector<SeriesPoint> out;
  out.reserve(n);
  for (std::size_t w = 0; w < n; ++w) {
    out.push_back({static_cast<double>(w) * window, label,
                   count[w] ? sum[w] / static_cast<double>(count[w]) : std::numeric_limits<double>::quiet_NaN()});
  }
  return out;
}

namespace {

std::optional<double> median_of(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

std::vector<sim::PhaseSummary> median_summary(std::span<const std::vector<sim::PhaseSummary>> per_seed) {
  std::vector<sim::PhaseSummary> out;
  if (per_seed.empty()) return out;
  for (std::size_t p = 0; p < per_seed.front().size(); ++p) {
    std::vector<double> mean, p90, p99, count;
    for (const auto& s : per_seed) {
      const auto& ph = s.at(p);
      count.push_back(static_cast<double>(ph.count));
      if (ph.mean) mean.push_back(*ph.mean);
      if (ph.p90) p90.push_back(*ph.p90);
      if (ph.p99) p99.push_back(*ph.p99);
    }
    sim::PhaseSummary m;
    m.name = per_seed.front()[p].name;
    m.count = static_cast<std::size_t>(std::llround(*median_of(count)));
    m.mean = median_of(mean);
    m.p90 = median_of(p90);
    m.p99 = median_of(p99);
    out.push_back(std::move(m));
  }
  return out;
}

ComparisonReport compare(std::span<const RunArtifacts> runs, double window) {
  if (runs.empty()) throw ParameterError("comparison needs at least one run");
  ComparisonReport report;
  report.window = window;
  report.phases = runs.front().phases;
  for (const auto& r : runs) {
    if (r.phases != report.phases) {
      throw ParameterError("phase boundaries of '" + r.label + "' (seed " + std::to_string(r.seed) +
                           ") differ from the first run");
    }
  }
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunArtifacts*>> by_label;
  for (const auto& r : runs) {
    if (!by_label.count(r.label)) order.push_back(r.label);
    by_label[r.label].push_back(&r);
  }
  const double horizon = report.phases.empty() ? 0.0 : report.phases.back().end;
  for (const auto& label : order) {
    const auto& group = by_label[label];
    std::vector<std::vector<sim::PhaseSummary>> per_seed;
    std::vector<sim::TaskOutcomeRecord> pooled;
    for (const auto* r : group) {
      per_seed.push_back(r->summary);
      pooled.insert(pooled.end(), r->records.begin(), r->records.end());
      if (group.size() > 1) report.rows.push_back({label, r->seed, r->summary});
    }
    if (group.size() == 1) {
      report.rows.push_back({label, group.front()->seed, group.front()->summary});
    } else {
      report.rows.push_back({label, std::nullopt, median_summary(per_seed)});
    }
    auto series = time_series(pooled, label, horizon, window);
    report.series.insert(report.series.end(), series.begin(), series.end());
  }
  return report;
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json phase_to_json(const sim::PhaseSummary& s) {
  return {{"phase", s.name}, {"count", s.count}, {"mean", optional_number(s.mean)},
          {"p90", optional_number(s.p90)}, {"p99", optional_number(s.p99)}};
}

std::optional<double> read_optional(const json& j) {
  return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}

std::string fixed3(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << *v;
  return s.str();
}

}  // namespace

json report_to_json(const ComparisonReport& report) {
  json phases = json::array();
  for (const auto& p : report.phases) phases.push_back({{"name", p.name}, {"start", p.start}, {"end", p.end}});
  json rows = json::array();
  for (const auto& r : report.rows) {
    json ph = json::array();
    for (const auto& s : r.phases) ph.push_back(phase_to_json(s));
    rows.push_back({{"method", r.label}, {"seed", r.seed ? json(*r.seed) : json("median")}, {"phases", ph}});
  }
  return {{"phases", phases}, {"rows", rows}, {"window", report.window}};
}

std::string report_to_text(const ComparisonReport& report) {
  std::size_t label_width = 6;
  for (const auto& r : report.rows) label_width = std::max(label_width, r.label.size());
  constexpr int cell = 10;
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(label_width) + 2) << "method" << std::setw(8) << "seed";
  for (const auto& p : report.phases) {
    const std::string head = p.name + " (" + sim::format_double(p.start) + "-" + sim::format_double(p.end) + ")";
    out << std::right << std::setw(cell * 3) << head;
  }
  out << '\n' << std::left << std::setw(static_cast<int>(label_width) + 2) << "" << std::setw(8) << "";
  for (std::size_t i = 0; i < report.phases.size(); ++i) {
    out << std::right << std::setw(cell) << "mean" << std::setw(cell) << "p90" << std::setw(cell) << "p99";
  }
  out << '\n';
  for (const auto& r : report.rows) {
    out << std::left << std::setw(static_cast<int>(label_width) + 2) << r.label << std::setw(8)
        << (r.seed ? std::to_string(*r.seed) : std::string("median"));
    for (const auto& s : r.phases) {
      out << std::right << std::setw(cell) << fixed3(s.mean) << std::setw(cell) << fixed3(s.p90) << std::setw(cell)
          << fixed3(s.p99);
    }
    out << '\n';
  }
  return out.str();
}

std::vector<BarRow> bar_data(const ComparisonReport& report) {
  std::vector<BarRow> out;
  std::vector<std::string> seen;
  // Prefer the median row of a label when it exists.
  std::map<std::string, const ComparisonRow*> chosen;
  for (const auto& r : report.rows) {
    if (!chosen.count(r.label)) seen.push_back(r.label);
    if (!chosen.count(r.label) || !r.seed) chosen[r.label] = &r;
  }
  for (const auto& label : seen) {
    for (const auto& s : chosen[label]->phases) {
      out.push_back({label, s.name, s.mean.value_or(std::numeric_limits<double>::quiet_NaN())});
    }
  }
  return out;
}

void write_bar_csv(std::ostream& out, std::span<const BarRow> rows) {
  out << "method,phase,mean_latency\n";
  for (const auto& r : rows) out << r.label << ',' << r.phase << ',' << sim::format_double(r.mean) << '\n';
}

void write_series_csv(std::ostream& out, std::span<const SeriesPoint> series) {
  out << "window_start,method,mean_latency\n";
  for (const auto& p : series) {
    out << sim::format_double(p.window_start) << ',' << p.label << ',' << sim::format_double(p.mean_latency) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Artifact I/O

json summary_to_json(const RunArtifacts& run) {
  json phases = json::array();
  for (std::size_t i = 0; i < run.phases.size(); ++i) {
    json p = phase_to_json(run.summary.at(i));
    p["start"] = run.phases[i].start;
    p["end"] = run.phases[i].end;
    phases.push_back(std::move(p));
  }
  const auto& s = run.stats;
  return {{"method", run.label},
          {"spec",
           {{"kind", to_string(run.method.kind)},
            {"k", run.method.k},
            {"t_dt", run.method.t_dt},
            {"multi", run.method.multi},
            {"weights_path", run.method.weights_path}}},
          {"seed", run.seed},
          {"phases", phases},
          {"stats",
           {{"decisions", s.decisions},
            {"train_steps", s.train_steps},
            {"triggers", s.triggers},
            {"syncs", s.syncs},
            {"twin_scenarios", s.twin_scenarios},
            {"twin_decisions", s.twin_decisions},
            {"twin_train_steps", s.twin_train_steps},
            {"sync_mismatches", s.sync_mismatches}}}};
}

void write_run(const RunArtifacts& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "records.csv");
    if (!f) throw LoadError("cannot write " + (dir / "records.csv").string());
    sim::write_records_csv(f, run.records);
  }
  {
    std::ofstream f(dir / "summary.json");
    f << summary_to_json(run).dump(2) << '\n';
  }
  if (!run.final_weights.empty()) learner::save_team_weights((dir / "weights.bin").string(), run.final_weights);
}

RunArtifacts read_run(const std::filesystem::path& dir) {
  RunArtifacts run;
  json j;
  {
    std::ifstream f(dir / "summary.json");
    if (!f) throw LoadError("no summary.json in " + dir.string());
    try {
      j = json::parse(f);
    } catch (const json::exception& e) {
      throw LoadError("malformed summary.json in " + dir.string() + ": " + e.what());
    }
  }
  try {
    run.label = j.at("method").get<std::string>();
    run.seed = j.at("seed").get<std::uint64_t>();
    const auto& spec = j.at("spec");
    run.method.kind = method_kind_from_string(spec.at("kind").get<std::string>());
    run.method.k = spec.at("k").get<int>();
    run.method.t_dt = spec.at("t_dt").get<double>();
    run.method.multi = spec.at("multi").get<bool>();
    run.method.weights_path = spec.at("weights_path").get<std::string>();
    for (const auto& p : j.at("phases")) {
      run.phases.push_back({p.at("phase").get<std::string>(), p.at("start").get<double>(), p.at("end").get<double>()});
      sim::PhaseSummary s;
      s.name = p.at("phase").get<std::string>();
      s.count = p.at("count").get<std::size_t>();
      s.mean = read_optional(p.at("mean"));
      s.p90 = read_optional(p.at("p90"));
      s.p99 = read_optional(p.at("p99"));
      run.summary.push_back(std::move(s));
    }
    const auto& st = j.at("stats");
    run.stats.decisions = st.at("decisions").get<std::uint64_t>();
    run.stats.train_steps = st.at("train_steps").get<std::uint64_t>();
    run.stats.triggers = st.at("triggers").get<int>();
    run.stats.syncs = st.at("syncs").get<int>();
    run.stats.twin_scenarios = st.at("twin_scenarios").get<int>();
    run.stats.twin_decisions = st.at("twin_decisions").get<std::uint64_t>();
    run.stats.twin_train_steps = st.at("twin_train_steps").get<std::uint64_t>();
    run.stats.sync_mismatches = st.at("sync_mismatches").get<int>();
  } catch (const json::exception& e) {
    throw LoadError("malformed summary.json in " + dir.string() + ": " + e.what());
  }
  std::ifstream f(dir / "records.csv");
  if (!f) throw LoadError("no records.csv in " + dir.string());
  run.records = sim::read_records_csv(f);
  return run;
}

std::vector<std::filesystem::path> find_runs(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> out;
  if (std::filesystem::exists(root / "summary.json")) out.push_back(root);
  if (std::filesystem::is_directory(root)) {
    for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
      if (e.is_regular_file() && e.path().filename() == "summary.json" && e.path().parent_path() != root) {
        out.push_back(e.path().parent_path());
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace twinloop::experiments
