// twinloop: run experiments, compare their outputs, export plot data.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "twinloop/config.hpp"
#include "twinloop/errors.hpp"
#include "twinloop/experiments.hpp"

namespace fs = std::filesystem;
using namespace twinloop;

namespace {

struct RunFlags {
  std::string config;
  std::string method;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::optional<int> k;
  std::optional<double> t_dt;
  bool multi = false;
  std::string weights;
  std::optional<double> duration;
  unsigned jobs = 1;
};

int cmd_run(const RunFlags& f) {
  config::RunConfig cfg = f.config.empty() ? config::parse_config_text("") : config::parse_config_file(f.config);
  if (!f.method.empty()) cfg.method.kind = experiments::method_kind_from_string(f.method);
  if (f.k) cfg.method.k = *f.k;
  if (f.t_dt) cfg.method.t_dt = *f.t_dt;
  if (f.multi) cfg.method.multi = true;
  if (!f.weights.empty()) cfg.method.weights_path = f.weights;
  if (f.duration) cfg.settings.duration = *f.duration;
  if (!f.seeds.empty()) cfg.seeds = f.seeds;
  cfg.output_dir = f.out;
  config::validate(cfg);

  const fs::path root = fs::path(f.out) / cfg.method.label();
  fs::create_directories(root);
  {
    std::ofstream echo(root / "config.json");
    echo << config::to_json(cfg).dump(2) << '\n';
  }

  std::vector<experiments::RunRequest> requests;
  for (auto s : cfg.seeds) requests.push_back({cfg.method, s});

  int failures = 0;
  std::vector<std::optional<experiments::RunArtifacts>> results(requests.size());
  std::vector<std::string> errors(requests.size());
  {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < requests.size();) {
        try {
          results[i] = experiments::run_method(cfg.settings, requests[i].method, requests[i].seed);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(f.jobs, static_cast<unsigned>(requests.size())));
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
  }

  for (std::size_t i = 0; i < requests.size(); ++i) {
    const fs::path dir = root / ("seed_" + std::to_string(requests[i].seed));
    if (results[i]) {
      experiments::write_run(*results[i], dir);
      const auto& s = results[i]->summary;
      std::cout << cfg.method.label() << " seed " << requests[i].seed << ":";
      for (const auto& ph : s) {
        std::cout << ' ' << ph.name << '=' << (ph.mean ? sim::format_double(*ph.mean) : "-");
      }
      std::cout << '\n';
    } else {
      ++failures;
      fs::create_directories(dir);
      std::ofstream(dir / "FAILED") << errors[i] << '\n';
      std::cerr << "seed " << requests[i].seed << " failed: " << errors[i] << '\n';
    }
  }
  return failures == 0 ? 0 : 1;
}

std::vector<experiments::RunArtifacts> load_inputs(const std::vector<std::string>& inputs) {
  std::vector<experiments::RunArtifacts> runs;
  for (const auto& in : inputs) {
    const auto dirs = experiments::find_runs(in);
    if (dirs.empty()) throw LoadError("no run directories under '" + in + "'");
    for (const auto& d : dirs) runs.push_back(experiments::read_run(d));
  }
  return runs;
}

int cmd_compare(const std::vector<std::string>& inputs, const std::string& out, double window) {
  const auto runs = load_inputs(inputs);
  const auto report = experiments::compare(runs, window);
  std::cout << experiments::report_to_text(report);
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream(fs::path(out) / "comparison.json") << experiments::report_to_json(report).dump(2) << '\n';
    std::ofstream(fs::path(out) / "comparison.txt") << experiments::report_to_text(report);
    std::ofstream series(fs::path(out) / "trajectory.csv");
    experiments::write_series_csv(series, report.series);
  }
  return 0;
}

int cmd_emit_plots(const std::vector<std::string>& inputs, const std::string& out, double window) {
  const auto runs = load_inputs(inputs);
  const auto report = experiments::compare(runs, window);
  fs::create_directories(out);
  {
    std::ofstream bars(fs::path(out) / "bars.csv");
    experiments::write_bar_csv(bars, experiments::bar_data(report));
  }
  std::ofstream series(fs::path(out) / "trajectory.csv");
  experiments::write_series_csv(series, report.series);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"twinloop: digital-twin assisted task offloading experiments"};
  app.require_subcommand(1);

  RunFlags rf;
  auto* run = app.add_subcommand("run", "Run one method over one or more seeds");
  run->add_option("--config", rf.config, "JSON config file (defaults when omitted)")->check(CLI::ExistingFile);
  run->add_option("--method", rf.method, "random | online | offline | exploit | dt")
      ->check(CLI::IsMember({"random", "online", "offline", "exploit", "dt"}));
  run->add_option("--seed", rf.seeds, "Master seed (repeatable)");
  run->add_option("--out", rf.out, "Output directory")->required();
  run->add_option("--k", rf.k, "Triggers per phase");
  run->add_option("--t-dt", rf.t_dt, "Twin training budget per scenario (s)");
  run->add_flag("--multi", rf.multi, "Three twin scenarios per trigger");
  run->add_option("--weights", rf.weights, "Team weights for offline runs");
  run->add_option("--duration", rf.duration, "Stop before the scenario horizon (s)");
  run->add_option("--jobs", rf.jobs, "Parallel seed runs")->check(CLI::PositiveNumber);

  std::vector<std::string> cmp_inputs;
  std::string cmp_out;
  double cmp_window = 50.0;
  auto* cmp = app.add_subcommand("compare", "Phase-wise latency table over run directories");
  cmp->add_option("--inputs", cmp_inputs, "Run directories or roots")->required();
  cmp->add_option("--out", cmp_out, "Write comparison.json/.txt and trajectory.csv here");
  cmp->add_option("--window", cmp_window, "Time-series window (s)")->check(CLI::PositiveNumber);

  std::vector<std::string> plot_inputs;
  std::string plot_out;
  double plot_window = 50.0;
  auto* plots = app.add_subcommand("emit-plots", "Bar and trajectory CSVs for external plotting");
  plots->add_option("--inputs", plot_inputs, "Run directories or roots")->required();
  plots->add_option("--out", plot_out, "Output directory")->required();
  plots->add_option("--window", plot_window, "Time-series window (s)")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(rf);
    if (*cmp) return cmd_compare(cmp_inputs, cmp_out, cmp_window);
    if (*plots) return cmd_emit_plots(plot_inputs, plot_out, plot_window);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
