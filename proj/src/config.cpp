#include "twinloop/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "twinloop/errors.hpp"

namespace twinloop::config {

using nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were read so that leftovers
// can be reported as unknown.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  template <class T>
  void get(const std::string& key, T& out) {
    if (const json* v = find(key)) out = convert<T>(*v, at(key));
  }

  template <class T>
  void get_optional(const std::string& key, std::optional<T>& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if (it->is_null()) {
      out.reset();
    } else {
      out = convert<T>(*it, at(key));
    }
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(at(key), "unknown key");
    }
  }

  template <class T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path, "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
          throw ConfigError(path, "must be non-negative");
        }
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path, "expected a string");
    }
    try {
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path, e.what());
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string item(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

const json& expect_array(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path, "expected an array");
  return v;
}

template <class T>
std::vector<T> read_vector(const json& v, const std::string& path) {
  std::vector<T> out;
  const auto& arr = expect_array(v, path);
  for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(Reader::convert<T>(arr[i], item(path, i)));
  return out;
}

void read_range(Reader& r, const std::string& key, double& lo, double& hi) {
  if (const json* v = r.find(key)) {
    Reader s(*v, r.at(key));
    s.get("min", lo);
    s.get("max", hi);
    s.finish();
  }
}

sim::PhaseConfig read_phase(const json& v, const std::string& path, std::size_t type_count) {
  Reader r(v, path);
  sim::PhaseConfig ph;
  r.get("name", ph.name);
  r.get("start_time", ph.start_time);
  r.get("end_time", ph.end_time);
  r.get("vehicle_count", ph.vehicle_count);
  r.get("arrival_rate", ph.arrival_rate);
  if (const json* w = r.find("task_type_weights")) {
    ph.task_type_weights = read_vector<double>(*w, r.at("task_type_weights"));
  } else {
    ph.task_type_weights.assign(type_count, 1.0 / static_cast<double>(type_count));
  }
  if (const json* m = r.find("server_rate_multipliers")) {
    const std::string mp = r.at("server_rate_multipliers");
    if (!m->is_object()) throw ConfigError(mp, "expected an object keyed by server index");
    for (const auto& [key, value] : m->items()) {
      int id = 0;
      std::istringstream in(key);
      if (!(in >> id) || !in.eof()) throw ConfigError(mp + "." + key, "keys must be server indices");
      ph.server_rate_multipliers[id] = Reader::convert<double>(value, mp + "." + key);
    }
  }
  if (const json* d = r.find("degraded_servers")) ph.degraded_servers = read_vector<int>(*d, r.at("degraded_servers"));
  r.get("degradation_min", ph.degradation_min);
  r.get("degradation_max", ph.degradation_max);
  r.finish();
  return ph;
}

sim::ScenarioConfig read_scenario(const json* v) {
  sim::ScenarioConfig sc = sim::default_scenario();
  if (!v) return sc;
  Reader r(*v, "scenario");
  if (const json* g = r.find("grid")) {
    Reader gr(*g, "scenario.grid");
    gr.get("extent", sc.grid.extent);
    gr.get("block_length", sc.grid.block_length);
    gr.finish();
  }
  if (const json* c = r.find("channel")) {
    Reader cr(*c, "scenario.channel");
    cr.get("bandwidth_hz", sc.channel.bandwidth_hz);
    cr.get("tx_power_w", sc.channel.tx_power_w);
    cr.get("path_loss_exponent", sc.channel.path_loss_exponent);
    cr.get("noise_power_w", sc.channel.noise_power_w);
    cr.finish();
  }
  if (const json* t = r.find("task_types")) {
    const std::string tp = "scenario.task_types";
    sc.task_types.clear();
    const auto& arr = expect_array(*t, tp);
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Reader tr(arr[i], item(tp, i));
      model::TaskType type;
      type.id = static_cast<int>(i);
      tr.get("id", type.id);
      tr.get("demand_cycles", type.demand_cycles);
      tr.get("data_bits", type.data_bits);
      tr.finish();
      sc.task_types.push_back(type);
    }
  }
  bool servers_given = false;
  if (const json* s = r.find("servers")) {
    const std::string sp = "scenario.servers";
    servers_given = true;
    sc.servers.clear();
    const auto& arr = expect_array(*s, sp);
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Reader sr(arr[i], item(sp, i));
      sim::ServerSpec spec;
      sr.get("x", spec.position.x);
      sr.get("y", spec.position.y);
      std::string tier = std::string(model::to_string(spec.tier));
      sr.get("tier", tier);
      try {
        spec.tier = model::tier_from_string(tier);
      } catch (const ParameterError& e) {
        throw ConfigError(sr.at("tier"), e.what());
      }
      sr.get("base_rate", spec.base_rate);
      sr.finish();
      sc.servers.push_back(spec);
    }
  } else {
    sc.servers = sim::default_servers(sc.grid);
  }
  read_range(r, "vehicle_rate", sc.vehicle_rate_min, sc.vehicle_rate_max);
  read_range(r, "vehicle_speed", sc.speeds.min, sc.speeds.max);
  if (const json* f = r.find("feature_scales")) {
    Reader fr(*f, "scenario.feature_scales");
    fr.get("rate", sc.scales.rate);
    fr.get("backlog", sc.scales.backlog);
    fr.get("size", sc.scales.size);
    fr.get("demand", sc.scales.demand);
    fr.get("uplink", sc.scales.uplink);
    fr.finish();
  }
  r.get("max_association_range", sc.max_association_range);
  if (const json* p = r.find("phases")) {
    const std::string pp = "scenario.phases";
    sc.phases.clear();
    const auto& arr = expect_array(*p, pp);
    for (std::size_t i = 0; i < arr.size(); ++i) {
      sc.phases.push_back(read_phase(arr[i], item(pp, i), sc.task_types.size()));
    }
  } else if (servers_given) {
    sc.phases = sim::default_phases(sc.servers);
  }
  r.finish();
  return sc;
}

learner::Hyperparams read_hyperparams(const json* v) {
  learner::Hyperparams hp;
  if (!v) return hp;
  Reader r(*v, "hyperparams");
  r.get("learning_rate", hp.learning_rate);
  r.get("discount_gamma", hp.discount_gamma);
  r.get("batch_size", hp.batch_size);
  r.get("target_update_interval", hp.target_update_interval);
  r.get("tau0", hp.tau0);
  r.get("tau_min", hp.tau_min);
  r.get("tau_decay", hp.tau_decay);
  r.get("buffer_capacity", hp.buffer_capacity);
  r.get("train_every", hp.train_every);
  r.get("grad_clip_norm", hp.grad_clip_norm);
  std::string opt = hp.optimizer == learner::OptimizerKind::adam ? "adam" : "sgd";
  r.get("optimizer", opt);
  if (opt == "sgd") {
    hp.optimizer = learner::OptimizerKind::sgd;
  } else if (opt == "adam") {
    hp.optimizer = learner::OptimizerKind::adam;
  } else {
    throw ConfigError("hyperparams.optimizer", "expected 'sgd' or 'adam'");
  }
  r.get("adam_beta1", hp.adam_beta1);
  r.get("adam_beta2", hp.adam_beta2);
  r.get("adam_epsilon", hp.adam_epsilon);
  if (const json* h = r.find("hidden_layers")) hp.hidden_layers = read_vector<int>(*h, "hyperparams.hidden_layers");
  r.finish();
  return hp;
}

twin::DTConfig read_dt(const json* v) {
  twin::DTConfig dt;
  if (!v) return dt;
  Reader r(*v, "dt");
  r.get("perturbation", dt.perturbation);
  r.get("speedup", dt.speedup);
  r.get_optional("tau_reset", dt.tau_reset);
  r.get("tau_floor_fraction", dt.tau_floor_fraction);
  r.get_optional("sync_latency", dt.sync_latency);
  r.get("inherit_replay", dt.inherit_replay);
  r.finish();
  return dt;
}

experiments::MethodSpec read_method(const json* v) {
  experiments::MethodSpec m;
  if (!v) return m;
  Reader r(*v, "method");
  std::string kind = experiments::to_string(m.kind);
  r.get("kind", kind);
  m.kind = experiments::method_kind_from_string(kind);
  r.get("k", m.k);
  r.get("t_dt", m.t_dt);
  r.get("multi", m.multi);
  r.get("weights_path", m.weights_path);
  r.finish();
  return m;
}

}  // namespace

void validate(const RunConfig& cfg) {
  cfg.settings.scenario.validate();
  cfg.settings.hp.validate();
  twin::DTConfig dt = cfg.settings.dt;
  dt.t_dt = cfg.method.t_dt;
  dt.validate();
  cfg.method.validate();
  if (cfg.settings.duration && !(std::isfinite(*cfg.settings.duration) && *cfg.settings.duration >= 0.0)) {
    throw ConfigError("duration", "must be a non-negative number");
  }
  if (cfg.seeds.empty()) throw ConfigError("seeds", "at least one seed is required");
}

RunConfig parse_config(const json& doc) {
  RunConfig cfg;
  Reader r(doc, "");
  cfg.settings.scenario = read_scenario(r.find("scenario"));
  cfg.settings.hp = read_hyperparams(r.find("hyperparams"));
  cfg.settings.dt = read_dt(r.find("dt"));
  cfg.method = read_method(r.find("method"));
  r.get_optional("duration", cfg.settings.duration);
  if (const json* s = r.find("seeds")) cfg.seeds = read_vector<std::uint64_t>(*s, "seeds");
  r.get("output_dir", cfg.output_dir);
  r.finish();
  validate(cfg);
  return cfg;
}

RunConfig parse_config_text(const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return parse_config(json::object());
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(doc);
}

RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

json to_json(const RunConfig& cfg) {
  const auto& sc = cfg.settings.scenario;
  const auto& hp = cfg.settings.hp;
  const auto& dt = cfg.settings.dt;

  json task_types = json::array();
  for (const auto& t : sc.task_types) {
    task_types.push_back({{"id", t.id}, {"demand_cycles", t.demand_cycles}, {"data_bits", t.data_bits}});
  }
  json servers = json::array();
  for (const auto& s : sc.servers) {
    servers.push_back({{"x", s.position.x},
                       {"y", s.position.y},
                       {"tier", std::string(model::to_string(s.tier))},
                       {"base_rate", s.base_rate}});
  }
  json phases = json::array();
  for (const auto& ph : sc.phases) {
    json mult = json::object();
    for (const auto& [id, m] : ph.server_rate_multipliers) mult[std::to_string(id)] = m;
    phases.push_back({{"name", ph.name},
                      {"start_time", ph.start_time},
                      {"end_time", ph.end_time},
                      {"vehicle_count", ph.vehicle_count},
                      {"arrival_rate", ph.arrival_rate},
                      {"task_type_weights", ph.task_type_weights},
                      {"server_rate_multipliers", mult},
                      {"degraded_servers", ph.degraded_servers},
                      {"degradation_min", ph.degradation_min},
                      {"degradation_max", ph.degradation_max}});
  }
  json scenario = {
      {"grid", {{"extent", sc.grid.extent}, {"block_length", sc.grid.block_length}}},
      {"channel",
       {{"bandwidth_hz", sc.channel.bandwidth_hz},
        {"tx_power_w", sc.channel.tx_power_w},
        {"path_loss_exponent", sc.channel.path_loss_exponent},
        {"noise_power_w", sc.channel.noise_power_w}}},
      {"task_types", task_types},
      {"servers", servers},
      {"vehicle_rate", {{"min", sc.vehicle_rate_min}, {"max", sc.vehicle_rate_max}}},
      {"vehicle_speed", {{"min", sc.speeds.min}, {"max", sc.speeds.max}}},
      {"feature_scales",
       {{"rate", sc.scales.rate},
        {"backlog", sc.scales.backlog},
        {"size", sc.scales.size},
        {"demand", sc.scales.demand},
        {"uplink", sc.scales.uplink}}},
      {"max_association_range", sc.max_association_range},
      {"phases", phases}};
  json hyper = {{"learning_rate", hp.learning_rate},
                {"discount_gamma", hp.discount_gamma},
                {"batch_size", hp.batch_size},
                {"target_update_interval", hp.target_update_interval},
                {"tau0", hp.tau0},
                {"tau_min", hp.tau_min},
                {"tau_decay", hp.tau_decay},
                {"buffer_capacity", hp.buffer_capacity},
                {"train_every", hp.train_every},
                {"grad_clip_norm", hp.grad_clip_norm},
                {"optimizer", hp.optimizer == learner::OptimizerKind::adam ? "adam" : "sgd"},
                {"adam_beta1", hp.adam_beta1},
                {"adam_beta2", hp.adam_beta2},
                {"adam_epsilon", hp.adam_epsilon},
                {"hidden_layers", hp.hidden_layers}};
  json dtj = {{"perturbation", dt.perturbation},
              {"speedup", dt.speedup},
              {"tau_reset", dt.tau_reset ? json(*dt.tau_reset) : json(nullptr)},
              {"tau_floor_fraction", dt.tau_floor_fraction},
              {"sync_latency", dt.sync_latency ? json(*dt.sync_latency) : json(nullptr)},
              {"inherit_replay", dt.inherit_replay}};
  json method = {{"kind", experiments::to_string(cfg.method.kind)},
                 {"k", cfg.method.k},
                 {"t_dt", cfg.method.t_dt},
                 {"multi", cfg.method.multi},
                 {"weights_path", cfg.method.weights_path}};
  return {{"scenario", scenario},
          {"hyperparams", hyper},
          {"dt", dtj},
          {"method", method},
          {"duration", cfg.settings.duration ? json(*cfg.settings.duration) : json(nullptr)},
          {"seeds", cfg.seeds},
          {"output_dir", cfg.output_dir}};
}

}  // namespace twinloop::config
