#include "twinloop/learner.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>

#include "twinloop/errors.hpp"

namespace twinloop::learner {

static_assert(std::endian::native == std::endian::little,
              "weight streams are written in host order, which must be little-endian");

void Hyperparams::validate() const {
  auto need = [](bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError("hyperparams." + key, what);
  };
  need(std::isfinite(learning_rate) && learning_rate > 0.0, "learning_rate", "must be positive");
  need(discount_gamma >= 0.0 && discount_gamma < 1.0, "discount_gamma", "must lie in [0, 1)");
  need(batch_size > 0, "batch_size", "must be positive");
  need(target_update_interval > 0, "target_update_interval", "must be positive");
  need(tau_min > 0.0 && std::isfinite(tau_min), "tau_min", "must be positive");
  need(tau0 >= tau_min && std::isfinite(tau0), "tau0", "must be >= tau_min");
  need(tau_decay > 0.0 && tau_decay <= 1.0, "tau_decay", "must lie in (0, 1]");
  need(buffer_capacity >= batch_size, "buffer_capacity", "must be >= batch_size");
  need(train_every > 0, "train_every", "must be positive");
  need(grad_clip_norm >= 0.0, "grad_clip_norm", "must be >= 0");
  need(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1", "must lie in [0, 1)");
  need(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2", "must lie in [0, 1)");
  need(adam_epsilon > 0.0, "adam_epsilon", "must be positive");
  for (int h : hidden_layers) need(h > 0, "hidden_layers", "layer widths must be positive");
}

NetworkShape network_shape(const sim::ScenarioConfig& scenario, const Hyperparams& hp) {
  return {scenario.observation_size(), hp.hidden_layers, scenario.action_count(), Activation::relu};
}

// ---------------------------------------------------------------------------
// Network

namespace {

DenseLayer make_layer(int in, int out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  DenseLayer l;
  l.weight.resize(out, in);
  l.bias.resize(out);
  for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = u(rng);
  for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias.data()[i] = u(rng);
  return l;
}

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation a) {
  return a == Activation::relu ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
}

std::vector<DenseLayer> zeros_like(const std::vector<DenseLayer>& layers) {
  std::vector<DenseLayer> out;
  out.reserve(layers.size());
  for (const auto& l : layers) {
    out.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                   Eigen::VectorXd::Zero(l.bias.size())});
  }
  return out;
}

Eigen::MatrixXd to_matrix(std::span<const double> state) {
  return Eigen::Map<const Eigen::VectorXd>(state.data(), static_cast<Eigen::Index>(state.size()));
}

}  // namespace

QNetwork::QNetwork(NetworkShape shape, Rng& init) : shape_(std::move(shape)) {
  if (shape_.input <= 0 || shape_.actions <= 0) throw ShapeError("network dimensions must be positive");
  int in = shape_.input;
  for (int h : shape_.hidden) {
    if (h <= 0) throw ShapeError("hidden widths must be positive");
    layers_.push_back(make_layer(in, h, init));
    in = h;
  }
  layers_.push_back(make_layer(in, 1, init));
  layers_.push_back(make_layer(in, shape_.actions, init));
}

std::size_t QNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Eigen::MatrixXd QNetwork::forward(const Eigen::MatrixXd& states) const {
  Cache cache;
  return forward(states, cache);
}

Eigen::MatrixXd QNetwork::forward(const Eigen::MatrixXd& states, Cache& cache) const {
  if (states.rows() != shape_.input) {
    throw ShapeError("observation has " + std::to_string(states.rows()) + " features, network expects " +
                     std::to_string(shape_.input));
  }
  const std::size_t trunk = shape_.hidden.size();
  cache.activations.clear();
  cache.activations.reserve(trunk + 1);
  cache.activations.push_back(states);
  for (std::size_t l = 0; l < trunk; ++l) {
    const auto& layer = layers_[l];
    Eigen::MatrixXd z = layer.weight * cache.activations.back();
    z.colwise() += layer.bias;
    cache.activations.push_back(activate(z, shape_.activation));
  }
  const auto& h = cache.activations.back();
  const auto& vl = layers_[trunk];
  const auto& al = layers_[trunk + 1];
  Eigen::RowVectorXd value = vl.weight * h;
  value.array() += vl.bias(0);
  Eigen::MatrixXd adv = al.weight * h;
  adv.colwise() += al.bias;
  const Eigen::RowVectorXd mean = adv.colwise().mean();
  adv.rowwise() += value - mean;
  cache.q = adv;
  return adv;
}

std::vector<DenseLayer> QNetwork::backward(const Cache& cache, const Eigen::MatrixXd& dq) const {
  const std::size_t trunk = shape_.hidden.size();
  std::vector<DenseLayer> g(layers_.size());
  const Eigen::MatrixXd& h = cache.activations.back();

  // dQ_a = dV + dA_a - mean(dA): invert the aggregation.
  const Eigen::RowVectorXd dv = dq.colwise().sum();
  Eigen::MatrixXd da = dq;
  da.rowwise() -= dq.colwise().mean();

  g[trunk].weight = dv * h.transpose();
  g[trunk].bias = Eigen::VectorXd::Constant(1, dv.sum());
  g[trunk + 1].weight = da * h.transpose();
  g[trunk + 1].bias = da.rowwise().sum();

  Eigen::MatrixXd dh = layers_[trunk].weight.transpose() * dv + layers_[trunk + 1].weight.transpose() * da;
  for (std::size_t l = trunk; l-- > 0;) {
    const Eigen::MatrixXd& out = cache.activations[l + 1];
    Eigen::MatrixXd dz = shape_.activation == Activation::relu
                             ? Eigen::MatrixXd(dh.array() * (out.array() > 0.0).cast<double>())
                             : dh;
    g[l].weight = dz * cache.activations[l].transpose();
    g[l].bias = dz.rowwise().sum();
    if (l > 0) dh = layers_[l].weight.transpose() * dz;
  }
  return g;
}

bool operator==(const QNetwork& a, const QNetwork& b) {
  if (!(a.shape_ == b.shape_) || a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    if (a.layers_[i].weight != b.layers_[i].weight || a.layers_[i].bias != b.layers_[i].bias) return false;
  }
  return true;
}

Eigen::VectorXd dueling_aggregate(double value, const Eigen::VectorXd& advantages) {
  return (advantages.array() - advantages.mean() + value).matrix();
}

Eigen::VectorXd forward_q(const QNetwork& net, std::span<const double> state) {
  if (static_cast<int>(state.size()) != net.shape().input) {
    throw ShapeError("observation has " + std::to_string(state.size()) + " features, network expects " +
                     std::to_string(net.shape().input));
  }
  return net.forward(to_matrix(state)).col(0);
}

// ---------------------------------------------------------------------------
// Boltzmann policy

std::vector<double> boltzmann_probabilities(std::span<const double> q, double tau,
                                            const std::vector<bool>* mask) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ParameterError("Boltzmann temperature must be positive, got " + std::to_string(tau));
  }
  if (mask && mask->size() != q.size()) throw ShapeError("action mask size mismatch");
  auto allowed = [&](std::size_t i) { return mask == nullptr || (*mask)[i]; };
  double qmax = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (allowed(i)) qmax = std::max(qmax, q[i]);
  }
  if (!std::isfinite(qmax)) throw ParameterError("no admissible action");
  std::vector<double> p(q.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (!allowed(i)) continue;
    p[i] = std::exp((q[i] - qmax) / tau);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

Action act_boltzmann(std::span<const double> q, double tau, Rng& rng, const std::vector<bool>* mask) {
  const auto p = boltzmann_probabilities(q, tau, mask);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = u(rng);
  double acc = 0.0;
  Action last = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i];
    last = static_cast<Action>(i);
    if (x < acc) return last;
  }
  return last;  // rounding left x beyond the final partial sum
}

// ---------------------------------------------------------------------------
// Replay

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ParameterError("replay capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
    return;
  }
  data_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::operator[](std::size_t i) const {
  if (i >= data_.size()) throw std::out_of_range("replay index out of range");
  return data_[(head_ + i) % data_.size()];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (data_.empty()) return {};
  std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
  std::vector<const Transition*> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(&data_[pick(rng)]);
  return out;
}

void ReplayBuffer::clear() {
  data_.clear();
  head_ = 0;
}

// ---------------------------------------------------------------------------
// Training

Optimizer::Optimizer(const Hyperparams& hp, const QNetwork& net)
    : kind_(hp.optimizer), lr_(hp.learning_rate), beta1_(hp.adam_beta1), beta2_(hp.adam_beta2),
      eps_(hp.adam_epsilon) {
  if (kind_ == OptimizerKind::adam) {
    m_ = zeros_like(net.layers());
    v_ = zeros_like(net.layers());
  }
}

void Optimizer::apply(QNetwork& net, const std::vector<DenseLayer>& grads) {
  auto& layers = net.layers();
  if (kind_ == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weight -= lr_ * grads[i].weight;
      layers[i].bias -= lr_ * grads[i].bias;
    }
    return;
  }
  if (m_.size() != layers.size()) {
    m_ = zeros_like(layers);
    v_ = zeros_like(layers);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].weight, grads[i].weight, m_[i].weight, v_[i].weight);
    update(layers[i].bias, grads[i].bias, m_[i].bias, v_[i].bias);
  }
}

double double_dqn_target(double reward, double gamma, std::span<const double> q_online_next,
                         std::span<const double> q_target_next) {
  if (q_online_next.size() != q_target_next.size() || q_online_next.empty()) {
    throw ShapeError("online and target Q vectors must have equal, non-zero length");
  }
  const auto best = std::distance(q_online_next.begin(),
                                  std::max_element(q_online_next.begin(), q_online_next.end()));
  return reward + gamma * q_target_next[static_cast<std::size_t>(best)];
}

double train_step(QNetwork& online, const QNetwork& target, std::span<const Transition* const> batch,
                  const Hyperparams& hp, Optimizer& optimizer) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (n == 0) return 0.0;
  const int in = online.shape().input;
  Eigen::MatrixXd s(in, n), s_next(in, n);
  for (Eigen::Index b = 0; b < n; ++b) {
    const Transition& t = *batch[static_cast<std::size_t>(b)];
    if (static_cast<int>(t.s.size()) != in || static_cast<int>(t.s_next.size()) != in) {
      throw ShapeError("transition observation size mismatch");
    }
    s.col(b) = to_matrix(t.s);
    s_next.col(b) = to_matrix(t.s_next);
  }

  const Eigen::MatrixXd q_next_online = online.forward(s_next);
  const Eigen::MatrixXd q_next_target = target.forward(s_next);
  QNetwork::Cache cache;
  const Eigen::MatrixXd q = online.forward(s, cache);

  Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(q.rows(), q.cols());
  double loss = 0.0;
  for (Eigen::Index b = 0; b < n; ++b) {
    const Transition& t = *batch[static_cast<std::size_t>(b)];
    Eigen::Index best;
    q_next_online.col(b).maxCoeff(&best);
    const double y = t.r + hp.discount_gamma * q_next_target(best, b);
    const double err = q(t.a, b) - y;
    loss += err * err;
    dq(t.a, b) = 2.0 * err / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);

  auto grads = online.backward(cache, dq);
  if (hp.grad_clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& g : grads) sq += g.weight.squaredNorm() + g.bias.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > hp.grad_clip_norm) {
      const double scale = hp.grad_clip_norm / norm;
      for (auto& g : grads) {
        g.weight *= scale;
        g.bias *= scale;
      }
    }
  }
  optimizer.apply(online, grads);
  return loss;
}

void sync_target(const QNetwork& online, QNetwork& target) { target = online; }

std::vector<double> squared_error_gradient(const QNetwork& net, std::span<const double> state,
                                           Action action, double y) {
  if (action < 0 || action >= net.shape().actions) throw ActionError("action out of range");
  QNetwork::Cache cache;
  const Eigen::MatrixXd q = net.forward(to_matrix(state), cache);
  Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(q.rows(), 1);
  dq(action, 0) = 2.0 * (q(action, 0) - y);
  const auto grads = net.backward(cache, dq);
  std::vector<double> flat;
  flat.reserve(net.parameter_count());
  for (const auto& g : grads) {
    flat.insert(flat.end(), g.weight.data(), g.weight.data() + g.weight.size());
    flat.insert(flat.end(), g.bias.data(), g.bias.data() + g.bias.size());
  }
  return flat;
}

double gradient_check(const QNetwork& net, std::span<const double> state, Action action, double y) {
  const auto analytic = squared_error_gradient(net, state, action, y);
  QNetwork probe = net;
  const Eigen::MatrixXd x = to_matrix(state);
  auto loss = [&] {
    const double e = probe.forward(x)(action, 0) - y;
    return e * e;
  };
  double worst = 0.0;
  std::size_t k = 0;
  probe.for_each_parameter([&](double& p) {
    const double saved = p;
    const double h = 1e-5 * std::max(1.0, std::abs(saved));
    p = saved + h;
    const double up = loss();
    p = saved - h;
    const double down = loss();
    p = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[k++];
    const double denom = std::max({std::abs(a) + std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  });
  return worst;
}

// ---------------------------------------------------------------------------
// Serialisation

namespace {

constexpr char kNetMagic[4] = {'T', 'L', 'Q', 'N'};
constexpr std::uint32_t kNetVersion = 1;
constexpr char kTeamMagic[4] = {'T', 'L', 'T', 'W'};
constexpr std::uint32_t kTeamVersion = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void f64s(const double* p, std::size_t n) { bytes(p, n * sizeof(double)); }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  void bytes(void* p, std::size_t n) {
    if (in_.size() - pos_ < n) throw LoadError("weight stream truncated");
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  void f64s(double* p, std::size_t n) { bytes(p, n * sizeof(double)); }
  std::span<const std::uint8_t> take(std::size_t n) {
    if (in_.size() - pos_ < n) throw LoadError("weight stream truncated");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

QNetwork empty_network(const NetworkShape& shape) {
  Rng dummy(0);
  return QNetwork(shape, dummy);
}

QNetwork parse_network(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kNetMagic, 4) != 0) throw LoadError("not a Q-network weight stream");
  const auto version = r.u32();
  if (version != kNetVersion) {
    throw LoadError("unsupported weight stream version " + std::to_string(version));
  }
  NetworkShape shape;
  const auto act = r.u32();
  if (act > 1) throw LoadError("unknown activation code");
  shape.activation = static_cast<Activation>(act);
  shape.input = static_cast<int>(r.u32());
  shape.actions = static_cast<int>(r.u32());
  const auto hidden = r.u32();
  if (hidden > 64) throw LoadError("implausible layer count");
  shape.hidden.clear();
  for (std::uint32_t i = 0; i < hidden; ++i) shape.hidden.push_back(static_cast<int>(r.u32()));
  if (shape.input <= 0 || shape.actions <= 0 || shape.input > (1 << 20) || shape.actions > (1 << 20)) {
    throw LoadError("implausible network dimensions");
  }
  for (int h : shape.hidden) {
    if (h <= 0 || h > (1 << 20)) throw LoadError("implausible hidden width");
  }
  QNetwork net = empty_network(shape);
  for (auto& l : net.layers()) {
    r.f64s(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    r.f64s(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  if (!r.done()) throw LoadError("trailing bytes after weight stream");
  return net;
}

}  // namespace

std::vector<std::uint8_t> save_weights(const QNetwork& net) {
  Writer w;
  w.bytes(kNetMagic, 4);
  w.u32(kNetVersion);
  const auto& shape = net.shape();
  w.u32(static_cast<std::uint32_t>(shape.activation));
  w.u32(static_cast<std::uint32_t>(shape.input));
  w.u32(static_cast<std::uint32_t>(shape.actions));
  w.u32(static_cast<std::uint32_t>(shape.hidden.size()));
  for (int h : shape.hidden) w.u32(static_cast<std::uint32_t>(h));
  for (const auto& l : net.layers()) {
    w.f64s(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    w.f64s(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return std::move(w.out);
}

QNetwork load_weights(std::span<const std::uint8_t> bytes) { return parse_network(bytes); }

void load_weights_into(QNetwork& net, std::span<const std::uint8_t> bytes) {
  QNetwork loaded = parse_network(bytes);
  if (!(loaded.shape() == net.shape())) throw ShapeError("weight stream architecture does not match network");
  net = std::move(loaded);
}

nlohmann::json weights_to_json(const QNetwork& net) {
  using nlohmann::json;
  json layers = json::array();
  for (const auto& l : net.layers()) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) row.push_back(l.weight(i, j));
      rows.push_back(std::move(row));
    }
    layers.push_back({{"weight", rows}, {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  const auto& s = net.shape();
  return {{"format", "twinloop-qnetwork"},
          {"version", kNetVersion},
          {"shape",
           {{"input", s.input},
            {"hidden", s.hidden},
            {"actions", s.actions},
            {"activation", s.activation == Activation::relu ? "relu" : "identity"}}},
          {"layers", layers}};
}

QNetwork weights_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "twinloop-qnetwork") throw LoadError("not a Q-network JSON dump");
    if (j.at("version").get<std::uint32_t>() != kNetVersion) throw LoadError("unsupported weight JSON version");
    NetworkShape shape;
    const auto& s = j.at("shape");
    shape.input = s.at("input").get<int>();
    shape.hidden = s.at("hidden").get<std::vector<int>>();
    shape.actions = s.at("actions").get<int>();
    const auto act = s.at("activation").get<std::string>();
    if (act != "relu" && act != "identity") throw LoadError("unknown activation '" + act + "'");
    shape.activation = act == "relu" ? Activation::relu : Activation::identity;
    QNetwork net = empty_network(shape);
    const auto& layers = j.at("layers");
    if (layers.size() != net.layers().size()) throw ShapeError("layer count mismatch");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      auto& l = net.layers()[k];
      const auto& rows = layers[k].at("weight");
      const auto bias = layers[k].at("bias").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(rows.size()) != l.weight.rows() ||
          static_cast<Eigen::Index>(bias.size()) != l.bias.size()) {
        throw ShapeError("layer " + std::to_string(k) + " shape mismatch");
      }
      for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
        const auto row = rows[static_cast<std::size_t>(i)].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(row.size()) != l.weight.cols()) {
          throw ShapeError("layer " + std::to_string(k) + " shape mismatch");
        }
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(i, c) = row[static_cast<std::size_t>(c)];
      }
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = bias[static_cast<std::size_t>(i)];
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed weight JSON: ") + e.what());
  }
}

std::vector<std::uint8_t> encode_team_weights(const TeamWeights& weights) {
  Writer w;
  w.bytes(kTeamMagic, 4);
  w.u32(kTeamVersion);
  w.u32(static_cast<std::uint32_t>(weights.size()));
  for (const auto& [id, aw] : weights) {
    w.u32(static_cast<std::uint32_t>(id));
    w.u32(static_cast<std::uint32_t>(aw.online.size()));
    w.bytes(aw.online.data(), aw.online.size());
    w.u32(static_cast<std::uint32_t>(aw.target.size()));
    w.bytes(aw.target.data(), aw.target.size());
  }
  return std::move(w.out);
}

TeamWeights decode_team_weights(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kTeamMagic, 4) != 0) throw LoadError("not a team weight file");
  if (const auto v = r.u32(); v != kTeamVersion) {
    throw LoadError("unsupported team weight version " + std::to_string(v));
  }
  TeamWeights out;
  const auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    const int id = static_cast<int>(r.u32());
    AgentWeights aw;
    auto online = r.take(r.u32());
    aw.online.assign(online.begin(), online.end());
    auto target = r.take(r.u32());
    aw.target.assign(target.begin(), target.end());
    parse_network(aw.online);  // validate eagerly
    parse_network(aw.target);
    out.emplace(id, std::move(aw));
  }
  if (!r.done()) throw LoadError("trailing bytes after team weights");
  return out;
}

void save_team_weights(const std::string& path, const TeamWeights& weights) {
  const auto bytes = encode_team_weights(weights);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot write weights file '" + path + "'");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw LoadError("failed writing weights file '" + path + "'");
}

TeamWeights load_team_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot open weights file '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_team_weights(bytes);
}

// ---------------------------------------------------------------------------
// Agents

AgentWeights Agent::weights() const { return {save_weights(online), save_weights(target)}; }

void Agent::set_weights(const AgentWeights& w) {
  load_weights_into(online, w.online);
  load_weights_into(target, w.target);
}

AgentTeam::AgentTeam(Hyperparams hp, NetworkShape shape, std::uint64_t seed, std::string domain)
    : hp_(std::move(hp)), shape_(std::move(shape)), seed_(seed), domain_(std::move(domain)),
      clone_rng_(make_stream(seed, domain_ + "/clone")) {}

Agent AgentTeam::make_agent(int id) const {
  Agent a;
  a.id = id;
  Rng init = make_stream(seed_, domain_ + "/init", static_cast<std::uint64_t>(id));
  a.online = QNetwork(shape_, init);
  a.target = a.online;
  a.buffer = ReplayBuffer(static_cast<std::size_t>(hp_.buffer_capacity));
  a.optimizer = Optimizer(hp_, a.online);
  a.tau = hp_.tau0;
  a.tau_decay = hp_.tau_decay;
  a.rng = make_stream(seed_, domain_ + "/explore", static_cast<std::uint64_t>(id));
  return a;
}

void AgentTeam::add_fresh(int id) { agents_.insert_or_assign(id, make_agent(id)); }

void AgentTeam::add_from_weights(int id, const AgentWeights& weights, double tau) {
  Agent a = make_agent(id);
  a.set_weights(weights);
  a.tau = tau;
  agents_.insert_or_assign(id, std::move(a));
}

void AgentTeam::remove(int id) { agents_.erase(id); }

std::vector<int> AgentTeam::ids() const {
  std::vector<int> out;
  for (const auto& [id, a] : agents_) out.push_back(id);
  return out;
}

void AgentTeam::resume_updates() {
  if (suspended_ > 0) --suspended_;
}

void AgentTeam::set_tau(double tau) {
  for (auto& [id, a] : agents_) a.tau = tau;
}

void AgentTeam::set_tau_decay(double decay) {
  for (auto& [id, a] : agents_) a.tau_decay = decay;
}

TeamWeights AgentTeam::export_weights() const {
  TeamWeights out;
  for (const auto& [id, a] : agents_) out.emplace(id, a.weights());
  return out;
}

std::uint64_t AgentTeam::total_transitions() const {
  std::uint64_t n = 0;
  for (const auto& [id, a] : agents_) n += a.buffer.size();
  return n;
}

Action AgentTeam::decide(const sim::World& world, int vehicle_id, const Observation& obs) {
  Agent& agent = agents_.at(vehicle_id);
  if (agent.pending && learning_) {
    agent.buffer.push({std::move(agent.pending->s), agent.pending->a, agent.pending->r, obs});
    const bool due = agent.decisions % static_cast<std::uint64_t>(hp_.train_every) == 0;
    if (suspended_ == 0 && due && agent.buffer.size() >= static_cast<std::size_t>(hp_.batch_size)) {
      const auto batch = agent.buffer.sample(static_cast<std::size_t>(hp_.batch_size), agent.rng);
      train_step(agent.online, agent.target, batch, hp_, agent.optimizer);
      ++agent.train_steps;
      ++train_steps_;
      if (agent.train_steps % static_cast<std::uint64_t>(hp_.target_update_interval) == 0) {
        sync_target(agent.online, agent.target);
      }
    }
  }
  agent.pending.reset();

  const Eigen::VectorXd q = forward_q(agent.online, obs);
  std::vector<bool> mask;
  if (world.max_association_range > 0.0) mask = sim::action_mask(world, vehicle_id);
  const Action a = act_boltzmann(std::span<const double>(q.data(), static_cast<std::size_t>(q.size())),
                                 agent.tau, agent.rng, mask.empty() ? nullptr : &mask);
  agent.tau = std::max(hp_.tau_min, agent.tau * agent.tau_decay);
  ++agent.decisions;
  ++decisions_;
  return a;
}

void AgentTeam::observe_outcome(int vehicle_id, const Observation& obs, Action action, double reward) {
  if (!learning_) return;
  agents_.at(vehicle_id).pending = Agent::Pending{obs, action, reward};
}

void AgentTeam::on_vehicles_added(std::span<const int> ids) {
  std::vector<int> existing = this->ids();
  for (int id : ids) {
    if (const auto it = preloaded_.find(id); it != preloaded_.end()) {
      const double tau = agents_.empty() ? hp_.tau0 : agents_.begin()->second.tau;
      add_from_weights(id, it->second, tau);
    } else if (!existing.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, existing.size() - 1);
      const Agent& source = agents_.at(existing[pick(clone_rng_)]);
      add_from_weights(id, source.weights(), source.tau);
    } else {
      add_fresh(id);
    }
  }
}

void AgentTeam::on_vehicles_removed(std::span<const int> ids) {
  for (int id : ids) agents_.erase(id);
}

}  // namespace twinloop::learner
