#pragma once

// Per-vehicle dueling double DQN: a small MLP trunk with value and advantage
// heads, Boltzmann exploration, a replay ring and a target network.

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "twinloop/rng.hpp"
#include "twinloop/simcore.hpp"

namespace twinloop::learner {

using sim::Observation;

enum class Activation { relu, identity };
enum class OptimizerKind { sgd, adam };

struct NetworkShape {
  int input = 52;
  std::vector<int> hidden{64, 64};
  int actions = 17;
  Activation activation = Activation::relu;

  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

struct Hyperparams;

/// Input 4 + 3N, the configured hidden widths, N + 1 actions.
NetworkShape network_shape(const sim::ScenarioConfig& scenario, const Hyperparams& hp);

struct Hyperparams {
  double learning_rate = 1e-2;
  double discount_gamma = 0.95;
  int batch_size = 64;
  int target_update_interval = 200;  // train steps
  double tau0 = 1.0;
  double tau_min = 0.05;
  double tau_decay = 0.999;          // multiplicative, per decision
  int buffer_capacity = 20000;
  int train_every = 1;               // decisions per train step
  double grad_clip_norm = 10.0;      // 0 disables clipping
  OptimizerKind optimizer = OptimizerKind::sgd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::vector<int> hidden_layers{64, 64};

  /// Throws ConfigError naming the offending key under `hyperparams.`.
  void validate() const;

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

/// Dueling Q-network. Layers are stored trunk first, then the value head
/// (-> 1) and the advantage head (-> actions).
class QNetwork {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> activations;  // input, then each hidden output
    Eigen::MatrixXd q;
  };

  QNetwork() = default;
  QNetwork(NetworkShape shape, Rng& init);

  const NetworkShape& shape() const { return shape_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::size_t parameter_count() const;

  /// states: input x batch. Returns actions x batch.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& states) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& states, Cache& cache) const;

  /// Gradients of sum(dq .* Q) for the batch cached in `cache`; same layout
  /// as layers().
  std::vector<DenseLayer> backward(const Cache& cache, const Eigen::MatrixXd& dq) const;

  /// Visits every scalar parameter in a fixed order.
  template <typename F>
  void for_each_parameter(F&& f) {
    for (auto& l : layers_) {
      for (Eigen::Index i = 0; i < l.weight.size(); ++i) f(l.weight.data()[i]);
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) f(l.bias.data()[i]);
    }
  }

  friend bool operator==(const QNetwork& a, const QNetwork& b);

 private:
  NetworkShape shape_;
  std::vector<DenseLayer> layers_;
};

/// Q = V + (A - mean(A)).
Eigen::VectorXd dueling_aggregate(double value, const Eigen::VectorXd& advantages);

/// Q-values for one observation. Throws ShapeError on a dimension mismatch.
Eigen::VectorXd forward_q(const QNetwork& net, std::span<const double> state);

/// Softmax of q / tau with max-subtraction. Masked-out actions get zero
/// probability. Throws ParameterError if tau <= 0.
std::vector<double> boltzmann_probabilities(std::span<const double> q, double tau,
                                            const std::vector<bool>* mask = nullptr);

Action act_boltzmann(std::span<const double> q, double tau, Rng& rng,
                     const std::vector<bool>* mask = nullptr);

struct Transition {
  Observation s;
  Action a = 0;
  double r = 0.0;
  Observation s_next;
};

/// Fixed-capacity ring; index 0 is the oldest stored transition.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 20000);

  void push(Transition t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const;
  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const;
  void clear();

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // slot of the oldest element once full
  std::vector<Transition> data_;
};

class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(const Hyperparams& hp, const QNetwork& net);
  void apply(QNetwork& net, const std::vector<DenseLayer>& grads);

 private:
  OptimizerKind kind_ = OptimizerKind::sgd;
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::int64_t t_ = 0;
  std::vector<DenseLayer> m_, v_;
};

/// y = r + gamma * Q_target(s', argmax_a Q_online(s', a)).
double double_dqn_target(double reward, double gamma, std::span<const double> q_online_next,
                         std::span<const double> q_target_next);

/// One gradient step on the mean squared TD error of `batch`. Returns the
/// loss before the update.
double train_step(QNetwork& online, const QNetwork& target,
                  std::span<const Transition* const> batch, const Hyperparams& hp,
                  Optimizer& optimizer);

void sync_target(const QNetwork& online, QNetwork& target);

/// Max relative error between the backprop gradient of (Q(s,a) - y)^2 and
/// central finite differences over every parameter.
double gradient_check(const QNetwork& net, std::span<const double> state, Action action,
                      double y);

/// Analytic gradient of (Q(s,a) - y)^2, flattened in for_each_parameter order.
std::vector<double> squared_error_gradient(const QNetwork& net, std::span<const double> state,
                                           Action action, double y);

std::vector<std::uint8_t> save_weights(const QNetwork& net);
QNetwork load_weights(std::span<const std::uint8_t> bytes);
/// Loads into an existing network; throws ShapeError if the architecture differs.
void load_weights_into(QNetwork& net, std::span<const std::uint8_t> bytes);

nlohmann::json weights_to_json(const QNetwork& net);
QNetwork weights_from_json(const nlohmann::json& j);

/// Online and target parameter bytes of one agent.
struct AgentWeights {
  std::vector<std::uint8_t> online;
  std::vector<std::uint8_t> target;

  friend bool operator==(const AgentWeights&, const AgentWeights&) = default;
};

/// One vehicle's learner: networks, replay buffer, optimiser state,
/// temperature and exploration stream.
struct Agent {
  int id = 0;
  QNetwork online;
  QNetwork target;
  ReplayBuffer buffer;
  Optimizer optimizer;
  double tau = 1.0;
  double tau_decay = 0.999;
  std::uint64_t decisions = 0;
  std::uint64_t train_steps = 0;
  Rng rng;

  struct Pending {
    Observation s;
    Action a = 0;
    double r = 0.0;
  };
  std::optional<Pending> pending;

  AgentWeights weights() const;
  void set_weights(const AgentWeights& w);
};

/// Team-wide weight map, keyed by vehicle id.
using TeamWeights = std::map<int, AgentWeights>;

std::vector<std::uint8_t> encode_team_weights(const TeamWeights& weights);
TeamWeights decode_team_weights(std::span<const std::uint8_t> bytes);
void save_team_weights(const std::string& path, const TeamWeights& weights);
TeamWeights load_team_weights(const std::string& path);

/// Independent learners, one per vehicle. Acts as the simulator's controller:
/// pairs each decision with the next observation of the same vehicle, stores
/// the transition and trains.
class AgentTeam final : public sim::Controller {
 public:
  AgentTeam(Hyperparams hp, NetworkShape shape, std::uint64_t seed, std::string domain);

  void add_fresh(int id);
  void add_from_weights(int id, const AgentWeights& weights, double tau);
  void remove(int id);

  bool contains(int id) const { return agents_.count(id) != 0; }
  Agent& agent(int id) { return agents_.at(id); }
  const Agent& agent(int id) const { return agents_.at(id); }
  std::vector<int> ids() const;
  std::size_t size() const { return agents_.size(); }
  const Hyperparams& hyperparams() const { return hp_; }
  const NetworkShape& shape() const { return shape_; }

  /// When false, agents neither store transitions nor train.
  void set_learning(bool enabled) { learning_ = enabled; }
  bool learning() const { return learning_; }
  /// Nested pause of gradient updates; transitions are still stored.
  void suspend_updates() { ++suspended_; }
  void resume_updates();
  bool updates_suspended() const { return suspended_ > 0; }

  void set_tau(double tau);
  void set_tau_decay(double decay);
  /// Weights used for vehicles that join later (instead of cloning).
  void set_preloaded(TeamWeights weights) { preloaded_ = std::move(weights); }

  TeamWeights export_weights() const;

  std::uint64_t total_decisions() const { return decisions_; }
  std::uint64_t total_train_steps() const { return train_steps_; }
  std::uint64_t total_transitions() const;

  Action decide(const sim::World& world, int vehicle_id, const Observation& obs) override;
  void observe_outcome(int vehicle_id, const Observation& obs, Action action,
                       double reward) override;
  void on_vehicles_added(std::span<const int> ids) override;
  void on_vehicles_removed(std::span<const int> ids) override;

 private:
  Agent make_agent(int id) const;

  Hyperparams hp_;
  NetworkShape shape_;
  std::uint64_t seed_;
  std::string domain_;
  std::map<int, Agent> agents_;
  TeamWeights preloaded_;
  Rng clone_rng_;
  bool learning_ = true;
  int suspended_ = 0;
  std::uint64_t decisions_ = 0;
  std::uint64_t train_steps_ = 0;
};

}  // namespace twinloop::learner
