#include "doctest.h"

#include <cmath>
#include <numeric>

#include "twinloop/errors.hpp"
#include "twinloop/learner.hpp"

using namespace twinloop;
using namespace twinloop::learner;

namespace {

NetworkShape small_shape(Activation act = Activation::relu) {
  NetworkShape s;
  s.input = 5;
  s.hidden = {8};
  s.actions = 4;
  s.activation = act;
  return s;
}

std::vector<double> random_state(int n, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> s(static_cast<std::size_t>(n));
  for (auto& x : s) x = u(rng);
  return s;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// Independent dueling forward pass in plain loops.
std::vector<double> reference_q(const QNetwork& net, const std::vector<double>& s) {
  const auto& L = net.layers();
  const std::size_t trunk = L.size() - 2;
  std::vector<double> h = s;
  for (std::size_t l = 0; l < trunk; ++l) {
    std::vector<double> out(static_cast<std::size_t>(L[l].weight.rows()));
    for (Eigen::Index i = 0; i < L[l].weight.rows(); ++i) {
      double z = L[l].bias(i);
      for (Eigen::Index j = 0; j < L[l].weight.cols(); ++j) z += L[l].weight(i, j) * h[static_cast<std::size_t>(j)];
      out[static_cast<std::size_t>(i)] = net.shape().activation == Activation::relu ? std::max(0.0, z) : z;
    }
    h = out;
  }
  auto head = [&](const DenseLayer& d) {
    std::vector<double> out(static_cast<std::size_t>(d.weight.rows()));
    for (Eigen::Index i = 0; i < d.weight.rows(); ++i) {
      double z = d.bias(i);
      for (Eigen::Index j = 0; j < d.weight.cols(); ++j) z += d.weight(i, j) * h[static_cast<std::size_t>(j)];
      out[static_cast<std::size_t>(i)] = z;
    }
    return out;
  };
  const double v = head(L[trunk])[0];
  const auto a = head(L[trunk + 1]);
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
  std::vector<double> q;
  for (double x : a) q.push_back(v + x - mean);
  return q;
}

}  // namespace

TEST_CASE("dueling aggregation") {
  Eigen::VectorXd a(3);
  a << 1, 0, -1;
  CHECK(to_vec(dueling_aggregate(2.0, a)) == std::vector<double>{3, 2, 1});
  a << 4, 4, 4;
  CHECK(to_vec(dueling_aggregate(-1.5, a)) == std::vector<double>{-1.5, -1.5, -1.5});
  Eigen::VectorXd b(4), c(4);
  b << 0.3, -2.0, 1.7, 0.25;
  c = b.array() + 11.0;
  const auto qb = dueling_aggregate(0.5, b), qc = dueling_aggregate(0.5, c);
  for (int i = 0; i < 4; ++i) CHECK(qb(i) == doctest::Approx(qc(i)).epsilon(1e-12));
}

TEST_CASE("forward_q matches a loop implementation and checks shape") {
  Rng rng = make_stream(3, "init");
  NetworkShape shape;
  QNetwork net(shape, rng);
  CHECK(net.parameter_count() == 52 * 64 + 64 + 64 * 64 + 64 + 64 + 1 + 64 * 17 + 17);
  Rng srng = make_stream(3, "s");
  for (int k = 0; k < 5; ++k) {
    const auto s = random_state(52, srng);
    const auto q = to_vec(forward_q(net, s));
    const auto ref = reference_q(net, s);
    REQUIRE(q.size() == 17);
    for (std::size_t i = 0; i < q.size(); ++i) CHECK(q[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
  std::vector<double> wrong(51, 0.0);
  CHECK_THROWS_AS(forward_q(net, wrong), ShapeError);
}

TEST_CASE("batched forward equals per-sample forward") {
  Rng rng = make_stream(4, "init");
  QNetwork net(small_shape(), rng);
  Eigen::MatrixXd states = Eigen::MatrixXd::Random(5, 7);
  const auto q = net.forward(states);
  for (int c = 0; c < 7; ++c) {
    std::vector<double> s(states.col(c).data(), states.col(c).data() + 5);
    const auto qi = forward_q(net, s);
    for (int a = 0; a < 4; ++a) CHECK(q(a, c) == doctest::Approx(qi(a)).epsilon(1e-14));
  }
}

TEST_CASE("boltzmann policy") {
  const std::vector<double> flat{1, 1, 1};
  for (double p : boltzmann_probabilities(flat, 1.0)) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const std::vector<double> two{1, 0};
  const auto p = boltzmann_probabilities(two, 1.0);
  CHECK(p[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-14));
  CHECK(p[0] == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(p[1] == doctest::Approx(0.2689).epsilon(1e-4));
  CHECK(boltzmann_probabilities(two, 0.01)[0] > 1.0 - 1e-10);
  const std::vector<double> huge{1e6, -1e6, 3e5};
  const auto ph = boltzmann_probabilities(huge, 0.05);
  for (double x : ph) CHECK(std::isfinite(x));
  CHECK_THROWS_AS(boltzmann_probabilities(two, 0.0), ParameterError);
  CHECK_THROWS_AS(boltzmann_probabilities(two, -1.0), ParameterError);
  Rng rng = make_stream(1, "b");
  CHECK_THROWS_AS(act_boltzmann(two, 0.0, rng), ParameterError);
}

TEST_CASE("boltzmann sampling frequencies") {
  const std::vector<double> q{0.0, std::log(2.0), std::log(3.0)};
  Rng rng = make_stream(2, "b");
  std::vector<int> hist(3, 0);
  const int n = 60000;
  for (int i = 0; i < n; ++i) ++hist[static_cast<std::size_t>(act_boltzmann(q, 1.0, rng))];
  CHECK(hist[0] / double(n) == doctest::Approx(1.0 / 6.0).epsilon(0.05));
  CHECK(hist[1] / double(n) == doctest::Approx(2.0 / 6.0).epsilon(0.05));
  CHECK(hist[2] / double(n) == doctest::Approx(3.0 / 6.0).epsilon(0.05));

  const std::vector<bool> mask{true, false, true};
  for (int i = 0; i < 500; ++i) CHECK(act_boltzmann(q, 1.0, rng, &mask) != 1);
  CHECK(boltzmann_probabilities(q, 1.0, &mask)[1] == 0.0);
}

TEST_CASE("double DQN target") {
  const std::vector<double> on{1, 3}, tg{5, 2};
  CHECK(double_dqn_target(-2.0, 0.99, on, tg) == doctest::Approx(-0.02).epsilon(1e-12));
  CHECK(double_dqn_target(-2.0, 0.0, on, tg) == -2.0);
}

TEST_CASE("replay ring keeps the newest items in order") {
  ReplayBuffer buf(5);
  for (int i = 0; i < 8; ++i) buf.push({{static_cast<double>(i)}, 0, -1.0 * i, {}});
  REQUIRE(buf.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(buf[i].s[0] == 3.0 + static_cast<double>(i));
  Rng rng = make_stream(1, "r");
  const auto s = buf.sample(32, rng);
  CHECK(s.size() == 32);
  buf.clear();
  CHECK(buf.size() == 0);
}

TEST_CASE("finite-difference gradient check") {
  Rng rng = make_stream(9, "grad");
  for (int k = 0; k < 20; ++k) {
    QNetwork net(small_shape(), rng);
    const auto s = random_state(5, rng);
    std::uniform_int_distribution<int> pick(0, 3);
    const int a = pick(rng);
    CHECK(gradient_check(net, s, a, -1.7) < 1e-4);
  }
  QNetwork lin(small_shape(Activation::identity), rng);
  const auto s = random_state(5, rng);
  CHECK(gradient_check(lin, s, 2, 0.4) < 1e-7);

  const double y = forward_q(lin, s)(1);
  const auto g = squared_error_gradient(lin, s, 1, y);
  double norm = 0;
  for (double x : g) norm += x * x;
  CHECK(std::sqrt(norm) < 1e-8);
}

TEST_CASE("train step fixed point and target sync") {
  Rng rng = make_stream(12, "t");
  Hyperparams hp;
  hp.discount_gamma = 0.0;
  QNetwork online(small_shape(), rng), target(small_shape(), rng);
  CHECK_FALSE(online == target);
  sync_target(online, target);
  CHECK(online == target);
  sync_target(online, target);
  CHECK(online == target);

  std::vector<Transition> batch;
  for (int i = 0; i < 4; ++i) {
    auto s = random_state(5, rng);
    const double q = forward_q(online, s)(i % 4);
    batch.push_back({s, i % 4, q, random_state(5, rng)});
  }
  std::vector<const Transition*> ptrs;
  for (const auto& t : batch) ptrs.push_back(&t);
  Optimizer opt(hp, online);
  const QNetwork before = online;
  const double loss = train_step(online, target, ptrs, hp, opt);
  CHECK(loss < 1e-20);
  auto pa = const_cast<QNetwork&>(before);
  std::vector<double> p0, p1;
  pa.for_each_parameter([&](double& x) { p0.push_back(x); });
  online.for_each_parameter([&](double& x) { p1.push_back(x); });
  for (std::size_t i = 0; i < p0.size(); ++i) CHECK(p1[i] == doctest::Approx(p0[i]).epsilon(1e-12));
}

TEST_CASE("train step reduces loss on a fixed batch") {
  Rng rng = make_stream(13, "t");
  Hyperparams hp;
  hp.discount_gamma = 0.0;
  hp.learning_rate = 1e-2;
  QNetwork online(small_shape(), rng), target = online;
  std::vector<Transition> batch;
  for (int i = 0; i < 16; ++i) batch.push_back({random_state(5, rng), i % 4, -1.0 - 0.1 * i, random_state(5, rng)});
  std::vector<const Transition*> ptrs;
  for (const auto& t : batch) ptrs.push_back(&t);
  Optimizer opt(hp, online);
  const double first = train_step(online, target, ptrs, hp, opt);
  double last = first;
  for (int i = 0; i < 200; ++i) last = train_step(online, target, ptrs, hp, opt);
  CHECK(last < 0.5 * first);
}

TEST_CASE("binary weights round trip bit-exactly") {
  Rng rng = make_stream(5, "w");
  QNetwork net(NetworkShape{}, rng);
  const auto bytes = save_weights(net);
  const QNetwork back = load_weights(bytes);
  CHECK(back == net);
  CHECK(save_weights(back) == bytes);
  Rng srng = make_stream(5, "s");
  for (int i = 0; i < 5; ++i) {
    const auto s = random_state(52, srng);
    CHECK(to_vec(forward_q(net, s)) == to_vec(forward_q(back, s)));
  }

  std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 3);
  CHECK_THROWS_AS(load_weights(cut), LoadError);
  auto extra = bytes;
  extra.push_back(0);
  CHECK_THROWS_AS(load_weights(extra), LoadError);
  auto badver = bytes;
  badver[4] = 99;
  CHECK_THROWS_AS(load_weights(badver), LoadError);
  auto badmagic = bytes;
  badmagic[0] = 'X';
  CHECK_THROWS_AS(load_weights(badmagic), LoadError);

  QNetwork other(small_shape(), rng);
  CHECK_THROWS_AS(load_weights_into(other, bytes), ShapeError);

  const QNetwork fromj = weights_from_json(weights_to_json(net));
  CHECK(fromj == net);
}

TEST_CASE("team weights round trip") {
  Hyperparams hp;
  AgentTeam team(hp, NetworkShape{}, 3, "pt");
  for (int id : {0, 1, 4}) team.add_fresh(id);
  const auto w = team.export_weights();
  const auto bytes = encode_team_weights(w);
  CHECK(decode_team_weights(bytes) == w);
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 10);
  CHECK_THROWS_AS(decode_team_weights(cut), LoadError);
  CHECK_THROWS_AS(load_team_weights("/nonexistent/weights.bin"), LoadError);
}

TEST_CASE("agents are independent") {
  Hyperparams hp;
  hp.batch_size = 4;
  AgentTeam team(hp, NetworkShape{}, 8, "pt");
  team.add_fresh(0);
  team.add_fresh(1);
  const auto w1 = team.agent(1).weights();
  sim::World dummy;
  Rng srng = make_stream(8, "s");
  Observation s = random_state(52, srng);
  for (int i = 0; i < 40; ++i) {
    const Action a = team.decide(dummy, 0, s);
    team.observe_outcome(0, s, a, -1.0 - i % 3);
    s = random_state(52, srng);
  }
  CHECK(team.agent(0).train_steps > 0);
  CHECK(team.agent(1).weights() == w1);
  CHECK(team.agent(0).tau < hp.tau0);
  CHECK(team.agent(0).tau == doctest::Approx(std::pow(hp.tau_decay, 40)).epsilon(1e-12));
}

TEST_CASE("training cadence: one step per decision once the buffer holds a batch") {
  Hyperparams hp;
  hp.batch_size = 8;
  AgentTeam team(hp, NetworkShape{}, 2, "pt");
  team.add_fresh(0);
  sim::World dummy;
  Rng srng = make_stream(2, "s");
  for (int i = 0; i < 30; ++i) {
    const auto s = random_state(52, srng);
    const Action a = team.decide(dummy, 0, s);
    team.observe_outcome(0, s, a, -1.0);
  }
  // decision i finds i stored transitions
  CHECK(team.agent(0).buffer.size() == 29);
  CHECK(team.total_train_steps() == 30 - 8);
}

TEST_CASE("hyperparameter validation") {
  Hyperparams hp;
  CHECK_NOTHROW(hp.validate());
  hp.discount_gamma = 1.0;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
  hp = {};
  hp.tau_min = 2.0;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
  hp = {};
  hp.batch_size = 0;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
}
