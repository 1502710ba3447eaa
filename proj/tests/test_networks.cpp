#include <doctest.h>

#include <cmath>
#include <limits>

#include "ovmse/errors.hpp"
#include "ovmse/networks.hpp"
#include "ovmse/rng.hpp"
#include "support.hpp"

using namespace ovmse;

namespace {

NetShape toy_shape(std::size_t n, std::size_t actions, std::size_t state_dim = 3) {
  NetShape s;
  s.n_agents = n;
  s.obs_dim = 2;
  s.action_dim = actions;
  s.state_dim = state_dim;
  s.hidden_dim = 8;
  s.mixing_hidden_dim = 6;
  return s;
}

std::vector<double> random_vec(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * (2.0 * rng.uniform() - 1.0);
  return v;
}

// Per-agent action values plus a mixer; exhaustive argmax over joint actions.
std::vector<int> brute_force_argmax(const MixingNet& mixer, const Tensor& q,
                                    std::span<const double> state) {
  const std::size_t n = q.rows(), a = q.cols();
  std::vector<int> joint(n, 0), best;
  double best_v = -std::numeric_limits<double>::infinity();
  std::vector<double> qs(n);
  while (true) {
    for (std::size_t i = 0; i < n; ++i) qs[i] = q.at(i, static_cast<std::size_t>(joint[i]));
    const double v = mixer.forward_one(qs, state);
    if (v > best_v) {
      best_v = v;
      best = joint;
    }
    std::size_t k = n;
    while (k > 0 && ++joint[k - 1] == static_cast<int>(a)) joint[--k] = 0;
    if (k == 0) break;
  }
  return best;
}

}  // namespace

TEST_CASE("agent network: zeroed output layer gives zero values") {
  Rng rng(1);
  AgentQNet net(toy_shape(2, 3), rng);
  net.params().value("agent.fc2.weight").fill(0.0);
  net.params().value("agent.fc2.bias").fill(0.0);
  const Tensor out = net.forward(Tensor({4, net.shape().agent_input_dim()}, 0.7));
  for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("agent network: pure and matches a hand-unrolled forward pass") {
  Rng rng(2);
  const NetShape shape = toy_shape(2, 3);
  AgentQNet net(shape, rng);
  const std::size_t in = shape.agent_input_dim();
  Tensor x({2, in});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.1 * static_cast<double>(i % 5) - 0.2;
  const Tensor a = net.forward(x);
  CHECK(a == net.forward(x));
  const auto& w1 = net.params().value("agent.fc1.weight");
  const auto& b1 = net.params().value("agent.fc1.bias");
  const auto& w2 = net.params().value("agent.fc2.weight");
  const auto& b2 = net.params().value("agent.fc2.bias");
  for (std::size_t r = 0; r < 2; ++r) {
    std::vector<double> h(shape.hidden_dim);
    for (std::size_t j = 0; j < shape.hidden_dim; ++j) {
      double s = b1[j];
      for (std::size_t i = 0; i < in; ++i) s += x.at(r, i) * w1.at(i, j);
      h[j] = s > 0 ? s : std::expm1(s);
    }
    for (std::size_t k = 0; k < shape.action_dim; ++k) {
      double s = b2[k];
      for (std::size_t j = 0; j < shape.hidden_dim; ++j) s += h[j] * w2.at(j, k);
      CHECK(a.at(r, k) == doctest::Approx(s).epsilon(1e-13));
    }
  }
  CHECK_THROWS_AS(net.forward(Tensor({1, in + 1})), ConfigError);
}

TEST_CASE("mixer: nondecreasing in every agent value") {
  Rng rng(3);
  for (int draw = 0; draw < 1000; ++draw) {
    const NetShape shape = toy_shape(3, 2);
    MixingNet mixer(shape, rng);
    const auto qs = random_vec(3, rng, 3.0);
    const auto state = random_vec(shape.state_dim, rng);
    const double delta = 1e-3 + rng.uniform();
    const std::size_t i = rng.index(3);
    auto bumped = qs;
    bumped[i] += delta;
    CHECK(mixer.forward_one(bumped, state) >= mixer.forward_one(qs, state));
  }
}

TEST_CASE("mixer: zero mixing weights leave only the state value path") {
  Rng rng(4);
  const NetShape shape = toy_shape(3, 2);
  MixingNet mixer(shape, rng);
  for (const char* p : {"mixer.hyper_w1.weight", "mixer.hyper_w1.bias", "mixer.hyper_w2.weight",
                        "mixer.hyper_w2.bias"}) {
    mixer.params().value(p).fill(0.0);
  }
  const auto state = random_vec(shape.state_dim, rng);
  const double base = mixer.forward_one(std::vector<double>{0, 0, 0}, state);
  CHECK(mixer.forward_one(std::vector<double>{5, -3, 9}, state) == base);
}

TEST_CASE("mixer: finite-difference partials are nonnegative") {
  Rng rng(5);
  for (int draw = 0; draw < 50; ++draw) {
    const NetShape shape = toy_shape(3, 2);
    MixingNet mixer(shape, rng);
    const auto qs = random_vec(3, rng, 2.0);
    const auto state = random_vec(shape.state_dim, rng);
    for (std::size_t i = 0; i < 3; ++i) {
      auto up = qs, down = qs;
      up[i] += 1e-5;
      down[i] -= 1e-5;
      CHECK((mixer.forward_one(up, state) - mixer.forward_one(down, state)) / 2e-5 >= -1e-9);
    }
  }
}

TEST_CASE("mixer and agent gradients pass finite differences") {
  Rng rng(6);
  const NetShape shape = toy_shape(3, 4);
  QmixNets nets(shape, rng);
  Tensor x({6, shape.agent_input_dim()});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 2.0 * rng.uniform() - 1.0;
  Tensor states({2, shape.state_dim});
  for (std::size_t i = 0; i < states.size(); ++i) states[i] = rng.uniform();
  const std::vector<int> actions = {0, 3, 1, 2, 2, 0};
  auto loss = [&](bool grad) {
    SequentialTape tape;
    const Tensor q = nets.agent.forward(x, tape);
    Tensor chosen({2, 3});
    for (std::size_t r = 0; r < 2; ++r) {
      for (std::size_t k = 0; k < 3; ++k) {
        chosen.at(r, k) = q.at(r * 3 + k, static_cast<std::size_t>(actions[r * 3 + k]));
      }
    }
    MixingNet::Tape mt;
    const auto qt = nets.mixer.forward(chosen, states, mt);
    double l = 0.0;
    std::vector<double> d(2);
    for (std::size_t r = 0; r < 2; ++r) {
      l += 0.5 * (qt[r] - 1.0) * (qt[r] - 1.0);
      d[r] = qt[r] - 1.0;
    }
    if (grad) {
      const Tensor dq = nets.mixer.backward(mt, d);
      Tensor dall(q.shape());
      for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t k = 0; k < 3; ++k) {
          dall.at(r * 3 + k, static_cast<std::size_t>(actions[r * 3 + k])) = dq.at(r, k);
        }
      }
      nets.agent.backward(tape, dall);
    }
    return l;
  };
  testing::zero_grads(nets);
  loss(true);
  auto probes = testing::random_probes({&nets.agent.params(), &nets.mixer.params()}, 30, rng);
  CHECK(testing::worst_fd_error(probes, [&] { return loss(false); }) < 1e-4);
  MixingNet::Tape empty;
  CHECK_THROWS_AS(nets.mixer.backward(empty, std::vector<double>{1.0}), UsageError);
}

TEST_CASE("greedy selection: masking and lowest-index ties") {
  CHECK(greedy_action(std::vector<double>{1, 5, 3}, std::vector<std::uint8_t>{1, 1, 1}) == 1);
  CHECK(greedy_action(std::vector<double>{9, 2}, std::vector<std::uint8_t>{0, 1}) == 1);
  CHECK(greedy_action(std::vector<double>{4, 4, 1}, std::vector<std::uint8_t>{1, 1, 1}) == 0);
  CHECK_THROWS_AS(greedy_action(std::vector<double>{1, 2}, std::vector<std::uint8_t>{0, 0}),
                  ContractError);
}

TEST_CASE("IGM: per-agent argmax equals exhaustive joint argmax") {
  Rng rng(7);
  for (std::size_t n : {2u, 3u}) {
    for (int draw = 0; draw < 100; ++draw) {
      const NetShape shape = toy_shape(n, 3);
      MixingNet mixer(shape, rng);
      Tensor q({n, 3});
      for (std::size_t i = 0; i < q.size(); ++i) q[i] = 2.0 * rng.uniform() - 1.0;
      const auto state = random_vec(shape.state_dim, rng);
      const std::vector<std::uint8_t> all(n * 3, 1);
      CHECK(greedy_actions(q, all) == brute_force_argmax(mixer, q, state));
    }
  }
}

TEST_CASE("target pair: sync copies exactly and only on request") {
  Rng rng(8);
  const NetShape shape = toy_shape(2, 3);
  TargetPair pair(QmixNets(shape, rng), 200);
  const QmixNets initial = pair.target;
  CHECK(pair.target.values_equal(pair.live));
  for (int i = 0; i < 10; ++i) pair.live.agent.params().value("agent.fc1.bias")[0] += 0.1;
  CHECK(pair.target.values_equal(initial));
  CHECK_FALSE(pair.target.values_equal(pair.live));
  pair.sync();
  CHECK(pair.target.values_equal(pair.live));
  const Tensor x({1, shape.agent_input_dim()}, 0.3);
  CHECK(pair.target.agent.forward(x) == pair.live.agent.forward(x));
}

TEST_CASE("network checkpoints carry their architecture") {
  Rng rng(9);
  const NetShape shape = toy_shape(3, 4);
  QmixNets nets(shape, rng);
  Checkpoint c;
  add_net_manifest(c, shape);
  save_nets(c, nets, "p.");
  const QmixNets back = load_nets(decode_checkpoint(encode_checkpoint(c)), "p.");
  CHECK(back.shape() == shape);
  CHECK(back.values_equal(nets));
  DecPomdpSpec spec{3, 3, 2, 5, 10, 0.9};
  CHECK_THROWS_AS(shape.check_compatible(spec), ConfigError);
}
