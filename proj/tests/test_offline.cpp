#include <doctest.h>

#include <cmath>

#include "ovmse/env.hpp"
#include "ovmse/errors.hpp"
#include "ovmse/learner.hpp"
#include "support.hpp"

using namespace ovmse;

namespace {

NetShape matrix_shape(const MatrixGame& g) { return NetShape::for_env(g.spec(), 8, 4); }

Batch matrix_batch(MatrixGame& g, const std::vector<std::vector<int>>& joints,
                   std::vector<std::uint8_t> avail = {}) {
  std::vector<EpisodePtr> eps;
  for (std::size_t i = 0; i < joints.size(); ++i) {
    eps.push_back(testing::matrix_episode(g, joints[i], i, avail));
  }
  return make_batch(eps, g.spec(), matrix_shape(g));
}

}  // namespace

TEST_CASE("td loss: exact terminal fit gives zero") {
  MatrixGame g;
  Rng rng(1);
  QmixNets live(matrix_shape(g), rng), target(matrix_shape(g), rng);
  // Q_tot(0,0) = 3 + 4.5 + 0.5 = 8, the fixture reward.
  testing::set_additive(live, {{3, 1, 1}, {4.5, 1, 1}}, 0.5);
  const Batch b = matrix_batch(g, {{0, 0}});
  const LossResult r = td_loss(b, live, target, 0.99, false);
  CHECK(r.loss == 0.0);
  CHECK(r.q_tot[0] == 8.0);
}

TEST_CASE("td loss: hand-evaluated single transition") {
  MatrixGame g;
  Rng rng(2);
  QmixNets live(matrix_shape(g), rng), target(matrix_shape(g), rng);
  testing::set_additive(live, {{1.5, 1, 1}, {1, 2, 3}}, 0.5);
  // Joint (1, 2): Q_tot = 1 + 3 + 0.5 = 4.5, reward 6, terminal.
  const Batch b = matrix_batch(g, {{1, 2}});
  CHECK(b.rewards[0] == 0.0);
  const Batch b2 = matrix_batch(g, {{1, 1}});
  const LossResult r = td_loss(b2, live, target, 0.99, false);
  CHECK(r.td_target[0] == 6.0);
  CHECK(r.q_tot[0] == doctest::Approx(1 + 2 + 0.5));
  CHECK(r.loss == doctest::Approx((3.5 - 6.0) * (3.5 - 6.0)));
}

TEST_CASE("td loss: gamma zero reduces the target to the reward") {
  GridWorldConfig cfg;
  cfg.n_agents = 2;
  GridWorld env(cfg);
  Rng rng(3);
  QmixNets live(NetShape::for_env(env.spec(), 8, 4), rng);
  QmixNets target(NetShape::for_env(env.spec(), 8, 4), rng);
  const Batch b = testing::random_batch(env, live, 3, 5);
  const auto y = td_targets(b, target, 0.0);
  for (std::size_t i = 0; i < b.transitions(); ++i) CHECK(y[i] == b.rewards[i]);
  const auto y99 = td_targets(b, target, 0.99);
  const auto next = max_joint_values(b, target);
  for (std::size_t i = 0; i < b.transitions(); ++i) {
    const double expect = b.terminated[i] ? b.rewards[i] : b.rewards[i] + 0.99 * next[b.slot[i] + 1];
    CHECK(y99[i] == expect);
  }
}

TEST_CASE("cql penalty: oracles") {
  MatrixGame g;
  Rng rng(4);
  QmixNets live(matrix_shape(g), rng);
  const std::vector<std::vector<double>> q{{1, 2, 3}, {0.5, 4, 1.5}};
  testing::set_additive(live, q, 0.25);

  SUBCASE("exact enumeration over the 9 joint actions") {
    const Batch b = matrix_batch(g, {{0, 1}});
    double mean = 0.0;
    for (int a = 0; a < 3; ++a) {
      for (int c = 0; c < 3; ++c) mean += (q[0][a] + q[1][c] + 0.25) / 9.0;
    }
    const double logged = q[0][0] + q[1][1] + 0.25;
    const LossResult r = cql_penalty(b, live, MuMode::kUniformExact, 0, rng, false);
    CHECK(r.cql == doctest::Approx(mean - logged).epsilon(1e-12));
    CHECK(r.cql == doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("mu supported only on the logged action") {
    const std::vector<std::uint8_t> only{0, 0, 1, 1, 0, 0};
    const Batch b = matrix_batch(g, {{2, 0}}, only);
    for (MuMode m : {MuMode::kUniform, MuMode::kPolicySoftmax, MuMode::kUniformExact}) {
      CHECK(cql_penalty(b, live, m, 4, rng, false).cql == 0.0);
    }
  }
  SUBCASE("constant Q_tot") {
    testing::set_additive(live, {{0, 0, 0}, {0, 0, 0}}, 0.7);
    const Batch b = matrix_batch(g, {{1, 2}, {0, 0}});
    for (MuMode m : {MuMode::kUniform, MuMode::kPolicySoftmax, MuMode::kUniformExact}) {
      // Summation order may leave one ulp.
      CHECK(std::abs(cql_penalty(b, live, m, 4, rng, false).cql) < 1e-12);
    }
  }
}

TEST_CASE("cql sampled penalty converges to the exact expectation") {
  GridWorldConfig cfg;
  cfg.n_agents = 2;
  GridWorld env(cfg);
  Rng rng(5);
  QmixNets live(NetShape::for_env(env.spec(), 8, 4), rng);
  const Batch b = testing::random_batch(env, live, 2, 11);
  const double exact = cql_penalty(b, live, MuMode::kUniformExact, 0, rng, false).cql;
  const double sampled = cql_penalty(b, live, MuMode::kUniform, 4000, rng, false).cql;
  CHECK(sampled == doctest::Approx(exact).epsilon(0.02).scale(0.05));
}

TEST_CASE("objective gradients pass finite differences") {
  GridWorldConfig cfg;
  cfg.n_agents = 2;
  GridWorld env(cfg);
  Rng rng(6);
  const NetShape shape = NetShape::for_env(env.spec(), 8, 4);
  QmixNets live(shape, rng), target(shape, rng), offline(shape, rng);
  const Batch b = testing::random_batch(env, live, 2, 17);
  for (int mode = 0; mode < 3; ++mode) {
    Objective obj;
    obj.gamma = 0.99;
    if (mode == 1) {
      obj.cql_weight = 0.7;
      obj.mu = MuMode::kUniformExact;
    }
    if (mode == 2) {
      obj.lambda = 0.4;
      obj.offline_target = &offline;
    }
    testing::zero_grads(live);
    compute_objective(b, live, target, obj, &rng, true);
    auto probes = testing::random_probes({&live.agent.params(), &live.mixer.params()}, 24, rng);
    const double worst = testing::worst_fd_error(
        probes, [&] { return compute_objective(b, live, target, obj, &rng, false).loss; });
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("offline learner with alpha zero is plain TD") {
  GridWorldConfig cfg;
  cfg.n_agents = 2;
  GridWorld env(cfg);
  Rng rng(7);
  const NetShape shape = NetShape::for_env(env.spec(), 8, 4);
  const QmixNets init(shape, rng);
  LearnerSettings ls;
  ls.target_sync_interval = 3;
  OfflineConfig oc;
  oc.cql_alpha = 0.0;
  OfflineLearner learner(init, oc, ls, 1);

  // Reference: td_loss, clip, adam, sync.
  TargetPair ref(init, 3);
  AdamOptimizer opt(ls.adam);
  for (std::uint64_t u = 1; u <= 8; ++u) {
    const Batch b = testing::random_batch(env, init, 2, 100 + u);
    const OfflineMetrics m = learner.update(b);
    const LossResult r = td_loss(b, ref.live, ref.target, ls.gamma, true);
    clip_grad_norm({&ref.live.agent.params(), &ref.live.mixer.params()}, ls.grad_clip);
    opt.step(ref.live.agent.params());
    opt.step(ref.live.mixer.params());
    if (u % 3 == 0) ref.sync();
    CHECK(m.loss == r.loss);
    CHECK(m.loss_td == r.td);
    CHECK(learner.nets().live.values_equal(ref.live));
    CHECK(learner.nets().target.values_equal(ref.target));
  }
}

TEST_CASE("offline learner is reproducible") {
  MatrixGame g;
  auto run = [&] {
    Rng rng(8);
    OfflineLearner learner(QmixNets(matrix_shape(g), rng), {}, {}, 3);
    std::vector<double> trail;
    for (int u = 0; u < 20; ++u) {
      const Batch b = matrix_batch(g, {{u % 3, (u / 3) % 3}, {0, 0}});
      const auto m = learner.update(b);
      trail.push_back(m.loss);
      trail.push_back(m.loss_cql);
    }
    return trail;
  };
  CHECK(run() == run());
}

TEST_CASE("large alpha keeps the greedy policy on the dataset support") {
  MatrixGame g;
  Rng rng(9);
  OfflineConfig oc;
  oc.cql_alpha = 1e3;
  oc.mu = MuMode::kUniformExact;
  OfflineLearner learner(QmixNets(matrix_shape(g), rng), oc, {}, 4);
  // Support: agent 0 plays 1, agent 1 plays 1 or 2. The optimum (0, 0) is absent.
  const Batch b = matrix_batch(g, {{1, 1}, {1, 2}, {1, 1}, {1, 2}});
  for (int u = 0; u < 300; ++u) learner.update(b);
  const Timestep ts = g.reset(0);
  const EpisodeRecord ep =
      run_greedy_episode(g, q_function(learner.nets().live.agent), matrix_shape(g), 0);
  CHECK(ep.steps[0].action[0] == 1);
  CHECK((ep.steps[0].action[1] == 1 || ep.steps[0].action[1] == 2));
  (void)ts;
}

TEST_CASE("empty batch and mu mode names") {
  MatrixGame g;
  Rng rng(10);
  QmixNets live(matrix_shape(g), rng);
  Batch empty = make_batch({}, g.spec(), matrix_shape(g));
  CHECK_THROWS_AS(td_loss(empty, live, live, 0.9, false), UsageError);
  for (MuMode m : {MuMode::kUniform, MuMode::kPolicySoftmax, MuMode::kUniformExact}) {
    CHECK(parse_mu_mode(to_string(m)) == m);
  }
}
