#include <doctest.h>

#include <stdexcept>

#include "ovmse/env.hpp"
#include "ovmse/errors.hpp"
#include "ovmse/learner.hpp"
#include "ovmse/schedule.hpp"
#include "support.hpp"

using namespace ovmse;

namespace {

NetShape grid_shape(const GridWorld& env) { return NetShape::for_env(env.spec(), 8, 4); }

GridWorld two_agent_grid() {
  GridWorldConfig cfg;
  cfg.n_agents = 2;
  return GridWorld(cfg);
}

}  // namespace

TEST_CASE("ovm target takes the larger branch") {
  CHECK(ovm_target(5.0, 1.0 + 0.9 * 3.0) == 5.0);
  CHECK(ovm_target(-2.0, 1.0 + 0.9 * 3.0) == doctest::Approx(3.7));
  CHECK(ovm_target(2.5, 2.5) == 2.5);
}

TEST_CASE("ovm loss: hand-set scalars") {
  MatrixGame g({{1, 0, 0}, {0, 0, 0}, {0, 0, 0}});
  const NetShape shape = NetShape::for_env(g.spec(), 8, 4);
  Rng rng(1);
  QmixNets live(shape, rng), target(shape, rng), offline(shape, rng);
  testing::set_additive(live, {{1, 0, 0}, {0.5, 0, 0}}, 0.5);     // Q_tot = 2
  testing::set_additive(offline, {{2, 0, 0}, {1.5, 0, 0}}, 0.5);  // offline value 4
  const Batch b =
      make_batch({testing::matrix_episode(g, {0, 0}, 0)}, g.spec(), shape);  // TD target 1
  const LossResult half = ovm_loss(b, live, target, offline, 0.5, 0.99, false);
  CHECK(half.q_tot[0] == 2.0);
  CHECK(half.td_target[0] == 1.0);
  CHECK(half.ovm_target[0] == 4.0);
  CHECK(half.loss == 2.5);
  CHECK(half.mem_branch_fraction == 1.0);
  CHECK(ovm_loss(b, live, target, offline, 1.0, 0.99, false).loss == 4.0);
  CHECK(ovm_loss(b, live, target, offline, 0.0, 0.99, false).loss == 1.0);
  CHECK_THROWS_AS(ovm_loss(b, live, target, offline, 1.5, 0.99, false), std::logic_error);
  CHECK_THROWS_AS(ovm_loss(b, live, target, offline, -0.1, 0.99, false), std::logic_error);
}

TEST_CASE("ovm loss with lambda zero matches td loss bit for bit") {
  GridWorld env = two_agent_grid();
  Rng rng(2);
  QmixNets live(grid_shape(env), rng), target(grid_shape(env), rng), offline(grid_shape(env), rng);
  QmixNets twin = live;
  const Batch b = testing::random_batch(env, live, 3, 7);
  testing::zero_grads(live);
  testing::zero_grads(twin);
  const LossResult o = ovm_loss(b, live, target, offline, 0.0, 0.99, true);
  const LossResult t = td_loss(b, twin, target, 0.99, true);
  CHECK(o.loss == t.loss);
  for (auto* pair : {&live.agent.params(), &live.mixer.params()}) {
    const ParamSet& other =
        pair == &live.agent.params() ? twin.agent.params() : twin.mixer.params();
    for (std::size_t e = 0; e < pair->size(); ++e) {
      CHECK(pair->grad(e) == other.grad(e));
    }
  }
  CHECK(o.ovm_law_violations == 0);
  for (std::size_t i = 0; i < b.transitions(); ++i) {
    CHECK(o.ovm_target[i] >= o.td_target[i]);
    CHECK(o.ovm_target[i] >= o.offline_value[i]);
  }
}

TEST_CASE("memory coefficient schedule") {
  CHECK(lambda_schedule_value(0, 0.2, 1000) == 1.0);
  CHECK(lambda_schedule_value(500, 0.2, 1000) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(lambda_schedule_value(1000, 0.2, 1000) == 0.2);
  CHECK(lambda_schedule_value(99999, 0.2, 1000) == 0.2);
  CHECK(lambda_schedule_value(0, 0.2, 0) == 0.2);
  CHECK(lambda_schedule_value(0, 0.2, 1000, true) == 0.2);
  for (std::uint64_t t = 1; t < 1000; t += 37) {
    CHECK(lambda_schedule_value(t, 0.2, 1000) <= lambda_schedule_value(t - 1, 0.2, 1000));
  }
}

TEST_CASE("online learner: lambda zero without memory is plain TD fine-tuning") {
  GridWorld env = two_agent_grid();
  Rng rng(3);
  const QmixNets init(grid_shape(env), rng), offline(grid_shape(env), rng);
  LearnerSettings ls;
  ls.target_sync_interval = 4;
  OnlineConfig with_memory;
  with_memory.lambda_end = 0.0;
  with_memory.lambda_anneal_steps = 0;
  OnlineConfig without;
  without.use_memory = false;
  OnlineLearner a(init, init, offline, with_memory, ls, 5);
  OnlineLearner b(init, init, std::nullopt, without, ls, 5);
  OfflineConfig plain;
  plain.cql_alpha = 0.0;
  OfflineLearner c(init, plain, ls, 5);
  for (std::uint64_t u = 0; u < 10; ++u) {
    const Batch batch = testing::random_batch(env, init, 2, 50 + u);
    const auto ma = a.update(batch, u * 40);
    const auto mb = b.update(batch, u * 40);
    const auto mc = c.update(batch);
    CHECK(ma.lambda == 0.0);
    CHECK(ma.loss == mb.loss);
    CHECK(mb.loss == mc.loss);
    CHECK(a.nets().live.values_equal(b.nets().live));
    CHECK(b.nets().live.values_equal(c.nets().live));
    CHECK(a.nets().target.values_equal(c.nets().target));
  }
}

TEST_CASE("online learner: annealed lambda, reproducibility, config checks") {
  GridWorld env = two_agent_grid();
  Rng rng(4);
  const QmixNets init(grid_shape(env), rng), offline(grid_shape(env), rng);
  OnlineConfig oc;
  oc.lambda_end = 0.2;
  oc.lambda_anneal_steps = 1000;
  auto run = [&] {
    OnlineLearner l(init, init, offline, oc, {}, 6);
    std::vector<double> trail;
    for (std::uint64_t u = 0; u < 6; ++u) {
      const auto m = l.update(testing::random_batch(env, init, 2, 90 + u), u * 250);
      trail.push_back(m.loss);
      trail.push_back(m.lambda);
      CHECK(m.ovm_law_violations == 0);
    }
    return trail;
  };
  const auto t1 = run();
  CHECK(t1 == run());
  CHECK(t1[1] == 1.0);
  CHECK(t1[5] == doctest::Approx(0.6));
  CHECK(t1[11] == 0.2);

  CHECK_THROWS_AS(OnlineLearner(init, init, std::nullopt, oc, {}, 1), ConfigError);
  OnlineConfig bad = oc;
  bad.lambda_end = 1.5;
  CHECK_THROWS_AS(OnlineLearner(init, init, offline, bad, {}, 1), ConfigError);
  Rng other(5);
  NetShape wider = grid_shape(env);
  wider.hidden_dim = 16;
  CHECK_THROWS_AS(OnlineLearner(init, init, QmixNets(wider, other), oc, {}, 1), ConfigError);
}
