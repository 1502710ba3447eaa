#include <doctest.h>

#include "ovmse/env.hpp"
#include "ovmse/episode.hpp"
#include "ovmse/errors.hpp"
#include "support.hpp"

using namespace ovmse;

TEST_CASE("matrix game fixture") {
  MatrixGame g;
  const Timestep ts = g.reset(0);
  CHECK(ts.state.size() == 1);
  CHECK(ts.avail == std::vector<std::uint8_t>(6, 1));
  std::vector<int> a{0, 0};
  StepOutcome out = g.step(a);
  CHECK(out.reward == 8.0);
  CHECK(out.terminated);
  CHECK(g.success());
  CHECK_THROWS_AS(g.step(a), ContractError);
  g.reset(1);
  a = {1, 2};
  out = g.step(a);
  CHECK(out.reward == 0.0);
  CHECK(out.terminated);
  CHECK_FALSE(g.success());
  g.reset(2);
  std::vector<int> bad{3, 0};
  CHECK_THROWS_AS(g.step(bad), ContractError);
}

TEST_CASE("gridworld reset is a deterministic function of the seed") {
  GridWorld a, b;
  const Timestep x = a.reset(42), y = b.reset(42);
  CHECK(x.state == y.state);
  CHECK(x.obs == y.obs);
  CHECK(a.positions() == b.positions());
  for (std::size_t i = 0; i < 4; ++i) {
    const Cell p = a.positions()[i], g = a.config().goals[i];
    CHECK(std::max(std::abs(p.row - g.row), std::abs(p.col - g.col)) <= 2);
    CHECK_FALSE(p == g);
  }
  CHECK(a.spec().n_agents == 4);
  CHECK(a.spec().action_dim == 5);
  CHECK(a.spec().horizon == 40);
}

TEST_CASE("gridworld rewards, parking and termination") {
  GridWorldConfig cfg;
  cfg.n_agents = 2;
  cfg.grid_size = 5;
  cfg.goals = {{1, 1}, {3, 3}};
  cfg.fixed_spawn = {{1, 2}, {3, 2}};
  GridWorld env(cfg);
  env.reset(0);
  std::vector<int> left_stay{3, 0};
  StepOutcome out = env.step(left_stay);
  CHECK(out.reward == -0.05);
  CHECK_FALSE(out.terminated);
  // Agent 0 is parked: only stay is available.
  CHECK(out.next.avail[0] == 1);
  for (int a = 1; a < 5; ++a) CHECK(out.next.avail[static_cast<std::size_t>(a)] == 0);
  std::vector<int> move_parked{1, 0};
  CHECK_THROWS_AS(env.step(move_parked), ContractError);
  std::vector<int> finish{0, 4};
  out = env.step(finish);
  CHECK(out.reward == 10.0);
  CHECK(out.terminated);
  CHECK(env.success());
}

TEST_CASE("gridworld masks keep agents on the grid") {
  GridWorldConfig cfg;
  cfg.fixed_spawn = {{0, 0}, {0, 6}, {6, 0}, {6, 6}};
  GridWorld env(cfg);
  const Timestep ts = env.reset(0);
  // Agent 0 in the top-left corner: up and left are blocked.
  CHECK(ts.avail[1] == 0);
  CHECK(ts.avail[3] == 0);
  CHECK(ts.avail[2] == 1);
  CHECK(ts.avail[4] == 1);
  check_masks(env.spec(), ts.avail);
}

TEST_CASE("immobile policy truncates at the horizon") {
  GridWorld env;
  Rng rng(0);
  QmixNets nets(NetShape::for_env(env.spec(), 8, 4), rng);
  // Stay always wins the argmax.
  QFunction stay = [](const Tensor& x) {
    Tensor q({x.rows(), 5}, 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) q.at(r, 0) = 1.0;
    return q;
  };
  const EpisodeRecord ep = run_greedy_episode(env, stay, nets.shape(), 3);
  CHECK(ep.length() == 40);
  CHECK_FALSE(ep.steps.back().terminated);
  CHECK(ep.steps.back().truncated);
  for (std::size_t t = 0; t + 1 < ep.length(); ++t) {
    CHECK_FALSE(ep.steps[t].truncated);
    CHECK(ep.steps[t].reward == -0.05);
  }
  CHECK(ep.episode_return == doctest::Approx(-2.0));
  ep.validate(env.spec());
}

TEST_CASE("greedy matrix episode lasts one step; rollouts are replayable") {
  MatrixGame g;
  Rng rng(1);
  QmixNets nets(NetShape::for_env(g.spec(), 8, 4), rng);
  CHECK(run_greedy_episode(g, q_function(nets.agent), nets.shape(), 0).length() == 1);

  GridWorld env;
  QmixNets gnets(NetShape::for_env(env.spec(), 8, 4), rng);
  auto roll = [&] {
    Explorer ex{ExplorationMode::kIndependent, Schedule{0.5, 0.5, 0}};
    Rng r(9);
    std::uint64_t step = 0;
    return run_episode(env, q_function(gnets.agent), gnets.shape(), ex, 77, step, r);
  };
  const EpisodeRecord a = roll(), b = roll();
  CHECK(a.same_trajectory(b));
  // Replaying the logged actions from the same seed reproduces the record.
  GridWorld replay;
  Timestep ts = replay.reset(a.seed);
  for (const auto& s : a.steps) {
    CHECK(ts.state == s.state);
    CHECK(ts.obs == s.obs);
    const StepOutcome o = replay.step(s.action);
    CHECK(o.reward == s.reward);
    CHECK(o.reward >= -0.05);
    CHECK(o.reward <= 10.0);
    ts = o.next;
  }
  CHECK(ts.state == a.final.state);
}

TEST_CASE("agent history pads with zeros and shifts") {
  DecPomdpSpec spec{2, 1, 2, 3, 5, 0.9};
  AgentHistory h(spec, 2, true);
  CHECK(h.input_dim() == 2 * (2 + 3) + 2);
  h.reset(std::vector<double>{1, 2, 3, 4});
  std::vector<double> x(h.input_dim());
  h.encode(1, x);
  CHECK(x == std::vector<double>{3, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1});
  h.advance(std::vector<int>{2, 0}, std::vector<double>{5, 6, 7, 8});
  h.encode(0, x);
  CHECK(x == std::vector<double>{5, 6, 0, 0, 1, 1, 2, 0, 0, 0, 1, 0});
  h.reset(std::vector<double>{0, 0, 0, 0});
  h.encode(0, x);
  CHECK(x == std::vector<double>{0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0});
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS((DecPomdpSpec{1, 1, 1, 1, 1, 0.9}.validate()), ConfigError);
  CHECK_THROWS_AS((DecPomdpSpec{2, 1, 1, 1, 0, 0.9}.validate()), ConfigError);
  CHECK_THROWS_AS((DecPomdpSpec{2, 1, 1, 1, 1, 1.5}.validate()), ConfigError);
  GridWorldConfig cfg;
  cfg.fixed_spawn = {{0, 0}};
  CHECK_THROWS_AS(GridWorld{cfg}, ConfigError);
}
