#include <doctest.h>

#include <cmath>

#include "ovmse/exploration.hpp"
#include "ovmse/networks.hpp"
#include "ovmse/schedule.hpp"

using namespace ovmse;

namespace {

Tensor team_values(std::size_t n, std::size_t a, Rng& rng) {
  Tensor q({n, a});
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = rng.uniform();
  return q;
}

}  // namespace

TEST_CASE("epsilon schedule endpoints and midpoint") {
  const Schedule s{1.0, 0.05, 100000};
  CHECK(epsilon_value(0, s) == 1.0);
  CHECK(epsilon_value(50000, s) == doctest::Approx(0.525).epsilon(1e-12));
  CHECK(epsilon_value(100000, s) == 0.05);
  CHECK(epsilon_value(500000, s) == 0.05);
  Schedule literal = s;
  literal.literal_min = true;
  CHECK(epsilon_value(0, literal) == 0.05);
  CHECK(epsilon_value(3, Schedule{0.3, 0.3, 0}) == 0.3);
}

TEST_CASE("epsilon zero is greedy in every mode") {
  Rng rng(1);
  for (int k = 0; k < 200; ++k) {
    const Tensor q = team_values(4, 5, rng);
    std::vector<std::uint8_t> avail(20, 1);
    avail[rng.index(20)] = 0;
    const auto greedy = greedy_actions(q, avail);
    CHECK(select_independent(q, avail, 0.0, rng) == greedy);
    CHECK(select_sequential_centralized(q, avail, 0.0, rng) == greedy);
    CHECK(select_sequential_decentralized(q, avail, 0.0, 4, rng) == greedy);
  }
}

TEST_CASE("epsilon one is uniform over available actions") {
  // At the 1% level about one seed in a hundred is rejected by construction.
  Rng rng(12);
  const Tensor q = team_values(2, 4, rng);
  // Agent 1 cannot use action 2.
  const std::vector<std::uint8_t> avail{1, 1, 1, 1, 1, 1, 0, 1};
  const int draws = 100000;
  std::vector<std::vector<double>> counts(2, std::vector<double>(4, 0.0));
  for (int k = 0; k < draws; ++k) {
    const auto a = select_independent(q, avail, 1.0, rng);
    counts[0][static_cast<std::size_t>(a[0])] += 1;
    counts[1][static_cast<std::size_t>(a[1])] += 1;
  }
  CHECK(counts[1][2] == 0.0);
  // Chi-square against uniform; 1% critical values for 3 and 2 dof.
  auto chi2 = [&](const std::vector<double>& c, std::vector<std::size_t> cells) {
    const double expected = draws / static_cast<double>(cells.size());
    double s = 0.0;
    for (std::size_t j : cells) s += (c[j] - expected) * (c[j] - expected) / expected;
    return s;
  };
  CHECK(chi2(counts[0], {0, 1, 2, 3}) < 11.345);
  CHECK(chi2(counts[1], {0, 1, 3}) < 9.210);
}

TEST_CASE("centralized sequential exploration changes at most one agent") {
  Rng rng(3);
  std::size_t explored = 0;
  for (int k = 0; k < 5000; ++k) {
    const Tensor q = team_values(5, 5, rng);
    const std::vector<std::uint8_t> avail(25, 1);
    const auto greedy = greedy_actions(q, avail);
    ExploreInfo info;
    const auto a = select_sequential_centralized(q, avail, 0.6, rng, &info);
    std::size_t diff = 0;
    for (std::size_t i = 0; i < 5; ++i) diff += a[i] != greedy[i];
    CHECK(diff <= 1);
    CHECK(info.explorers <= 1);
    explored += info.explorers;
  }
  CHECK(std::abs(explored / 5000.0 - 0.6) < 0.03);
}

TEST_CASE("decentralized sequential exploration explores at eps / N per agent") {
  Rng rng(4);
  const std::size_t n = 8;
  const Tensor q = team_values(n, 3, rng);
  const std::vector<std::uint8_t> avail(n * 3, 1);
  const int draws = 100000;
  std::size_t none = 0, total = 0;
  for (int k = 0; k < draws; ++k) {
    ExploreInfo info;
    select_sequential_decentralized(q, avail, 0.4, n, rng, &info);
    none += info.explorers == 0;
    total += info.explorers;
  }
  const double p0 = std::pow(0.95, 8);
  CHECK(p0 == doctest::Approx(0.6634).epsilon(1e-4));
  // Binomial standard error is about 0.0015; allow five of them.
  CHECK(std::abs(none / static_cast<double>(draws) - p0) < 0.0075);
  CHECK(std::abs(total / static_cast<double>(draws) - 0.4) < 0.01);
}

TEST_CASE("uniform draw respects the mask and names parse") {
  Rng rng(5);
  const std::vector<std::uint8_t> mask{0, 0, 1, 0};
  for (int k = 0; k < 100; ++k) CHECK(uniform_available_action(mask, rng) == 2);
  for (auto m : {ExplorationMode::kIndependent, ExplorationMode::kSequentialCentralized,
                 ExplorationMode::kSequentialDecentralized}) {
    CHECK(parse_exploration_mode(to_string(m)) == m);
  }
  CHECK_THROWS(parse_exploration_mode("bogus"));
}
