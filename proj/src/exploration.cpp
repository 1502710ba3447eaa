#include "ovmse/exploration.hpp"

#include "ovmse/errors.hpp"
#include "ovmse/networks.hpp"

namespace ovmse {

ExplorationMode parse_exploration_mode(const std::string& name) {
  if (name == "independent") return ExplorationMode::kIndependent;
  if (name == "sequential-centralized") return ExplorationMode::kSequentialCentralized;
  if (name == "sequential-decentralized") return ExplorationMode::kSequentialDecentralized;
  throw ConfigError("unknown exploration mode '" + name +
                    "' (expected independent, sequential-centralized or sequential-decentralized)");
}

std::string to_string(ExplorationMode mode) {
  switch (mode) {
    case ExplorationMode::kIndependent: return "independent";
    case ExplorationMode::kSequentialCentralized: return "sequential-centralized";
    case ExplorationMode::kSequentialDecentralized: return "sequential-decentralized";
  }
  return "?";
}

int uniform_available_action(std::span<const std::uint8_t> mask, Rng& rng) {
  std::size_t count = 0;
  for (auto m : mask) count += m ? 1 : 0;
  if (count == 0) throw ContractError("random action requested with an empty availability mask");
  std::size_t pick = rng.index(count);
  for (std::size_t a = 0; a < mask.size(); ++a) {
    if (!mask[a]) continue;
    if (pick == 0) return static_cast<int>(a);
    --pick;
  }
  return -1;  // unreachable
}

namespace {

// Per-agent Bernoulli(p) exploration; shared by the independent and
// decentralized modes.
std::vector<int> select_per_agent(const Tensor& q, std::span<const std::uint8_t> avail, double p,
                                  Rng& rng, ExploreInfo* info) {
  const std::size_t n = q.rows();
  const std::size_t a = q.cols();
  std::vector<int> actions = greedy_actions(q, avail);
  std::size_t explorers = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.uniform() < p) {
      actions[i] = uniform_available_action(avail.subspan(i * a, a), rng);
      ++explorers;
    }
  }
  if (info) info->explorers = explorers;
  return actions;
}

}  // namespace

std::vector<int> select_independent(const Tensor& q, std::span<const std::uint8_t> avail,
                                    double eps, Rng& rng, ExploreInfo* info) {
  return select_per_agent(q, avail, eps, rng, info);
}

std::vector<int> select_sequential_centralized(const Tensor& q,
                                               std::span<const std::uint8_t> avail, double eps,
                                               Rng& rng, ExploreInfo* info) {
  const std::size_t n = q.rows();
  const std::size_t a = q.cols();
  std::vector<int> actions = greedy_actions(q, avail);
  std::size_t explorers = 0;
  if (rng.uniform() < eps) {
    const std::size_t who = rng.index(n);
    actions[who] = uniform_available_action(avail.subspan(who * a, a), rng);
    explorers = 1;
  }
  if (info) info->explorers = explorers;
  return actions;
}

std::vector<int> select_sequential_decentralized(const Tensor& q,
                                                 std::span<const std::uint8_t> avail, double eps,
                                                 std::size_t n_agents, Rng& rng,
                                                 ExploreInfo* info) {
  if (n_agents == 0) throw ConfigError("decentralized exploration needs n_agents >= 1");
  return select_per_agent(q, avail, eps / static_cast<double>(n_agents), rng, info);
}

std::vector<int> Explorer::select(const Tensor& q, std::span<const std::uint8_t> avail, double eps,
                                  Rng& rng, ExploreInfo* info) const {
  switch (mode) {
    case ExplorationMode::kIndependent: return select_independent(q, avail, eps, rng, info);
    case ExplorationMode::kSequentialCentralized:
      return select_sequential_centralized(q, avail, eps, rng, info);
    case ExplorationMode::kSequentialDecentralized:
      return select_sequential_decentralized(q, avail, eps, q.rows(), rng, info);
  }
  throw ConfigError("bad exploration mode");
}

double epsilon_value(std::uint64_t t, const Schedule& schedule) { return schedule.value(t); }

}  // namespace ovmse
