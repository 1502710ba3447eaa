#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ovmse/rng.hpp"
#include "ovmse/schedule.hpp"
#include "ovmse/tensor.hpp"

namespace ovmse {

enum class ExplorationMode { kIndependent, kSequentialCentralized, kSequentialDecentralized };

ExplorationMode parse_exploration_mode(const std::string& name);
std::string to_string(ExplorationMode mode);

// Agents that took the random branch on one selection. A random draw may
// coincide with the greedy action; it still counts as exploring.
struct ExploreInfo {
  std::size_t explorers = 0;
};

// Uniform over the available actions of one agent.
int uniform_available_action(std::span<const std::uint8_t> mask, Rng& rng);

// q is [n_agents x action_dim]; avail is flat [n_agents * action_dim].

// Each agent explores independently with probability eps.
std::vector<int> select_independent(const Tensor& q, std::span<const std::uint8_t> avail,
                                    double eps, Rng& rng, ExploreInfo* info = nullptr);

// One team-level Bernoulli(eps); on success exactly one uniformly chosen agent
// acts at random, the rest act greedily.
std::vector<int> select_sequential_centralized(const Tensor& q,
                                               std::span<const std::uint8_t> avail, double eps,
                                               Rng& rng, ExploreInfo* info = nullptr);

// Each agent explores independently with probability eps / n_agents. No
// information is shared between agents.
std::vector<int> select_sequential_decentralized(const Tensor& q,
                                                 std::span<const std::uint8_t> avail, double eps,
                                                 std::size_t n_agents, Rng& rng,
                                                 ExploreInfo* info = nullptr);

// Mode plus epsilon schedule, evaluated at the global environment step.
struct Explorer {
  ExplorationMode mode = ExplorationMode::kSequentialDecentralized;
  Schedule epsilon{1.0, 0.05, 0};

  double epsilon_at(std::uint64_t t) const { return epsilon.value(t); }
  std::vector<int> select(const Tensor& q, std::span<const std::uint8_t> avail, double eps,
                          Rng& rng, ExploreInfo* info = nullptr) const;
};

// Closed-form epsilon: max(eps_end, eps_start - ((eps_start - eps_end) / T) * t).
double epsilon_value(std::uint64_t t, const Schedule& schedule);

}  // namespace ovmse
