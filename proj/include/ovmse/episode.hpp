#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ovmse/env.hpp"
#include "ovmse/exploration.hpp"
#include "ovmse/networks.hpp"

namespace ovmse {

struct StepRecord {
  std::vector<double> state;
  std::vector<double> obs;          // [n_agents * obs_dim]
  std::vector<std::uint8_t> avail;  // [n_agents * action_dim]
  std::vector<int> action;          // [n_agents]
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;

  bool operator==(const StepRecord&) const = default;
};

// One trajectory. `final` is the decision point reached after the last step;
// it is needed to bootstrap through truncation.
struct EpisodeRecord {
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  Timestep final;
  double episode_return = 0.0;
  // Set by rollouts; not persisted in dataset files.
  bool success = false;

  std::size_t length() const { return steps.size(); }
  // Throws ArtifactError if the record breaks its invariants.
  void validate(const DecPomdpSpec& spec) const;
  bool same_trajectory(const EpisodeRecord& other) const {
    return seed == other.seed && steps == other.steps && final.state == other.final.state &&
           final.obs == other.final.obs && final.avail == other.final.avail &&
           episode_return == other.episode_return;
  }
};

// Action values for all agents: [n_agents x input_dim] -> [n_agents x action_dim].
using QFunction = std::function<Tensor(const Tensor& agent_inputs)>;

QFunction q_function(const AgentQNet& net);

struct RolloutTrace {
  std::vector<std::uint64_t> env_steps;
  std::vector<double> epsilons;
  std::vector<std::size_t> explorers;
  std::vector<std::vector<int>> greedy;
  std::vector<std::vector<int>> chosen;
};

// Runs one episode from env.reset(episode_seed). Epsilon is evaluated at the
// global environment step, which is advanced once per step.
EpisodeRecord run_episode(Environment& env, const QFunction& q, const NetShape& shape,
                          const Explorer& explorer, std::uint64_t episode_seed,
                          std::uint64_t& global_step, Rng& rng, RolloutTrace* trace = nullptr);

// Greedy (epsilon = 0) episode.
EpisodeRecord run_greedy_episode(Environment& env, const QFunction& q, const NetShape& shape,
                                 std::uint64_t episode_seed);

// Re-encodes the agent inputs of every decision point (steps then final) with
// the same history construction used during rollouts. Result has
// (length + 1) * n_agents rows.
std::vector<double> encode_episode_inputs(const EpisodeRecord& ep, const DecPomdpSpec& spec,
                                          std::size_t window, bool append_agent_id);

}  // namespace ovmse
