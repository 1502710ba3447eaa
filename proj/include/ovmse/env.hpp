#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ovmse/rng.hpp"

namespace ovmse {

// Static description of a cooperative Dec-POMDP: agent count, per-agent
// observation and action widths (actions are uniform across agents),
// global state width, horizon and discount.
struct DecPomdpSpec {
  std::size_t n_agents = 2;
  std::size_t state_dim = 1;
  std::size_t obs_dim = 1;
  std::size_t action_dim = 1;
  std::size_t horizon = 1;
  double gamma = 0.99;

  void validate() const;
  bool operator==(const DecPomdpSpec&) const = default;
};

// Everything an agent team sees at one decision point. Observations and
// availability masks are stored flat: obs[i * obs_dim + k], avail[i * action_dim + a].
struct Timestep {
  std::vector<double> state;
  std::vector<double> obs;
  std::vector<std::uint8_t> avail;
};

struct StepOutcome {
  Timestep next;
  double reward = 0.0;
  bool terminated = false;
  // Horizon reached without termination. Bootstrapping continues through it.
  bool truncated = false;
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual const DecPomdpSpec& spec() const = 0;
  virtual std::string name() const = 0;

  // Deterministic given the seed.
  virtual Timestep reset(std::uint64_t seed) = 0;

  // Throws ContractError for an unavailable action or a finished episode.
  virtual StepOutcome step(std::span<const int> joint_action) = 0;

  // Whether the current (or just finished) episode reached the cooperative goal.
  virtual bool success() const = 0;

  virtual std::unique_ptr<Environment> clone() const = 0;
};

// Throws ContractError if any agent has no available action.
void check_masks(const DecPomdpSpec& spec, std::span<const std::uint8_t> avail);

// One-step two-agent cooperative game over a payoff table.
class MatrixGame : public Environment {
 public:
  using Payoff = std::vector<std::vector<double>>;

  // Default cooperative fixture: optimum 8 at (0, 0) surrounded by -12.
  static Payoff fixture_payoff();

  explicit MatrixGame(Payoff payoff = fixture_payoff(), double gamma = 0.99);

  const DecPomdpSpec& spec() const override { return spec_; }
  std::string name() const override { return "matrix"; }
  Timestep reset(std::uint64_t seed) override;
  StepOutcome step(std::span<const int> joint_action) override;
  bool success() const override { return success_; }
  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<MatrixGame>(*this);
  }

  const Payoff& payoff() const { return payoff_; }

 private:
  Timestep observe() const;

  DecPomdpSpec spec_;
  Payoff payoff_;
  std::array<int, 2> best_{0, 0};
  bool done_ = true;
  bool success_ = false;
};

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

struct GridWorldConfig {
  int grid_size = 7;
  std::size_t n_agents = 4;
  std::size_t horizon = 40;
  double gamma = 0.99;
  int view_radius = 2;
  double goal_reward = 10.0;
  double step_penalty = 0.05;
  // Empty means the default layout for (grid_size, n_agents).
  std::vector<Cell> goals;
  // Empty means each agent spawns uniformly within view_radius of its own
  // goal (excluding the goal cell), drawn from the reset seed.
  std::vector<Cell> fixed_spawn;

  static std::vector<Cell> default_goals(int grid_size, std::size_t n_agents);
};

// Cooperative navigation. Actions: 0 stay, 1 up, 2 down, 3 left, 4 right.
// Moves off the grid are unavailable. An agent standing on its own goal is
// parked and may only stay. Reward is goal_reward on the step that parks the
// last agent (which terminates the episode), -step_penalty otherwise.
//
// Observation per agent: row and column scaled to [0, 1], offset to its own
// goal scaled by view_radius (zero when the goal is outside the Chebyshev
// window), and a goal-visible flag. State: every agent's scaled position
// followed by t / horizon.
class GridWorld : public Environment {
 public:
  static constexpr std::size_t kActions = 5;
  static constexpr int kStay = 0;

  explicit GridWorld(GridWorldConfig config = {});

  const DecPomdpSpec& spec() const override { return spec_; }
  std::string name() const override { return "gridworld"; }
  Timestep reset(std::uint64_t seed) override;
  StepOutcome step(std::span<const int> joint_action) override;
  bool success() const override { return success_; }
  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<GridWorld>(*this);
  }

  const GridWorldConfig& config() const { return config_; }
  const std::vector<Cell>& positions() const { return positions_; }
  std::size_t time() const { return t_; }

  // Transition helpers shared with the exact solver.
  Cell move(Cell from, int action) const;
  bool action_available(std::size_t agent, Cell at, int action) const;
  bool parked(std::size_t agent, Cell at) const { return at == config_.goals[agent]; }
  std::vector<Cell> spawn_candidates(std::size_t agent) const;

 private:
  Timestep observe() const;

  GridWorldConfig config_;
  DecPomdpSpec spec_;
  std::vector<Cell> positions_;
  std::size_t t_ = 0;
  bool done_ = true;
  bool success_ = false;
};

// Sliding window over the last k (observation, previous own action) pairs of
// every agent. Entries older than the episode start are zeros. Encoded agent
// input, newest entry first:
//   [obs_t, onehot(a_{t-1}), obs_{t-1}, onehot(a_{t-2}), ..., onehot(agent id)]
class AgentHistory {
 public:
  AgentHistory(const DecPomdpSpec& spec, std::size_t window, bool append_agent_id);

  void reset(std::span<const double> obs);
  void advance(std::span<const int> joint_action, std::span<const double> next_obs);

  std::size_t input_dim() const;
  std::size_t window() const { return window_; }
  // Writes agent i's encoded input (input_dim values).
  void encode(std::size_t agent, std::span<double> out) const;
  // All agents' inputs appended row-wise to out (n_agents * input_dim values).
  void encode_all(std::vector<double>& out) const;

 private:
  std::size_t frame_width() const { return obs_dim_ + action_dim_; }

  std::size_t n_agents_;
  std::size_t obs_dim_;
  std::size_t action_dim_;
  std::size_t window_;
  bool append_id_;
  // frames_[j] holds entry j (0 = newest) for all agents, agent-major.
  std::vector<std::vector<double>> frames_;
};

}  // namespace ovmse
