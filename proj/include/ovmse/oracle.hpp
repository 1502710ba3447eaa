#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ovmse/checkpoint.hpp"
#include "ovmse/env.hpp"
#include "ovmse/errors.hpp"

namespace ovmse {

// Thrown when a task's joint state space exceeds the solver's budget.
class CapacityError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Exact optimum of a fully observed cooperative task.
struct ExactSolution {
  double optimal_return = 0.0;
  // Optimal joint action at the initial state (the only state of a matrix
  // game; the fixed spawn, when one is configured, for the gridworld).
  std::vector<int> optimal_joint;
  // Q over every joint action at that state, agent 0 slowest-varying.
  std::vector<double> initial_q;
  double bellman_residual = 0.0;
  std::uint64_t states = 0;
};

// Exhaustive argmax; ties go to the lowest joint action in lexicographic order.
ExactSolution solve_matrix_game(const MatrixGame::Payoff& payoff);

inline constexpr std::uint64_t kDefaultOracleCapacity = 8'000'000;

// Finite-horizon value iteration over joint agent positions.
class GridWorldSolver {
 public:
  // Throws CapacityError if cells^n_agents exceeds max_states.
  explicit GridWorldSolver(GridWorldConfig config,
                           std::uint64_t max_states = kDefaultOracleCapacity);

  // Runs the backward sweeps. Tables for every time step are kept only when
  // keep_all_steps is set; otherwise only V_0 survives.
  void solve(bool keep_all_steps = false);

  std::uint64_t state_count() const { return states_; }
  std::size_t horizon() const { return config_.horizon; }
  std::uint64_t encode(const std::vector<Cell>& positions) const;
  std::vector<Cell> decode(std::uint64_t index) const;

  // V_t(s). t > 0 requires keep_all_steps.
  double value(const std::vector<Cell>& positions, std::size_t t = 0) const;
  // r + gamma * V_{t+1}(s') for one joint action, computed directly from the
  // transition rules. Requires the table for t + 1 (always present for t = T-1).
  double q_value(const std::vector<Cell>& positions, std::size_t t,
                 const std::vector<int>& joint) const;
  // Lowest-lexicographic optimal joint action.
  std::vector<int> greedy(const std::vector<Cell>& positions, std::size_t t) const;

  // max_s |V_t(s) - max_a Q_t(s, a)| with the max over joint actions
  // enumerated explicitly. Needs keep_all_steps.
  double bellman_residual() const;

  // Expected V_0 under the reset distribution (fixed spawn or uniform spawn).
  double expected_initial_value() const;

  ExactSolution solution() const;

  const std::vector<double>& initial_values() const { return tables_.front(); }

 private:
  bool available(std::size_t agent, int cell, int action) const;
  int successor(int cell, int action) const;
  bool all_parked(std::uint64_t index) const;
  void per_agent_max(const std::vector<double>& in, std::vector<double>& out,
                     std::size_t agent) const;
  const std::vector<double>& table(std::size_t t) const;

  GridWorldConfig config_;
  GridWorld env_;
  int cells_ = 0;
  std::uint64_t states_ = 0;
  std::vector<std::uint64_t> stride_;
  std::vector<int> goal_cell_;
  bool solved_ = false;
  bool all_steps_ = false;
  // tables_[t] = V_t when all steps are kept, else only tables_[0].
  std::vector<std::vector<double>> tables_;
};

// Number of steps and discounted return of the shortest completion when every
// agent walks straight to its goal: k = max_i Manhattan(spawn_i, goal_i).
double closed_form_gridworld_return(const GridWorldConfig& config,
                                    const std::vector<Cell>& spawn);

ExactSolution solve_gridworld(const GridWorldConfig& config,
                              std::uint64_t max_states = kDefaultOracleCapacity);

// Cache in the checkpoint container.
Checkpoint solution_to_checkpoint(const ExactSolution& solution, const std::string& task_key);
ExactSolution solution_from_checkpoint(const Checkpoint& ckpt, const std::string& task_key);

// A stable text key describing the task, used to validate cached solutions.
std::string gridworld_task_key(const GridWorldConfig& config);
std::string matrix_task_key(const MatrixGame::Payoff& payoff, double gamma);

// Loads the cached solution at `path` if its key matches, else solves and
// writes it.
ExactSolution cached_gridworld_solution(const GridWorldConfig& config,
                                        const std::filesystem::path& path);

}  // namespace ovmse
