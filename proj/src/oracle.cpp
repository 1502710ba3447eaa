#include "ovmse/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "ovmse/errors.hpp"

namespace ovmse {

namespace {

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Odometer over the Cartesian product of per-agent choice lists.
bool advance(std::vector<std::size_t>& idx, const std::vector<std::size_t>& sizes) {
  for (std::size_t k = idx.size(); k-- > 0;) {
    if (++idx[k] < sizes[k]) return true;
    idx[k] = 0;
  }
  return false;
}

}  // namespace

ExactSolution solve_matrix_game(const MatrixGame::Payoff& payoff) {
  if (payoff.empty() || payoff.front().empty()) throw ConfigError("matrix game: empty payoff");
  ExactSolution s;
  s.optimal_return = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < payoff.size(); ++a) {
    if (payoff[a].size() != payoff.front().size()) {
      throw ConfigError("matrix game: payoff rows differ in length");
    }
    for (std::size_t b = 0; b < payoff[a].size(); ++b) {
      s.initial_q.push_back(payoff[a][b]);
      if (payoff[a][b] > s.optimal_return) {
        s.optimal_return = payoff[a][b];
        s.optimal_joint = {static_cast<int>(a), static_cast<int>(b)};
      }
    }
  }
  s.states = 1;
  return s;
}

// ---------------------------------------------------------------- gridworld

GridWorldSolver::GridWorldSolver(GridWorldConfig config, std::uint64_t max_states)
    : env_(std::move(config)) {
  config_ = env_.config();
  cells_ = config_.grid_size * config_.grid_size;
  states_ = 1;
  for (std::size_t k = 0; k < config_.n_agents; ++k) {
    stride_.push_back(states_);
    const double next = static_cast<double>(states_) * cells_;
    if (next > static_cast<double>(max_states)) {
      std::ostringstream msg;
      msg << "oracle capacity exceeded: " << cells_ << "^" << config_.n_agents
          << " joint states > limit " << max_states;
      throw CapacityError(msg.str());
    }
    states_ *= static_cast<std::uint64_t>(cells_);
  }
  for (const Cell& g : config_.goals) goal_cell_.push_back(g.row * config_.grid_size + g.col);
}

int GridWorldSolver::successor(int cell, int action) const {
  const Cell to = env_.move({cell / config_.grid_size, cell % config_.grid_size}, action);
  return to.row * config_.grid_size + to.col;
}

bool GridWorldSolver::available(std::size_t agent, int cell, int action) const {
  return env_.action_available(agent, {cell / config_.grid_size, cell % config_.grid_size},
                               action);
}

bool GridWorldSolver::all_parked(std::uint64_t index) const {
  for (std::size_t k = 0; k < config_.n_agents; ++k) {
    if (static_cast<int>((index / stride_[k]) % cells_) != goal_cell_[k]) return false;
  }
  return true;
}

std::uint64_t GridWorldSolver::encode(const std::vector<Cell>& positions) const {
  if (positions.size() != config_.n_agents) throw UsageError("oracle: wrong number of agents");
  std::uint64_t index = 0;
  for (std::size_t k = 0; k < positions.size(); ++k) {
    const Cell c = positions[k];
    if (c.row < 0 || c.col < 0 || c.row >= config_.grid_size || c.col >= config_.grid_size) {
      throw UsageError("oracle: position outside the grid");
    }
    index += static_cast<std::uint64_t>(c.row * config_.grid_size + c.col) * stride_[k];
  }
  return index;
}

std::vector<Cell> GridWorldSolver::decode(std::uint64_t index) const {
  std::vector<Cell> out(config_.n_agents);
  for (std::size_t k = 0; k < config_.n_agents; ++k) {
    const int c = static_cast<int>((index / stride_[k]) % cells_);
    out[k] = {c / config_.grid_size, c % config_.grid_size};
  }
  return out;
}

void GridWorldSolver::per_agent_max(const std::vector<double>& in, std::vector<double>& out,
                                    std::size_t agent) const {
  std::vector<std::vector<std::uint64_t>> offsets(static_cast<std::size_t>(cells_));
  for (int c = 0; c < cells_; ++c) {
    for (int a = 0; a < static_cast<int>(GridWorld::kActions); ++a) {
      if (available(agent, c, a)) {
        offsets[c].push_back(static_cast<std::uint64_t>(successor(c, a)) * stride_[agent]);
      }
    }
  }
  const std::uint64_t stride = stride_[agent];
  const std::uint64_t block = stride * static_cast<std::uint64_t>(cells_);
  for (std::uint64_t hi = 0; hi < states_; hi += block) {
    for (int c = 0; c < cells_; ++c) {
      const auto& offs = offsets[c];
      double* dst = out.data() + hi + static_cast<std::uint64_t>(c) * stride;
      const double* src = in.data() + hi;
      for (std::uint64_t lo = 0; lo < stride; ++lo) {
        double best = src[offs[0] + lo];
        for (std::size_t j = 1; j < offs.size(); ++j) best = std::max(best, src[offs[j] + lo]);
        dst[lo] = best;
      }
    }
  }
}

void GridWorldSolver::solve(bool keep_all_steps) {
  const std::size_t T = config_.horizon;
  const double gamma = config_.gamma;
  const double penalty = config_.step_penalty;
  std::uint64_t goal_index = 0;
  for (std::size_t k = 0; k < config_.n_agents; ++k) {
    goal_index += static_cast<std::uint64_t>(goal_cell_[k]) * stride_[k];
  }

  all_steps_ = keep_all_steps;
  tables_.clear();
  std::vector<double> next(states_, 0.0);  // V_T
  std::vector<double> a(states_);
  std::vector<double> b(states_);
  std::vector<std::vector<double>> kept;  // V_t for t = T..0 when keeping all
  if (keep_all_steps) kept.push_back(next);
  std::vector<double> v1;
  if (T == 1) v1 = next;

  for (std::size_t t = T; t-- > 0;) {
    // Value of landing in s': terminal bonus or penalty plus discounted future.
    for (std::uint64_t j = 0; j < states_; ++j) a[j] = -penalty + gamma * next[j];
    a[goal_index] = config_.goal_reward;
    for (std::size_t k = 0; k < config_.n_agents; ++k) {
      per_agent_max(a, b, k);
      std::swap(a, b);
    }
    std::swap(next, a);  // next = V_t
    if (keep_all_steps) kept.push_back(next);
    if (t == 1) v1 = next;
  }
  if (keep_all_steps) {
    std::reverse(kept.begin(), kept.end());
    tables_ = std::move(kept);
  } else {
    tables_.push_back(std::move(next));
    tables_.push_back(std::move(v1));
  }
  solved_ = true;
}

const std::vector<double>& GridWorldSolver::table(std::size_t t) const {
  if (!solved_) throw UsageError("oracle: solve() has not been run");
  if (all_steps_) return tables_.at(t);
  if (t <= 1) return tables_[t];
  throw UsageError("oracle: value table for t=" + std::to_string(t) +
                   " was not kept; solve with keep_all_steps");
}

double GridWorldSolver::value(const std::vector<Cell>& positions, std::size_t t) const {
  return table(t)[encode(positions)];
}

double GridWorldSolver::q_value(const std::vector<Cell>& positions, std::size_t t,
                                const std::vector<int>& joint) const {
  if (t >= config_.horizon) throw UsageError("oracle: time step beyond the horizon");
  std::vector<Cell> next(positions.size());
  bool parked = true;
  for (std::size_t k = 0; k < positions.size(); ++k) {
    if (!env_.action_available(k, positions[k], joint.at(k))) {
      throw ContractError("oracle: joint action not available");
    }
    next[k] = env_.move(positions[k], joint[k]);
    parked = parked && env_.parked(k, next[k]);
  }
  if (parked) return config_.goal_reward;
  const double future = t + 1 == config_.horizon ? 0.0 : table(t + 1)[encode(next)];
  return -config_.step_penalty + config_.gamma * future;
}

std::vector<int> GridWorldSolver::greedy(const std::vector<Cell>& positions,
                                         std::size_t t) const {
  const std::size_t n = config_.n_agents;
  std::vector<std::vector<int>> choices(n);
  std::vector<std::size_t> sizes(n);
  for (std::size_t k = 0; k < n; ++k) {
    for (int a = 0; a < static_cast<int>(GridWorld::kActions); ++a) {
      if (env_.action_available(k, positions.at(k), a)) choices[k].push_back(a);
    }
    sizes[k] = choices[k].size();
  }
  std::vector<std::size_t> idx(n, 0);
  std::vector<int> joint(n);
  std::vector<int> best;
  double best_q = -std::numeric_limits<double>::infinity();
  do {
    for (std::size_t k = 0; k < n; ++k) joint[k] = choices[k][idx[k]];
    const double q = q_value(positions, t, joint);
    if (q > best_q) {
      best_q = q;
      best = joint;
    }
  } while (advance(idx, sizes));
  return best;
}

double GridWorldSolver::bellman_residual() const {
  if (!solved_) throw UsageError("oracle: solve() has not been run");
  const std::size_t last = all_steps_ ? config_.horizon : 1;
  double worst = 0.0;
  for (std::size_t t = 0; t < std::min(last, config_.horizon); ++t) {
    for (std::uint64_t s = 0; s < states_; ++s) {
      const auto pos = decode(s);
      const auto a = greedy(pos, t);
      worst = std::max(worst, std::abs(table(t)[s] - q_value(pos, t, a)));
    }
  }
  return worst;
}

double GridWorldSolver::expected_initial_value() const {
  const auto& v0 = table(0);
  if (!config_.fixed_spawn.empty()) return v0[encode(config_.fixed_spawn)];
  const std::size_t n = config_.n_agents;
  std::vector<std::vector<Cell>> cands(n);
  std::vector<std::size_t> sizes(n);
  for (std::size_t k = 0; k < n; ++k) {
    cands[k] = env_.spawn_candidates(k);
    sizes[k] = cands[k].size();
  }
  std::vector<std::size_t> idx(n, 0);
  std::vector<Cell> pos(n);
  double total = 0.0;
  std::uint64_t count = 0;
  do {
    for (std::size_t k = 0; k < n; ++k) pos[k] = cands[k][idx[k]];
    total += v0[encode(pos)];
    ++count;
  } while (advance(idx, sizes));
  return total / static_cast<double>(count);
}

ExactSolution GridWorldSolver::solution() const {
  ExactSolution s;
  s.optimal_return = expected_initial_value();
  s.states = states_;
  if (!config_.fixed_spawn.empty()) {
    s.optimal_joint = greedy(config_.fixed_spawn, 0);
    const std::size_t n = config_.n_agents;
    std::vector<std::size_t> sizes(n, GridWorld::kActions);
    std::vector<std::size_t> idx(n, 0);
    std::vector<int> joint(n);
    do {
      bool ok = true;
      for (std::size_t k = 0; k < n; ++k) {
        joint[k] = static_cast<int>(idx[k]);
        ok = ok && env_.action_available(k, config_.fixed_spawn[k], joint[k]);
      }
      s.initial_q.push_back(ok ? q_value(config_.fixed_spawn, 0, joint)
                               : -std::numeric_limits<double>::infinity());
    } while (advance(idx, sizes));
    // Unavailable joint actions are stored as the lowest finite value so the
    // checkpoint container (finite-only) can hold them.
    for (double& q : s.initial_q) {
      if (!std::isfinite(q)) q = -std::numeric_limits<double>::max();
    }
  }
  return s;
}

double closed_form_gridworld_return(const GridWorldConfig& config,
                                    const std::vector<Cell>& spawn) {
  const auto goals = config.goals.empty()
                         ? GridWorldConfig::default_goals(config.grid_size, config.n_agents)
                         : config.goals;
  std::size_t k = 0;
  for (std::size_t i = 0; i < spawn.size(); ++i) {
    const std::size_t d = static_cast<std::size_t>(std::abs(spawn[i].row - goals[i].row) +
                                                   std::abs(spawn[i].col - goals[i].col));
    k = std::max(k, d);
  }
  if (k == 0) return config.goal_reward;
  double ret = 0.0;
  double disc = 1.0;
  const std::size_t penalised = k > config.horizon ? config.horizon : k - 1;
  for (std::size_t t = 0; t < penalised; ++t) {
    ret -= config.step_penalty * disc;
    disc *= config.gamma;
  }
  if (k <= config.horizon) ret += config.goal_reward * disc;
  return ret;
}

ExactSolution solve_gridworld(const GridWorldConfig& config, std::uint64_t max_states) {
  GridWorldSolver solver(config, max_states);
  solver.solve(false);
  ExactSolution s = solver.solution();
  s.bellman_residual = 0.0;
  // Residual at t = 0 over every state, with explicit joint enumeration.
  const auto& v0 = solver.initial_values();
  if (solver.state_count() <= 200'000) {
    for (std::uint64_t i = 0; i < solver.state_count(); ++i) {
      const auto pos = solver.decode(i);
      s.bellman_residual =
          std::max(s.bellman_residual,
                   std::abs(v0[i] - solver.q_value(pos, 0, solver.greedy(pos, 0))));
    }
  }
  return s;
}

// ------------------------------------------------------------------- cache

std::string gridworld_task_key(const GridWorldConfig& config) {
  const GridWorld env(config);
  const auto& c = env.config();
  std::ostringstream key;
  key << "gridworld size=" << c.grid_size << " agents=" << c.n_agents << " horizon=" << c.horizon
      << " gamma=" << exact(c.gamma) << " radius=" << c.view_radius
      << " goal_reward=" << exact(c.goal_reward) << " penalty=" << exact(c.step_penalty)
      << " goals=";
  for (const Cell& g : c.goals) key << g.row << ':' << g.col << ';';
  key << " spawn=";
  for (const Cell& s : c.fixed_spawn) key << s.row << ':' << s.col << ';';
  return key.str();
}

std::string matrix_task_key(const MatrixGame::Payoff& payoff, double gamma) {
  std::ostringstream key;
  key << "matrix gamma=" << exact(gamma) << " payoff=";
  for (const auto& row : payoff) {
    for (double v : row) key << exact(v) << ',';
    key << ';';
  }
  return key.str();
}

Checkpoint solution_to_checkpoint(const ExactSolution& s, const std::string& task_key) {
  Checkpoint ckpt;
  ckpt.meta["kind"] = "oracle";
  ckpt.meta["task"] = task_key;
  ckpt.meta["states"] = std::to_string(s.states);
  ckpt.add("optimal_return", Tensor({1}, std::vector<double>{s.optimal_return}));
  ckpt.add("bellman_residual", Tensor({1}, std::vector<double>{s.bellman_residual}));
  std::vector<double> joint(s.optimal_joint.begin(), s.optimal_joint.end());
  ckpt.add("optimal_joint", Tensor({joint.size()}, joint));
  ckpt.add("initial_q", Tensor({s.initial_q.size()}, s.initial_q));
  return ckpt;
}

ExactSolution solution_from_checkpoint(const Checkpoint& ckpt, const std::string& task_key) {
  if (!ckpt.meta.count("kind") || ckpt.meta_value("kind") != "oracle") {
    throw ArtifactError("not an oracle cache file");
  }
  if (ckpt.meta_value("task") != task_key) {
    throw ArtifactError("oracle cache was computed for a different task");
  }
  ExactSolution s;
  s.states = std::stoull(ckpt.meta_value("states"));
  s.optimal_return = ckpt.get("optimal_return")[0];
  s.bellman_residual = ckpt.get("bellman_residual")[0];
  for (double v : ckpt.get("optimal_joint").storage()) s.optimal_joint.push_back(static_cast<int>(v));
  s.initial_q = ckpt.get("initial_q").storage();
  return s;
}

ExactSolution cached_gridworld_solution(const GridWorldConfig& config,
                                        const std::filesystem::path& path) {
  const std::string key = gridworld_task_key(config);
  if (std::filesystem::exists(path)) {
    try {
      return solution_from_checkpoint(read_checkpoint(path), key);
    } catch (const ArtifactError&) {
      // Stale or foreign cache: recompute below.
    }
  }
  ExactSolution s = solve_gridworld(config);
  write_checkpoint(path, solution_to_checkpoint(s, key));
  return s;
}

}  // namespace ovmse
