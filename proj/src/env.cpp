#include "ovmse/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "ovmse/errors.hpp"

namespace ovmse {

void DecPomdpSpec::validate() const {
  if (n_agents < 2) throw ConfigError("DecPomdpSpec: need at least 2 agents");
  if (horizon < 1) throw ConfigError("DecPomdpSpec: horizon must be >= 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("DecPomdpSpec: gamma must be in [0, 1]");
  if (state_dim == 0 || obs_dim == 0 || action_dim == 0) {
    throw ConfigError("DecPomdpSpec: dimensions must be positive");
  }
}

void check_masks(const DecPomdpSpec& spec, std::span<const std::uint8_t> avail) {
  if (avail.size() != spec.n_agents * spec.action_dim) {
    throw ContractError("availability mask has wrong size");
  }
  for (std::size_t i = 0; i < spec.n_agents; ++i) {
    auto mask = avail.subspan(i * spec.action_dim, spec.action_dim);
    if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) {
      throw ContractError("agent " + std::to_string(i) + " has no available action");
    }
  }
}

namespace {

void check_joint_action(const DecPomdpSpec& spec, std::span<const int> joint_action,
                        std::span<const std::uint8_t> avail) {
  if (joint_action.size() != spec.n_agents) {
    throw ContractError("joint action has " + std::to_string(joint_action.size()) +
                        " entries, expected " + std::to_string(spec.n_agents));
  }
  for (std::size_t i = 0; i < spec.n_agents; ++i) {
    const int a = joint_action[i];
    if (a < 0 || static_cast<std::size_t>(a) >= spec.action_dim ||
        !avail[i * spec.action_dim + static_cast<std::size_t>(a)]) {
      throw ContractError("agent " + std::to_string(i) + " chose unavailable action " +
                          std::to_string(a));
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- matrix game

MatrixGame::Payoff MatrixGame::fixture_payoff() {
  return {{8.0, -12.0, -12.0}, {-12.0, 6.0, 0.0}, {-12.0, 0.0, 6.0}};
}

MatrixGame::MatrixGame(Payoff payoff, double gamma) : payoff_(std::move(payoff)) {
  const std::size_t a = payoff_.size();
  if (a == 0) throw ConfigError("matrix game: empty payoff table");
  for (const auto& row : payoff_) {
    if (row.size() != a) throw ConfigError("matrix game: payoff table must be square");
  }
  spec_ = {2, 1, 1, a, 1, gamma};
  spec_.validate();
  double best = payoff_[0][0];
  for (std::size_t i = 0; i < a; ++i) {
    for (std::size_t j = 0; j < a; ++j) {
      if (payoff_[i][j] > best) {
        best = payoff_[i][j];
        best_ = {static_cast<int>(i), static_cast<int>(j)};
      }
    }
  }
}

Timestep MatrixGame::observe() const {
  Timestep ts;
  ts.state = {1.0};
  ts.obs = {1.0, 1.0};
  ts.avail.assign(2 * spec_.action_dim, 1);
  return ts;
}

Timestep MatrixGame::reset(std::uint64_t) {
  done_ = false;
  success_ = false;
  return observe();
}

StepOutcome MatrixGame::step(std::span<const int> joint_action) {
  if (done_) throw ContractError("matrix game: step after termination; call reset");
  const Timestep now = observe();
  check_joint_action(spec_, joint_action, now.avail);
  StepOutcome out;
  out.next = now;
  out.reward = payoff_[joint_action[0]][joint_action[1]];
  out.terminated = true;
  success_ = joint_action[0] == best_[0] && joint_action[1] == best_[1];
  done_ = true;
  return out;
}

// ------------------------------------------------------------------ gridworld

std::vector<Cell> GridWorldConfig::default_goals(int grid_size, std::size_t n_agents) {
  const int inset = grid_size >= 5 ? 1 : 0;
  const int far = grid_size - 1 - inset;
  std::vector<Cell> preferred = {{inset, inset}, {inset, far}, {far, inset}, {far, far},
                                 {grid_size / 2, grid_size / 2}};
  std::vector<Cell> goals;
  for (const Cell& c : preferred) {
    if (goals.size() == n_agents) break;
    if (std::find(goals.begin(), goals.end(), c) == goals.end()) goals.push_back(c);
  }
  for (int r = 0; r < grid_size && goals.size() < n_agents; ++r) {
    for (int c = 0; c < grid_size && goals.size() < n_agents; ++c) {
      if (std::find(goals.begin(), goals.end(), Cell{r, c}) == goals.end()) goals.push_back({r, c});
    }
  }
  // Small grids may run out of distinct cells; goals may then be shared.
  while (goals.size() < n_agents) goals.push_back(goals[goals.size() % preferred.size()]);
  return goals;
}

GridWorld::GridWorld(GridWorldConfig config) : config_(std::move(config)) {
  if (config_.grid_size < 2) throw ConfigError("gridworld: grid_size must be >= 2");
  if (config_.view_radius < 1) throw ConfigError("gridworld: view_radius must be >= 1");
  if (config_.goals.empty()) {
    config_.goals = GridWorldConfig::default_goals(config_.grid_size, config_.n_agents);
  }
  auto in_grid = [&](Cell c) {
    return c.row >= 0 && c.col >= 0 && c.row < config_.grid_size && c.col < config_.grid_size;
  };
  if (config_.goals.size() != config_.n_agents) throw ConfigError("gridworld: one goal per agent");
  for (const Cell& g : config_.goals) {
    if (!in_grid(g)) throw ConfigError("gridworld: goal outside grid");
  }
  if (!config_.fixed_spawn.empty()) {
    if (config_.fixed_spawn.size() != config_.n_agents) {
      throw ConfigError("gridworld: fixed spawn needs one cell per agent");
    }
    for (const Cell& s : config_.fixed_spawn) {
      if (!in_grid(s)) throw ConfigError("gridworld: spawn outside grid");
    }
  }
  spec_ = {config_.n_agents, 2 * config_.n_agents + 1, 5, kActions, config_.horizon,
           config_.gamma};
  spec_.validate();
}

Cell GridWorld::move(Cell from, int action) const {
  switch (action) {
    case 1: return {from.row - 1, from.col};
    case 2: return {from.row + 1, from.col};
    case 3: return {from.row, from.col - 1};
    case 4: return {from.row, from.col + 1};
    default: return from;
  }
}

bool GridWorld::action_available(std::size_t agent, Cell at, int action) const {
  if (action == kStay) return true;
  if (action < 0 || action >= static_cast<int>(kActions)) return false;
  if (parked(agent, at)) return false;
  const Cell to = move(at, action);
  return to.row >= 0 && to.col >= 0 && to.row < config_.grid_size && to.col < config_.grid_size;
}

std::vector<Cell> GridWorld::spawn_candidates(std::size_t agent) const {
  std::vector<Cell> cells;
  const Cell g = config_.goals[agent];
  const int r = config_.view_radius;
  for (int row = g.row - r; row <= g.row + r; ++row) {
    for (int col = g.col - r; col <= g.col + r; ++col) {
      if (row < 0 || col < 0 || row >= config_.grid_size || col >= config_.grid_size) continue;
      if (Cell{row, col} == g) continue;
      cells.push_back({row, col});
    }
  }
  return cells;
}

Timestep GridWorld::observe() const {
  Timestep ts;
  const double scale = static_cast<double>(config_.grid_size - 1);
  const double radius = static_cast<double>(config_.view_radius);
  ts.state.reserve(spec_.state_dim);
  ts.obs.reserve(spec_.n_agents * spec_.obs_dim);
  ts.avail.reserve(spec_.n_agents * kActions);
  for (std::size_t i = 0; i < spec_.n_agents; ++i) {
    const Cell p = positions_[i];
    const Cell g = config_.goals[i];
    ts.state.push_back(p.row / scale);
    ts.state.push_back(p.col / scale);
    const int dr = g.row - p.row;
    const int dc = g.col - p.col;
    const bool visible = std::abs(dr) <= config_.view_radius && std::abs(dc) <= config_.view_radius;
    ts.obs.push_back(p.row / scale);
    ts.obs.push_back(p.col / scale);
    ts.obs.push_back(visible ? dr / radius : 0.0);
    ts.obs.push_back(visible ? dc / radius : 0.0);
    ts.obs.push_back(visible ? 1.0 : 0.0);
    for (int a = 0; a < static_cast<int>(kActions); ++a) {
      ts.avail.push_back(action_available(i, p, a) ? 1 : 0);
    }
  }
  ts.state.push_back(static_cast<double>(t_) / static_cast<double>(config_.horizon));
  return ts;
}

Timestep GridWorld::reset(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x67726964ULL));
  positions_.assign(config_.n_agents, {});
  for (std::size_t i = 0; i < config_.n_agents; ++i) {
    if (!config_.fixed_spawn.empty()) {
      positions_[i] = config_.fixed_spawn[i];
    } else {
      const auto cells = spawn_candidates(i);
      positions_[i] = cells[rng.index(cells.size())];
    }
  }
  t_ = 0;
  done_ = false;
  success_ = false;
  return observe();
}

StepOutcome GridWorld::step(std::span<const int> joint_action) {
  if (done_) throw ContractError("gridworld: step after episode end; call reset");
  {
    std::vector<std::uint8_t> avail;
    avail.reserve(spec_.n_agents * kActions);
    for (std::size_t i = 0; i < spec_.n_agents; ++i) {
      for (int a = 0; a < static_cast<int>(kActions); ++a) {
        avail.push_back(action_available(i, positions_[i], a) ? 1 : 0);
      }
    }
    check_joint_action(spec_, joint_action, avail);
  }
  for (std::size_t i = 0; i < spec_.n_agents; ++i) {
    positions_[i] = move(positions_[i], joint_action[i]);
  }
  ++t_;
  bool all_parked = true;
  for (std::size_t i = 0; i < spec_.n_agents; ++i) all_parked = all_parked && parked(i, positions_[i]);
  StepOutcome out;
  out.terminated = all_parked;
  out.reward = all_parked ? config_.goal_reward : -config_.step_penalty;
  out.truncated = !all_parked && t_ >= config_.horizon;
  success_ = all_parked;
  done_ = out.terminated || out.truncated;
  out.next = observe();
  return out;
}

// -------------------------------------------------------------- agent history

AgentHistory::AgentHistory(const DecPomdpSpec& spec, std::size_t window, bool append_agent_id)
    : n_agents_(spec.n_agents),
      obs_dim_(spec.obs_dim),
      action_dim_(spec.action_dim),
      window_(window),
      append_id_(append_agent_id) {
  if (window_ < 1) throw ConfigError("history window must be >= 1");
  frames_.assign(window_, std::vector<double>(n_agents_ * frame_width(), 0.0));
}

std::size_t AgentHistory::input_dim() const {
  return window_ * frame_width() + (append_id_ ? n_agents_ : 0);
}

void AgentHistory::reset(std::span<const double> obs) {
  if (obs.size() != n_agents_ * obs_dim_) throw ConfigError("AgentHistory: observation width mismatch");
  for (auto& f : frames_) std::fill(f.begin(), f.end(), 0.0);
  auto& newest = frames_[0];
  for (std::size_t i = 0; i < n_agents_; ++i) {
    std::copy_n(obs.begin() + i * obs_dim_, obs_dim_, newest.begin() + i * frame_width());
  }
}

void AgentHistory::advance(std::span<const int> joint_action, std::span<const double> next_obs) {
  if (next_obs.size() != n_agents_ * obs_dim_ || joint_action.size() != n_agents_) {
    throw ConfigError("AgentHistory: width mismatch");
  }
  std::rotate(frames_.rbegin(), frames_.rbegin() + 1, frames_.rend());
  auto& newest = frames_[0];
  std::fill(newest.begin(), newest.end(), 0.0);
  for (std::size_t i = 0; i < n_agents_; ++i) {
    double* dst = newest.data() + i * frame_width();
    std::copy_n(next_obs.begin() + i * obs_dim_, obs_dim_, dst);
    dst[obs_dim_ + static_cast<std::size_t>(joint_action[i])] = 1.0;
  }
}

void AgentHistory::encode(std::size_t agent, std::span<double> out) const {
  if (out.size() != input_dim()) throw ConfigError("AgentHistory::encode: output width mismatch");
  std::size_t k = 0;
  for (const auto& frame : frames_) {
    std::copy_n(frame.begin() + agent * frame_width(), frame_width(), out.begin() + k);
    k += frame_width();
  }
  if (append_id_) {
    std::fill(out.begin() + k, out.end(), 0.0);
    out[k + agent] = 1.0;
  }
}

void AgentHistory::encode_all(std::vector<double>& out) const {
  const std::size_t width = input_dim();
  const std::size_t base = out.size();
  out.resize(base + n_agents_ * width);
  for (std::size_t i = 0; i < n_agents_; ++i) {
    encode(i, std::span<double>(out).subspan(base + i * width, width));
  }
}

}  // namespace ovmse
