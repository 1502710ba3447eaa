#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ovmse/checkpoint.hpp"
#include "ovmse/env.hpp"
#include "ovmse/param_set.hpp"

namespace ovmse {

struct NetShape {
  std::size_t n_agents = 2;
  std::size_t obs_dim = 1;
  std::size_t action_dim = 1;
  std::size_t state_dim = 1;
  std::size_t hidden_dim = 64;
  std::size_t mixing_hidden_dim = 32;
  std::size_t history_window = 1;
  bool append_agent_id = true;

  static NetShape for_env(const DecPomdpSpec& spec, std::size_t hidden_dim = 64,
                          std::size_t mixing_hidden_dim = 32, std::size_t history_window = 1,
                          bool append_agent_id = true);

  std::size_t agent_input_dim() const {
    return history_window * (obs_dim + action_dim) + (append_agent_id ? n_agents : 0);
  }
  // Throws ConfigError if this shape cannot drive the given environment.
  void check_compatible(const DecPomdpSpec& spec) const;

  bool operator==(const NetShape&) const = default;
};

// Per-agent action-value network shared by all agents:
// input -> dense(hidden) -> ELU -> dense(action_dim).
class AgentQNet {
 public:
  AgentQNet(const NetShape& shape, Rng& rng);

  // [rows x input_dim] -> [rows x action_dim]
  Tensor forward(const Tensor& inputs) const;
  Tensor forward(const Tensor& inputs, SequentialTape& tape) const;
  // Accumulates parameter gradients for the recorded forward pass.
  void backward(SequentialTape& tape, const Tensor& out_grad);

  const NetShape& shape() const { return shape_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 private:
  NetShape shape_;
  ParamSet params_;
};

// State-conditioned monotonic mixer. Hypernetworks map the global state to
// first-layer weights W1 [n_agents x hidden], bias b1, second-layer weights
// W2 [hidden] and a state-value bias V(s). Weights pass through |.|, so
//   Q_tot = ELU(q . |W1| + b1) . |W2| + V(s)
// is nondecreasing in every agent value.
class MixingNet {
 public:
  struct Tape {
    Tensor qs;
    Tensor states;
    Tensor hyper_w1;  // raw, before |.|
    Tensor hyper_b1;
    Tensor hyper_w2;
    Tensor pre;  // hidden pre-activation
    Tensor hidden;
    SequentialTape value_path;
    bool recorded = false;
  };

  MixingNet(const NetShape& shape, Rng& rng);

  // qs [rows x n_agents], states [rows x state_dim] -> Q_tot per row.
  std::vector<double> forward(const Tensor& qs, const Tensor& states) const;
  std::vector<double> forward(const Tensor& qs, const Tensor& states, Tape& tape) const;
  // Accumulates parameter gradients and returns dL/dqs [rows x n_agents].
  Tensor backward(Tape& tape, std::span<const double> qtot_grad);

  double forward_one(std::span<const double> qs, std::span<const double> state) const;

  const NetShape& shape() const { return shape_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 private:
  NetShape shape_;
  ParamSet params_;
};

// Agent network plus mixer: the full factored Q_tot.
struct QmixNets {
  AgentQNet agent;
  MixingNet mixer;

  QmixNets(const NetShape& shape, Rng& rng);
  const NetShape& shape() const { return agent.shape(); }
  bool values_equal(const QmixNets& other) const;
  void copy_values_from(const QmixNets& other);
};

// Live networks plus a hard-synced target copy.
struct TargetPair {
  QmixNets live;
  QmixNets target;
  std::size_t sync_interval = 200;

  TargetPair(QmixNets nets, std::size_t sync_interval);
  // target <- live, bit-exact.
  void sync() { target.copy_values_from(live); }
};

// Per-agent argmax over available actions; ties go to the lowest index.
// q is [n_agents x action_dim], avail is flat [n_agents * action_dim].
std::vector<int> greedy_actions(const Tensor& q, std::span<const std::uint8_t> avail);
int greedy_action(std::span<const double> q, std::span<const std::uint8_t> avail);

// Checkpoint helpers. The manifest meta keys make a checkpoint self-describing.
void add_net_manifest(Checkpoint& ckpt, const NetShape& shape);
NetShape read_net_manifest(const Checkpoint& ckpt);
void save_nets(Checkpoint& ckpt, const QmixNets& nets, const std::string& prefix);
// Builds networks from the manifest and loads "<prefix>" tensors into them.
QmixNets load_nets(const Checkpoint& ckpt, const std::string& prefix);

}  // namespace ovmse
