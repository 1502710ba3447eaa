#include "ovmse/networks.hpp"

#include <cmath>

#include "ovmse/errors.hpp"

namespace ovmse {

NetShape NetShape::for_env(const DecPomdpSpec& spec, std::size_t hidden_dim,
                           std::size_t mixing_hidden_dim, std::size_t history_window,
                           bool append_agent_id) {
  NetShape s;
  s.n_agents = spec.n_agents;
  s.obs_dim = spec.obs_dim;
  s.action_dim = spec.action_dim;
  s.state_dim = spec.state_dim;
  s.hidden_dim = hidden_dim;
  s.mixing_hidden_dim = mixing_hidden_dim;
  s.history_window = history_window;
  s.append_agent_id = append_agent_id;
  return s;
}

void NetShape::check_compatible(const DecPomdpSpec& spec) const {
  if (n_agents != spec.n_agents || obs_dim != spec.obs_dim || action_dim != spec.action_dim ||
      state_dim != spec.state_dim) {
    throw ConfigError("network dimensions do not match the environment (agents " +
                      std::to_string(n_agents) + "/" + std::to_string(spec.n_agents) + ", obs " +
                      std::to_string(obs_dim) + "/" + std::to_string(spec.obs_dim) +
                      ", actions " + std::to_string(action_dim) + "/" +
                      std::to_string(spec.action_dim) + ", state " + std::to_string(state_dim) +
                      "/" + std::to_string(spec.state_dim) + ")");
  }
}

// ------------------------------------------------------------------ agent net

AgentQNet::AgentQNet(const NetShape& shape, Rng& rng) : shape_(shape) {
  if (shape_.hidden_dim == 0 || shape_.history_window == 0) {
    throw ConfigError("agent network: hidden_dim and history_window must be positive");
  }
  add_dense_params(params_, "agent.fc1", shape_.agent_input_dim(), shape_.hidden_dim, rng);
  add_dense_params(params_, "agent.fc2", shape_.hidden_dim, shape_.action_dim, rng);
}

Tensor AgentQNet::forward(const Tensor& inputs) const {
  SequentialTape tape;
  return forward(inputs, tape);
}

Tensor AgentQNet::forward(const Tensor& inputs, SequentialTape& tape) const {
  if (inputs.cols() != shape_.agent_input_dim()) {
    throw ConfigError("agent network: input width " + std::to_string(inputs.cols()) +
                      " != expected " + std::to_string(shape_.agent_input_dim()));
  }
  tape.clear();
  Tensor h = tape.dense(params_, "agent.fc1", inputs);
  h = tape.elu(h);
  return tape.dense(params_, "agent.fc2", h);
}

void AgentQNet::backward(SequentialTape& tape, const Tensor& out_grad) {
  tape.backward(out_grad, params_, false);
}

// ---------------------------------------------------------------------- mixer

MixingNet::MixingNet(const NetShape& shape, Rng& rng) : shape_(shape) {
  const std::size_t sd = shape_.state_dim;
  const std::size_t mh = shape_.mixing_hidden_dim;
  if (mh == 0) throw ConfigError("mixer: mixing_hidden_dim must be positive");
  add_dense_params(params_, "mixer.hyper_w1", sd, shape_.n_agents * mh, rng);
  add_dense_params(params_, "mixer.hyper_b1", sd, mh, rng);
  add_dense_params(params_, "mixer.hyper_w2", sd, mh, rng);
  add_dense_params(params_, "mixer.value1", sd, mh, rng);
  add_dense_params(params_, "mixer.value2", mh, 1, rng);
}

std::vector<double> MixingNet::forward(const Tensor& qs, const Tensor& states) const {
  Tape tape;
  return forward(qs, states, tape);
}

std::vector<double> MixingNet::forward(const Tensor& qs, const Tensor& states, Tape& tape) const {
  const std::size_t n = shape_.n_agents;
  const std::size_t mh = shape_.mixing_hidden_dim;
  const std::size_t rows = qs.rows();
  if (qs.cols() != n || states.rows() != rows || states.cols() != shape_.state_dim) {
    throw ConfigError("mixer: expected qs [rows x " + std::to_string(n) + "] and states [rows x " +
                      std::to_string(shape_.state_dim) + "], got " + qs.shape_string() + " and " +
                      states.shape_string());
  }
  auto dense = [&](const char* name, const Tensor& x) {
    const std::string p = std::string("mixer.") + name;
    return linear_forward(x, params_.value(p + ".weight"), params_.value(p + ".bias"));
  };
  tape.qs = qs;
  tape.states = states;
  tape.hyper_w1 = dense("hyper_w1", states);
  tape.hyper_b1 = dense("hyper_b1", states);
  tape.hyper_w2 = dense("hyper_w2", states);
  tape.value_path.clear();
  Tensor v = tape.value_path.dense(params_, "mixer.value1", states);
  v = tape.value_path.elu(v);
  v = tape.value_path.dense(params_, "mixer.value2", v);

  tape.pre = Tensor({rows, mh});
  tape.hidden = Tensor({rows, mh});
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* w1 = tape.hyper_w1.row(r).data();
    const double* b1 = tape.hyper_b1.row(r).data();
    const double* w2 = tape.hyper_w2.row(r).data();
    const double* q = qs.row(r).data();
    double* pre = tape.pre.row(r).data();
    double* hid = tape.hidden.row(r).data();
    for (std::size_t j = 0; j < mh; ++j) pre[j] = b1[j];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < mh; ++j) pre[j] += q[i] * std::abs(w1[i * mh + j]);
    }
    double total = v[r];
    for (std::size_t j = 0; j < mh; ++j) {
      hid[j] = elu(pre[j]);
      total += hid[j] * std::abs(w2[j]);
    }
    out[r] = total;
  }
  tape.recorded = true;
  return out;
}

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

Tensor MixingNet::backward(Tape& tape, std::span<const double> qtot_grad) {
  if (!tape.recorded) throw UsageError("mixer backward called without a recorded forward pass");
  const std::size_t n = shape_.n_agents;
  const std::size_t mh = shape_.mixing_hidden_dim;
  const std::size_t rows = tape.qs.rows();
  if (qtot_grad.size() != rows) throw ConfigError("mixer backward: gradient length mismatch");

  Tensor d_w1({rows, n * mh});
  Tensor d_b1({rows, mh});
  Tensor d_w2({rows, mh});
  Tensor d_v({rows, 1});
  Tensor d_qs({rows, n});
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = qtot_grad[r];
    d_v.at(r, 0) = g;
    if (g == 0.0) continue;
    const double* w1 = tape.hyper_w1.row(r).data();
    const double* w2 = tape.hyper_w2.row(r).data();
    const double* pre = tape.pre.row(r).data();
    const double* hid = tape.hidden.row(r).data();
    const double* q = tape.qs.row(r).data();
    double* dw1 = d_w1.row(r).data();
    double* db1 = d_b1.row(r).data();
    double* dw2 = d_w2.row(r).data();
    double* dq = d_qs.row(r).data();
    for (std::size_t j = 0; j < mh; ++j) {
      dw2[j] = g * hid[j] * sign(w2[j]);
      db1[j] = g * std::abs(w2[j]) * elu_grad(pre[j]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < mh; ++j) {
        const double w = w1[i * mh + j];
        acc += std::abs(w) * db1[j];
        dw1[i * mh + j] = q[i] * db1[j] * sign(w);
      }
      dq[i] = acc;
    }
  }
  auto dense_back = [&](const char* name, const Tensor& grad) {
    const std::string p = std::string("mixer.") + name;
    const std::size_t wi = params_.index_of(p + ".weight");
    const std::size_t bi = params_.index_of(p + ".bias");
    linear_backward(tape.states, params_.value(wi), grad, params_.grad(wi), params_.grad(bi), false);
  };
  dense_back("hyper_w1", d_w1);
  dense_back("hyper_b1", d_b1);
  dense_back("hyper_w2", d_w2);
  tape.value_path.backward(d_v, params_, false);
  tape.recorded = false;
  return d_qs;
}

double MixingNet::forward_one(std::span<const double> qs, std::span<const double> state) const {
  Tensor q({1, qs.size()}, std::vector<double>(qs.begin(), qs.end()));
  Tensor s({1, state.size()}, std::vector<double>(state.begin(), state.end()));
  return forward(q, s)[0];
}

// ---------------------------------------------------------------- containers

QmixNets::QmixNets(const NetShape& shape, Rng& rng) : agent(shape, rng), mixer(shape, rng) {}

bool QmixNets::values_equal(const QmixNets& other) const {
  return agent.params().values_equal(other.agent.params()) &&
         mixer.params().values_equal(other.mixer.params());
}

void QmixNets::copy_values_from(const QmixNets& other) {
  if (!(shape() == other.shape())) throw ConfigError("network architecture mismatch");
  agent.params().copy_values_from(other.agent.params());
  mixer.params().copy_values_from(other.mixer.params());
}

TargetPair::TargetPair(QmixNets nets, std::size_t interval)
    : live(nets), target(std::move(nets)), sync_interval(interval) {
  if (sync_interval == 0) throw ConfigError("target sync interval must be >= 1");
}

int greedy_action(std::span<const double> q, std::span<const std::uint8_t> avail) {
  int best = -1;
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (!avail[a]) continue;
    if (best < 0 || q[a] > q[static_cast<std::size_t>(best)]) best = static_cast<int>(a);
  }
  if (best < 0) throw ContractError("greedy action requested with an empty availability mask");
  return best;
}

std::vector<int> greedy_actions(const Tensor& q, std::span<const std::uint8_t> avail) {
  const std::size_t n = q.rows();
  const std::size_t a = q.cols();
  if (avail.size() != n * a) throw ConfigError("greedy_actions: mask size mismatch");
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = greedy_action(q.row(i), avail.subspan(i * a, a));
  return out;
}

// ---------------------------------------------------------------- persistence

void add_net_manifest(Checkpoint& ckpt, const NetShape& s) {
  ckpt.meta["arch.n_agents"] = std::to_string(s.n_agents);
  ckpt.meta["arch.obs_dim"] = std::to_string(s.obs_dim);
  ckpt.meta["arch.action_dim"] = std::to_string(s.action_dim);
  ckpt.meta["arch.state_dim"] = std::to_string(s.state_dim);
  ckpt.meta["arch.hidden_dim"] = std::to_string(s.hidden_dim);
  ckpt.meta["arch.mixing_hidden_dim"] = std::to_string(s.mixing_hidden_dim);
  ckpt.meta["arch.history_window"] = std::to_string(s.history_window);
  ckpt.meta["arch.agent_id"] = s.append_agent_id ? "1" : "0";
}

NetShape read_net_manifest(const Checkpoint& ckpt) {
  auto get = [&](const std::string& key) -> std::size_t {
    try {
      return std::stoul(ckpt.meta_value(key));
    } catch (const std::invalid_argument&) {
      throw ArtifactError("checkpoint: bad value for " + key);
    }
  };
  NetShape s;
  s.n_agents = get("arch.n_agents");
  s.obs_dim = get("arch.obs_dim");
  s.action_dim = get("arch.action_dim");
  s.state_dim = get("arch.state_dim");
  s.hidden_dim = get("arch.hidden_dim");
  s.mixing_hidden_dim = get("arch.mixing_hidden_dim");
  s.history_window = get("arch.history_window");
  s.append_agent_id = get("arch.agent_id") != 0;
  return s;
}

void save_nets(Checkpoint& ckpt, const QmixNets& nets, const std::string& prefix) {
  add_param_values(ckpt, nets.agent.params(), prefix);
  add_param_values(ckpt, nets.mixer.params(), prefix);
}

QmixNets load_nets(const Checkpoint& ckpt, const std::string& prefix) {
  const NetShape shape = read_net_manifest(ckpt);
  Rng scratch(0);
  QmixNets nets(shape, scratch);
  load_param_values(ckpt, nets.agent.params(), prefix);
  load_param_values(ckpt, nets.mixer.params(), prefix);
  return nets;
}

}  // namespace ovmse
