#include "ovmse/learner.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ovmse/errors.hpp"

namespace ovmse {

MuMode parse_mu_mode(const std::string& name) {
  if (name == "uniform") return MuMode::kUniform;
  if (name == "policy-softmax") return MuMode::kPolicySoftmax;
  if (name == "uniform-exact") return MuMode::kUniformExact;
  throw ConfigError("unknown mu mode '" + name +
                    "' (expected uniform, policy-softmax or uniform-exact)");
}

std::string to_string(MuMode mode) {
  switch (mode) {
    case MuMode::kUniform: return "uniform";
    case MuMode::kPolicySoftmax: return "policy-softmax";
    case MuMode::kUniformExact: return "uniform-exact";
  }
  return "?";
}

namespace {

// Rows of per-agent values gathered at given joint actions, with the matching
// state rows, ready for one mixer pass.
struct MixInput {
  std::vector<double> qs;
  std::vector<double> states;
  std::vector<std::size_t> source_slot;  // slot each row came from
  std::vector<int> actions;              // [rows * n_agents]
  std::size_t rows = 0;
};

void push_row(MixInput& in, const Batch& b, const Tensor& q_all, std::size_t slot,
              std::span<const int> joint) {
  const std::size_t n = b.n_agents;
  for (std::size_t k = 0; k < n; ++k) {
    in.qs.push_back(q_all.at(slot * n + k, static_cast<std::size_t>(joint[k])));
  }
  const auto s = b.states.row(slot);
  in.states.insert(in.states.end(), s.begin(), s.end());
  in.source_slot.push_back(slot);
  in.actions.insert(in.actions.end(), joint.begin(), joint.end());
  ++in.rows;
}

MixInput gather_logged(const Batch& b, const Tensor& q_all) {
  MixInput in;
  const std::size_t n = b.n_agents;
  for (std::size_t i = 0; i < b.transitions(); ++i) {
    push_row(in, b, q_all, b.slot[i], std::span<const int>(b.actions).subspan(i * n, n));
  }
  return in;
}

Tensor as_tensor(std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return Tensor({rows, cols}, std::move(v));
}

void scatter_agent_grads(const Batch& b, const MixInput& in, const Tensor& d_qs, Tensor& d_all) {
  const std::size_t n = b.n_agents;
  for (std::size_t r = 0; r < in.rows; ++r) {
    const std::size_t slot = in.source_slot[r];
    for (std::size_t k = 0; k < n; ++k) {
      d_all.at(slot * n + k, static_cast<std::size_t>(in.actions[r * n + k])) += d_qs.at(r, k);
    }
  }
}

std::span<const std::uint8_t> agent_mask(const Batch& b, std::size_t slot, std::size_t agent) {
  return std::span<const std::uint8_t>(b.avail).subspan(
      (slot * b.n_agents + agent) * b.action_dim, b.action_dim);
}

int sample_uniform(std::span<const std::uint8_t> mask, Rng& rng) {
  std::size_t count = 0;
  for (auto m : mask) count += m ? 1 : 0;
  std::size_t pick = rng.index(count);
  for (std::size_t a = 0; a < mask.size(); ++a) {
    if (!mask[a]) continue;
    if (pick-- == 0) return static_cast<int>(a);
  }
  return -1;
}

int sample_softmax(std::span<const double> q, std::span<const std::uint8_t> mask, Rng& rng) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (mask[a]) top = std::max(top, q[a]);
  }
  double total = 0.0;
  std::vector<double> w(q.size(), 0.0);
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (mask[a]) total += (w[a] = std::exp(q[a] - top));
  }
  double u = rng.uniform() * total;
  int last = -1;
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (!mask[a]) continue;
    last = static_cast<int>(a);
    if (u < w[a]) return last;
    u -= w[a];
  }
  return last;
}

// Joint actions sampled from mu for every transition, one mixer row each;
// `group` maps each row to its transition.
MixInput gather_mu(const Batch& b, const Tensor& q_all, MuMode mu, std::size_t samples, Rng& rng,
                   std::vector<std::size_t>& group) {
  MixInput in;
  const std::size_t n = b.n_agents;
  std::vector<int> joint(n);
  for (std::size_t i = 0; i < b.transitions(); ++i) {
    const std::size_t s = b.slot[i];
    if (mu == MuMode::kUniformExact) {
      std::vector<std::vector<int>> choices(n);
      for (std::size_t k = 0; k < n; ++k) {
        const auto m = agent_mask(b, s, k);
        for (std::size_t a = 0; a < m.size(); ++a) {
          if (m[a]) choices[k].push_back(static_cast<int>(a));
        }
      }
      std::vector<std::size_t> idx(n, 0);
      while (true) {
        for (std::size_t k = 0; k < n; ++k) joint[k] = choices[k][idx[k]];
        push_row(in, b, q_all, s, joint);
        group.push_back(i);
        bool wrapped = true;
        for (std::size_t k = n; k-- > 0;) {
          if (++idx[k] < choices[k].size()) {
            wrapped = false;
            break;
          }
          idx[k] = 0;
        }
        if (wrapped) break;
      }
      continue;
    }
    for (std::size_t j = 0; j < samples; ++j) {
      for (std::size_t k = 0; k < n; ++k) {
        const auto m = agent_mask(b, s, k);
        joint[k] = mu == MuMode::kUniform ? sample_uniform(m, rng)
                                          : sample_softmax(q_all.row(s * n + k), m, rng);
      }
      push_row(in, b, q_all, s, joint);
      group.push_back(i);
    }
  }
  return in;
}

}  // namespace

std::vector<double> max_joint_values(const Batch& b, const QmixNets& nets) {
  const Tensor q_all = nets.agent.forward(b.agent_inputs);
  const std::size_t n = b.n_agents;
  Tensor q_max({b.slots, n});
  for (std::size_t s = 0; s < b.slots; ++s) {
    for (std::size_t k = 0; k < n; ++k) {
      const auto row = q_all.row(s * n + k);
      const int a = greedy_action(row, agent_mask(b, s, k));
      q_max.at(s, k) = row[static_cast<std::size_t>(a)];
    }
  }
  return nets.mixer.forward(q_max, b.states);
}

std::vector<double> logged_q_tot(const Batch& b, const QmixNets& nets) {
  const Tensor q_all = nets.agent.forward(b.agent_inputs);
  MixInput in = gather_logged(b, q_all);
  const std::size_t rows = in.rows;
  return nets.mixer.forward(as_tensor(in.qs, rows, b.n_agents),
                            as_tensor(in.states, rows, b.state_dim));
}

std::vector<double> td_targets(const Batch& b, const QmixNets& target, double gamma) {
  const std::vector<double> next = max_joint_values(b, target);
  std::vector<double> y(b.transitions());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = b.terminated[i] ? b.rewards[i] : b.rewards[i] + gamma * next[b.slot[i] + 1];
  }
  return y;
}

double ovm_target(double offline_value, double td_target) {
  return std::max(offline_value, td_target);
}

LossResult compute_objective(const Batch& b, QmixNets& live, const QmixNets& target,
                             const Objective& obj, Rng* cql_rng, bool accumulate,
                             bool evaluate_cql) {
  const std::size_t T = b.transitions();
  if (T == 0) throw UsageError("objective evaluated on an empty batch");
  const std::size_t n = b.n_agents;
  const bool memory = obj.offline_target != nullptr;
  if (memory && !(obj.lambda >= 0.0 && obj.lambda <= 1.0)) {
    throw std::logic_error("memory coefficient outside [0, 1]: " + std::to_string(obj.lambda));
  }
  const bool want_cql = obj.cql_weight > 0.0 || evaluate_cql;
  if (want_cql && cql_rng == nullptr && obj.mu != MuMode::kUniformExact) {
    throw UsageError("CQL term requested without a random stream");
  }

  LossResult r;
  SequentialTape agent_tape;
  const Tensor q_all = live.agent.forward(b.agent_inputs, agent_tape);
  MixInput logged = gather_logged(b, q_all);
  MixingNet::Tape mix_tape;
  {
    std::vector<double> qs = logged.qs;
    std::vector<double> st = logged.states;
    r.q_tot = live.mixer.forward(as_tensor(qs, T, n), as_tensor(st, T, b.state_dim), mix_tape);
  }
  r.td_target = td_targets(b, target, obj.gamma);
  if (memory) {
    r.offline_value = logged_q_tot(b, *obj.offline_target);
    r.ovm_target.resize(T);
  }

  const double inv_t = 1.0 / static_cast<double>(T);
  std::vector<double> d_qtot(T, 0.0);
  double loss_sum = 0.0;
  double td_sum = 0.0;
  double q_sum = 0.0;
  std::size_t mem_wins = 0;
  const double lambda = obj.lambda;
  for (std::size_t i = 0; i < T; ++i) {
    const double q = r.q_tot[i];
    const double y = r.td_target[i];
    const double d = q - y;
    q_sum += q;
    td_sum += d * d;
    if (memory) {
      const double off = r.offline_value[i];
      const double ovm = ovm_target(off, y);
      r.ovm_target[i] = ovm;
      if (off > y) ++mem_wins;
      if (!(ovm >= off && ovm >= y && (ovm == off || ovm == y))) ++r.ovm_law_violations;
      const double d_mem = q - ovm;
      loss_sum += (1.0 - lambda) * (d * d) + lambda * (d_mem * d_mem);
      d_qtot[i] = (2.0 * (1.0 - lambda) * d + 2.0 * lambda * d_mem) / static_cast<double>(T);
    } else {
      loss_sum += d * d;
      d_qtot[i] = 2.0 * d / static_cast<double>(T);
    }
  }
  r.td = td_sum * inv_t;
  r.q_mean = q_sum * inv_t;
  r.mem_branch_fraction = memory ? static_cast<double>(mem_wins) * inv_t : 0.0;
  r.loss = loss_sum / static_cast<double>(T);

  MixingNet::Tape cql_tape;
  MixInput mu_rows;
  std::vector<std::size_t> group;
  std::vector<double> d_mu;
  if (want_cql) {
    mu_rows = gather_mu(b, q_all, obj.mu, obj.mu_samples, *cql_rng, group);
    std::vector<double> qs = mu_rows.qs;
    std::vector<double> st = mu_rows.states;
    const std::vector<double> mu_q = live.mixer.forward(
        as_tensor(qs, mu_rows.rows, n), as_tensor(st, mu_rows.rows, b.state_dim), cql_tape);
    std::vector<double> mu_sum(T, 0.0);
    std::vector<std::size_t> mu_count(T, 0);
    for (std::size_t row = 0; row < mu_rows.rows; ++row) {
      mu_sum[group[row]] += mu_q[row];
      ++mu_count[group[row]];
    }
    double penalty = 0.0;
    for (std::size_t i = 0; i < T; ++i) {
      penalty += mu_sum[i] / static_cast<double>(mu_count[i]) - r.q_tot[i];
    }
    r.cql = penalty * inv_t;
    if (obj.cql_weight > 0.0) {
      r.loss += obj.cql_weight * r.cql;
      d_mu.resize(mu_rows.rows);
      for (std::size_t row = 0; row < mu_rows.rows; ++row) {
        d_mu[row] = obj.cql_weight * inv_t / static_cast<double>(mu_count[group[row]]);
      }
      for (std::size_t i = 0; i < T; ++i) d_qtot[i] -= obj.cql_weight * inv_t;
    }
  }

  if (!std::isfinite(r.loss)) {
    std::ostringstream msg;
    msg << "non-finite loss on batch of " << b.episodes << " episodes / " << T
        << " transitions (td=" << r.td << ", cql=" << r.cql << ", q_mean=" << r.q_mean << ")";
    throw NumericalError(msg.str());
  }

  if (accumulate) {
    Tensor d_all({q_all.rows(), q_all.cols()});
    const Tensor d_logged = live.mixer.backward(mix_tape, d_qtot);
    scatter_agent_grads(b, logged, d_logged, d_all);
    if (!d_mu.empty()) {
      const Tensor d_sampled = live.mixer.backward(cql_tape, d_mu);
      scatter_agent_grads(b, mu_rows, d_sampled, d_all);
    }
    live.agent.backward(agent_tape, d_all);
  }
  return r;
}

LossResult td_loss(const Batch& batch, QmixNets& live, const QmixNets& target, double gamma,
                   bool accumulate) {
  Objective obj;
  obj.gamma = gamma;
  return compute_objective(batch, live, target, obj, nullptr, accumulate);
}

LossResult cql_penalty(const Batch& batch, QmixNets& live, MuMode mu, std::size_t samples,
                       Rng& rng, bool accumulate) {
  // Penalty alone, no TD term.
  const std::size_t T = batch.transitions();
  if (T == 0) throw UsageError("cql_penalty on an empty batch");
  const std::size_t n = batch.n_agents;
  SequentialTape agent_tape;
  const Tensor q_all = live.agent.forward(batch.agent_inputs, agent_tape);
  MixInput logged = gather_logged(batch, q_all);
  MixingNet::Tape data_tape;
  std::vector<double> qs = logged.qs;
  std::vector<double> st = logged.states;
  const std::vector<double> data_q =
      live.mixer.forward(as_tensor(qs, T, n), as_tensor(st, T, batch.state_dim), data_tape);

  std::vector<std::size_t> group;
  MixInput mu_rows = gather_mu(batch, q_all, mu, samples, rng, group);
  MixingNet::Tape mu_tape;
  std::vector<double> mqs = mu_rows.qs;
  std::vector<double> mst = mu_rows.states;
  const std::vector<double> mu_q = live.mixer.forward(
      as_tensor(mqs, mu_rows.rows, n), as_tensor(mst, mu_rows.rows, batch.state_dim), mu_tape);

  std::vector<double> mu_sum(T, 0.0);
  std::vector<std::size_t> mu_count(T, 0);
  for (std::size_t row = 0; row < mu_rows.rows; ++row) {
    mu_sum[group[row]] += mu_q[row];
    ++mu_count[group[row]];
  }
  const double inv_t = 1.0 / static_cast<double>(T);
  LossResult r;
  r.q_tot = data_q;
  double penalty = 0.0;
  double q_sum = 0.0;
  for (std::size_t i = 0; i < T; ++i) {
    penalty += mu_sum[i] / static_cast<double>(mu_count[i]) - data_q[i];
    q_sum += data_q[i];
  }
  r.cql = penalty * inv_t;
  r.loss = r.cql;
  r.q_mean = q_sum * inv_t;
  if (accumulate) {
    std::vector<double> d_data(T, -inv_t);
    std::vector<double> d_mu(mu_rows.rows);
    for (std::size_t row = 0; row < mu_rows.rows; ++row) {
      d_mu[row] = inv_t / static_cast<double>(mu_count[group[row]]);
    }
    Tensor d_all({q_all.rows(), q_all.cols()});
    scatter_agent_grads(batch, logged, live.mixer.backward(data_tape, d_data), d_all);
    scatter_agent_grads(batch, mu_rows, live.mixer.backward(mu_tape, d_mu), d_all);
    live.agent.backward(agent_tape, d_all);
  }
  return r;
}

LossResult ovm_loss(const Batch& batch, QmixNets& live, const QmixNets& target,
                    const QmixNets& offline_target, double lambda, double gamma,
                    bool accumulate) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::logic_error("memory coefficient outside [0, 1]: " + std::to_string(lambda));
  }
  Objective obj;
  obj.gamma = gamma;
  obj.lambda = lambda;
  obj.offline_target = &offline_target;
  return compute_objective(batch, live, target, obj, nullptr, accumulate);
}

// ------------------------------------------------------------------- learners

namespace {

void apply_step(QmixNets& live, AdamOptimizer& opt, double clip) {
  clip_grad_norm({&live.agent.params(), &live.mixer.params()}, clip);
  opt.step(live.agent.params());
  opt.step(live.mixer.params());
}

}  // namespace

OfflineLearner::OfflineLearner(QmixNets init, OfflineConfig config, LearnerSettings settings,
                               std::uint64_t seed)
    : config_(config),
      settings_(settings),
      nets_(std::move(init), settings.target_sync_interval),
      optimizer_(settings.adam),
      cql_rng_(mix_seed(seed, 0xc91ULL)) {
  if (config_.cql_alpha < 0.0) throw ConfigError("CQL weight alpha must be >= 0");
  if (config_.mu_samples == 0) throw ConfigError("mu sample count must be >= 1");
}

OfflineMetrics OfflineLearner::update(const Batch& batch) {
  Objective obj;
  obj.gamma = settings_.gamma;
  obj.cql_weight = config_.cql_alpha;
  obj.mu = config_.mu;
  obj.mu_samples = config_.mu_samples;
  const LossResult r =
      compute_objective(batch, nets_.live, nets_.target, obj, &cql_rng_, true, true);
  apply_step(nets_.live, optimizer_, settings_.grad_clip);
  ++updates_;
  if (updates_ % nets_.sync_interval == 0) nets_.sync();
  return {updates_, r.loss, r.td, r.cql, r.q_mean};
}

OnlineLearner::OnlineLearner(QmixNets live, QmixNets target,
                             std::optional<QmixNets> offline_target, OnlineConfig config,
                             LearnerSettings settings, std::uint64_t seed)
    : config_(config),
      settings_(settings),
      nets_(std::move(live), settings.target_sync_interval),
      offline_target_(std::move(offline_target)),
      optimizer_(settings.adam),
      cql_rng_(mix_seed(seed, 0xc92ULL)) {
  nets_.target.copy_values_from(target);
  if (config_.use_memory) {
    if (!offline_target_) throw ConfigError("OVM fine-tuning needs the offline target networks");
    if (!(offline_target_->shape() == nets_.live.shape())) {
      throw ConfigError("offline target architecture does not match the live networks");
    }
  }
  if (!(config_.lambda_end >= 0.0 && config_.lambda_end <= 1.0)) {
    throw ConfigError("lambda_end must lie in [0, 1]");
  }
}

double OnlineLearner::lambda_at(std::uint64_t env_step) const {
  if (!config_.use_memory) return 0.0;
  return lambda_schedule_value(env_step, config_.lambda_end, config_.lambda_anneal_steps,
                               config_.literal_min);
}

OnlineMetrics OnlineLearner::update(const Batch& batch, std::uint64_t env_step) {
  Objective obj;
  obj.gamma = settings_.gamma;
  obj.lambda = lambda_at(env_step);
  obj.offline_target = config_.use_memory ? &*offline_target_ : nullptr;
  obj.cql_weight = config_.use_cql ? config_.cql_alpha : 0.0;
  obj.mu = config_.mu;
  obj.mu_samples = config_.mu_samples;
  const LossResult r = compute_objective(batch, nets_.live, nets_.target, obj, &cql_rng_, true);
  apply_step(nets_.live, optimizer_, settings_.grad_clip);
  ++updates_;
  if (updates_ % nets_.sync_interval == 0) nets_.sync();
  OnlineMetrics m;
  m.update = updates_;
  m.env_step = env_step;
  m.loss = r.loss;
  m.lambda = obj.lambda;
  m.q_mean = r.q_mean;
  m.mem_branch_fraction = r.mem_branch_fraction;
  m.ovm_law_violations = r.ovm_law_violations;
  m.transitions = batch.transitions();
  return m;
}

}  // namespace ovmse
