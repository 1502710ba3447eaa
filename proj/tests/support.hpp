#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "ovmse/episode.hpp"
#include "ovmse/learner.hpp"
#include "ovmse/replay.hpp"

namespace ovmse::testing {

// Episodes from a fixed random policy of `nets`, packed into one batch.
inline std::vector<EpisodePtr> random_episodes(Environment& env, const QmixNets& nets,
                                               std::size_t count, std::uint64_t seed,
                                               double eps = 1.0) {
  Explorer explorer{ExplorationMode::kIndependent, Schedule{eps, eps, 0}};
  Rng rng(seed);
  std::uint64_t step = 0;
  std::vector<EpisodePtr> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(std::make_shared<const EpisodeRecord>(run_episode(
        env, q_function(nets.agent), nets.shape(), explorer, mix_seed(seed, i), step, rng)));
  }
  return out;
}

inline Batch random_batch(Environment& env, const QmixNets& nets, std::size_t count,
                          std::uint64_t seed, double eps = 1.0) {
  return make_batch(random_episodes(env, nets, count, seed, eps), env.spec(), nets.shape());
}

struct Probe {
  ParamSet* params;
  std::size_t entry;
  std::size_t index;
};

// Random scalar coordinates spread over every entry of the given sets.
inline std::vector<Probe> random_probes(std::initializer_list<ParamSet*> sets, std::size_t count,
                                        Rng& rng) {
  std::vector<Probe> all;
  for (ParamSet* ps : sets) {
    for (std::size_t e = 0; e < ps->size(); ++e) all.push_back({ps, e, 0});
  }
  std::vector<Probe> out;
  for (std::size_t i = 0; i < count; ++i) {
    Probe p = all[i % all.size()];
    p.index = rng.index(p.params->entries()[p.entry].value.size());
    out.push_back(p);
  }
  return out;
}

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

// Central differences with step h against the gradient buffers, which must
// already hold the analytic gradient. Returns the worst relative error.
inline double worst_fd_error(const std::vector<Probe>& probes, const std::function<double()>& loss,
                             double h = 1e-5) {
  double worst = 0.0;
  for (const Probe& p : probes) {
    auto& entry = p.params->entries()[p.entry];
    const double analytic = entry.grad[p.index];
    const double saved = entry.value[p.index];
    entry.value[p.index] = saved + h;
    const double up = loss();
    entry.value[p.index] = saved - h;
    const double down = loss();
    entry.value[p.index] = saved;
    worst = std::max(worst, relative_error(analytic, (up - down) / (2.0 * h)));
  }
  return worst;
}

// Two-agent tabular networks for one-hot agent ids: agent i's action values
// are q[i], and the mixer reduces to Q_tot = q_0 + q_1 + bias as long as the
// sum stays positive.
inline void set_additive(QmixNets& nets, const std::vector<std::vector<double>>& q,
                         double bias) {
  const NetShape& s = nets.shape();
  ParamSet& a = nets.agent.params();
  for (auto& e : a.entries()) e.value.fill(0.0);
  const std::size_t id0 = s.agent_input_dim() - s.n_agents;
  for (std::size_t i = 0; i < s.n_agents; ++i) {
    a.value("agent.fc1.weight").at(id0 + i, i) = 1.0;
    for (std::size_t k = 0; k < s.action_dim; ++k) a.value("agent.fc2.weight").at(i, k) = q[i][k];
  }
  ParamSet& m = nets.mixer.params();
  for (auto& e : m.entries()) e.value.fill(0.0);
  m.value("mixer.hyper_w1.bias").fill(1.0);
  m.value("mixer.hyper_w2.bias").fill(1.0 / static_cast<double>(s.mixing_hidden_dim));
  m.value("mixer.value2.bias")[0] = bias;
}

// One-step matrix-game episode with the given joint action.
inline EpisodePtr matrix_episode(MatrixGame& game, std::vector<int> joint, std::uint64_t seed,
                                 std::vector<std::uint8_t> avail = {}) {
  auto ep = std::make_shared<EpisodeRecord>();
  ep->seed = seed;
  const Timestep ts = game.reset(seed);
  StepRecord s;
  s.state = ts.state;
  s.obs = ts.obs;
  s.avail = avail.empty() ? ts.avail : avail;
  s.action = joint;
  const StepOutcome out = game.step(joint);
  s.reward = out.reward;
  s.terminated = out.terminated;
  ep->steps.push_back(s);
  ep->final = out.next;
  ep->episode_return = out.reward;
  return ep;
}

inline void zero_grads(QmixNets& nets) {
  nets.agent.params().zero_grad();
  nets.mixer.params().zero_grad();
}

}  // namespace ovmse::testing
