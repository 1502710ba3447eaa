#include "ovmse/episode.hpp"

#include <cmath>

#include "ovmse/errors.hpp"

namespace ovmse {

void EpisodeRecord::validate(const DecPomdpSpec& spec) const {
  if (steps.empty()) throw ArtifactError("episode has no steps");
  if (steps.size() > spec.horizon) throw ArtifactError("episode longer than the horizon");
  double total = 0.0;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const auto& s = steps[t];
    if (s.state.size() != spec.state_dim || s.obs.size() != spec.n_agents * spec.obs_dim ||
        s.avail.size() != spec.n_agents * spec.action_dim || s.action.size() != spec.n_agents) {
      throw ArtifactError("episode step " + std::to_string(t) + " has wrong dimensions");
    }
    for (std::size_t i = 0; i < spec.n_agents; ++i) {
      const int a = s.action[i];
      if (a < 0 || static_cast<std::size_t>(a) >= spec.action_dim ||
          !s.avail[i * spec.action_dim + static_cast<std::size_t>(a)]) {
        throw ArtifactError("episode step " + std::to_string(t) + " logs an unavailable action");
      }
    }
    if (!std::isfinite(s.reward)) throw ArtifactError("episode has a non-finite reward");
    const bool last = t + 1 == steps.size();
    if ((s.terminated || s.truncated) != last) {
      throw ArtifactError("only the final step may carry terminated/truncated");
    }
    total += s.reward;
  }
  if (final.state.size() != spec.state_dim || final.obs.size() != spec.n_agents * spec.obs_dim ||
      final.avail.size() != spec.n_agents * spec.action_dim) {
    throw ArtifactError("episode final observation has wrong dimensions");
  }
  if (total != episode_return) throw ArtifactError("episode_return is not the sum of rewards");
}

QFunction q_function(const AgentQNet& net) {
  return [&net](const Tensor& inputs) { return net.forward(inputs); };
}

EpisodeRecord run_episode(Environment& env, const QFunction& q, const NetShape& shape,
                          const Explorer& explorer, std::uint64_t episode_seed,
                          std::uint64_t& global_step, Rng& rng, RolloutTrace* trace) {
  const DecPomdpSpec& spec = env.spec();
  shape.check_compatible(spec);
  AgentHistory history(spec, shape.history_window, shape.append_agent_id);
  EpisodeRecord ep;
  ep.seed = episode_seed;
  Timestep now = env.reset(episode_seed);
  history.reset(now.obs);
  std::vector<double> inputs;
  for (std::size_t t = 0; t < spec.horizon; ++t) {
    check_masks(spec, now.avail);
    inputs.clear();
    history.encode_all(inputs);
    const Tensor values = q(Tensor({spec.n_agents, history.input_dim()}, inputs));
    const double eps = explorer.epsilon_at(global_step);
    ExploreInfo info;
    std::vector<int> action = explorer.select(values, now.avail, eps, rng, &info);
    if (trace) {
      trace->env_steps.push_back(global_step);
      trace->epsilons.push_back(eps);
      trace->explorers.push_back(info.explorers);
      trace->greedy.push_back(greedy_actions(values, now.avail));
      trace->chosen.push_back(action);
    }
    StepOutcome out = env.step(action);
    ++global_step;
    StepRecord rec;
    rec.state = std::move(now.state);
    rec.obs = std::move(now.obs);
    rec.avail = std::move(now.avail);
    rec.action = action;
    rec.reward = out.reward;
    rec.terminated = out.terminated;
    rec.truncated = out.truncated || (!out.terminated && t + 1 == spec.horizon);
    ep.episode_return += out.reward;
    const bool done = rec.terminated || rec.truncated;
    ep.steps.push_back(std::move(rec));
    history.advance(action, out.next.obs);
    now = std::move(out.next);
    if (done) break;
  }
  ep.final = std::move(now);
  ep.success = env.success();
  return ep;
}

EpisodeRecord run_greedy_episode(Environment& env, const QFunction& q, const NetShape& shape,
                                 std::uint64_t episode_seed) {
  Explorer greedy{ExplorationMode::kIndependent, Schedule{0.0, 0.0, 0}};
  std::uint64_t step = 0;
  Rng unused(0);
  return run_episode(env, q, shape, greedy, episode_seed, step, unused);
}

std::vector<double> encode_episode_inputs(const EpisodeRecord& ep, const DecPomdpSpec& spec,
                                          std::size_t window, bool append_agent_id) {
  AgentHistory history(spec, window, append_agent_id);
  std::vector<double> out;
  out.reserve((ep.steps.size() + 1) * spec.n_agents * history.input_dim());
  history.reset(ep.steps.front().obs);
  for (std::size_t t = 0; t < ep.steps.size(); ++t) {
    history.encode_all(out);
    const auto& next_obs = t + 1 < ep.steps.size() ? ep.steps[t + 1].obs : ep.final.obs;
    history.advance(ep.steps[t].action, next_obs);
  }
  history.encode_all(out);
  return out;
}

}  // namespace ovmse
