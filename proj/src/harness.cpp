#include "ovmse/harness.hpp"

#include <cmath>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ovmse/checkpoint.hpp"
#include "ovmse/errors.hpp"

namespace ovmse {

namespace {

// Independent random streams derived from the run seed.
constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kBatchStream = 0xba7c;
constexpr std::uint64_t kExploreStream = 0xe491;
constexpr std::uint64_t kEpisodeStream = 0xe915;
constexpr std::uint64_t kEvalStream = 0xe7a1;
constexpr std::uint64_t kProbeStream = 0x9b0b;
constexpr std::uint64_t kDatasetStream = 0xda7a;

constexpr int kMetricsFormatVersion = 1;

std::vector<Cell> parse_spawn(const std::string& text) {
  std::vector<Cell> cells;
  if (text == "random" || text.empty()) return cells;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ';')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("env.spawn: expected r:c, got '" + item + "'");
    try {
      cells.push_back({std::stoi(item.substr(0, colon)), std::stoi(item.substr(colon + 1))});
    } catch (const std::exception&) {
      throw ConfigError("env.spawn: expected r:c, got '" + item + "'");
    }
  }
  return cells;
}

std::size_t positive(const RunConfig& c, const std::string& key) {
  const std::uint64_t v = c.get_uint(key);
  if (v == 0) throw ConfigError("config key '" + key + "' must be >= 1");
  return static_cast<std::size_t>(v);
}

std::vector<std::pair<std::string, std::string>> env_params(const RunConfig& c) {
  std::vector<std::pair<std::string, std::string>> p;
  p.emplace_back("gamma", c.get("env.gamma"));
  if (c.get("env.name") == "gridworld") {
    for (const char* k : {"env.grid_size", "env.n_agents", "env.horizon", "env.view_radius",
                          "env.spawn"}) {
      p.emplace_back(std::string(k).substr(4), c.get(k));
    }
  } else {
    p.emplace_back("payoff", "fixture");
  }
  return p;
}

void write_manifest(const std::filesystem::path& dir, const RunConfig& config,
                    std::uint64_t seed, const std::string& phase,
                    const std::map<std::string, std::string>& hashes) {
  nlohmann::ordered_json m;
  m["phase"] = phase;
  m["seed"] = seed;
  m["task"] = task_key(config);
  m["format_versions"] = {{"checkpoint", kCheckpointVersion},
                          {"dataset", kDatasetFormatVersion},
                          {"metrics", kMetricsFormatVersion}};
  nlohmann::ordered_json h = nlohmann::ordered_json::object();
  for (const auto& [k, v] : hashes) h[k] = v;
  m["checkpoint_hashes"] = h;
  write_file_bytes(dir / "manifest.json", m.dump(2) + "\n");
}

EvalResult eval_nets(Environment& env, const QmixNets& nets, std::size_t n, std::uint64_t seed) {
  auto probe = env.clone();
  return evaluate(*probe, q_function(nets.agent), nets.shape(), n, seed);
}

}  // namespace

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
  }
  return out;
}

// ------------------------------------------------------------ task assembly

GridWorldConfig grid_config(const RunConfig& c) {
  GridWorldConfig g;
  g.grid_size = static_cast<int>(c.get_int("env.grid_size"));
  g.n_agents = positive(c, "env.n_agents");
  g.horizon = positive(c, "env.horizon");
  g.gamma = c.get_double("env.gamma");
  g.view_radius = static_cast<int>(c.get_int("env.view_radius"));
  g.fixed_spawn = parse_spawn(c.get("env.spawn"));
  return g;
}

std::unique_ptr<Environment> make_env(const RunConfig& c) {
  const std::string& name = c.get("env.name");
  if (name == "gridworld") return std::make_unique<GridWorld>(grid_config(c));
  if (name == "matrix") {
    return std::make_unique<MatrixGame>(MatrixGame::fixture_payoff(), c.get_double("env.gamma"));
  }
  throw ConfigError("env.name must be gridworld or matrix, got '" + name + "'");
}

NetShape net_shape(const RunConfig& c, const DecPomdpSpec& spec) {
  return NetShape::for_env(spec, positive(c, "net.hidden_dim"),
                           positive(c, "net.mixing_hidden_dim"),
                           positive(c, "net.history_window"), c.get_bool("net.agent_id"));
}

LearnerSettings learner_settings(const RunConfig& c) {
  LearnerSettings s;
  s.gamma = c.get_double("env.gamma");
  s.target_sync_interval = positive(c, "train.target_sync");
  s.adam.learning_rate = c.get_double("train.lr");
  s.grad_clip = c.get_double("train.grad_clip");
  return s;
}

OfflineConfig offline_config(const RunConfig& c) {
  OfflineConfig o;
  o.cql_alpha = c.get_double("offline.cql_alpha");
  o.mu = parse_mu_mode(c.get("offline.mu"));
  o.mu_samples = positive(c, "offline.mu_samples");
  return o;
}

OnlineConfig online_config(const RunConfig& c) {
  OnlineConfig o;
  o.use_memory = c.get_bool("online.use_memory");
  o.lambda_end = c.get_double("online.lambda_end");
  o.lambda_anneal_steps = c.is_auto("online.lambda_anneal_steps")
                              ? c.get_uint("online.total_steps") / 2
                              : c.get_uint("online.lambda_anneal_steps");
  o.literal_min = c.get_bool("online.lambda_literal_min");
  o.use_cql = c.get_bool("online.use_cql");
  o.cql_alpha = c.get_double("online.cql_alpha");
  o.mu = parse_mu_mode(c.get("offline.mu"));
  o.mu_samples = positive(c, "offline.mu_samples");
  return o;
}

Explorer online_explorer(const RunConfig& c) {
  Explorer e;
  e.mode = parse_exploration_mode(c.get("explore.mode"));
  e.epsilon.start = c.is_auto("explore.eps_start")
                        ? (c.get_bool("online.from_scratch") ? 1.0 : 0.3)
                        : c.get_double("explore.eps_start");
  e.epsilon.end = c.get_double("explore.eps_end");
  e.epsilon.duration = c.is_auto("explore.anneal_steps") ? c.get_uint("online.total_steps") / 5
                                                         : c.get_uint("explore.anneal_steps");
  e.epsilon.literal_min = c.get_bool("explore.literal_min");
  for (double v : {e.epsilon.start, e.epsilon.end}) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("epsilon values must lie in [0, 1]");
  }
  return e;
}

std::string task_key(const RunConfig& c) {
  if (c.get("env.name") == "gridworld") return gridworld_task_key(grid_config(c));
  return matrix_task_key(MatrixGame::fixture_payoff(), c.get_double("env.gamma"));
}

ExactSolution oracle_solution(const RunConfig& c, const std::filesystem::path& cache_dir) {
  if (c.get("env.name") == "matrix") return solve_matrix_game(MatrixGame::fixture_payoff());
  const std::filesystem::path cache =
      c.get("oracle.cache").empty() ? cache_dir / "oracle.ckpt" : std::filesystem::path(c.get("oracle.cache"));
  return cached_gridworld_solution(grid_config(c), cache);
}

// --------------------------------------------------------------- evaluation

double discounted_return(const EpisodeRecord& ep, double gamma) {
  double total = 0.0;
  double disc = 1.0;
  for (const auto& s : ep.steps) {
    total += disc * s.reward;
    disc *= gamma;
  }
  return total;
}

EvalResult evaluate(Environment& env, const QFunction& q, const NetShape& shape,
                    std::size_t n_episodes, std::uint64_t seed) {
  if (n_episodes == 0) throw UsageError("evaluate: n_episodes must be >= 1");
  EvalResult r;
  r.episodes = n_episodes;
  std::vector<double> returns;
  returns.reserve(n_episodes);
  std::size_t wins = 0;
  double disc_sum = 0.0;
  for (std::size_t j = 0; j < n_episodes; ++j) {
    const EpisodeRecord ep = run_greedy_episode(env, q, shape, mix_seed(seed, j));
    returns.push_back(ep.episode_return);
    disc_sum += discounted_return(ep, env.spec().gamma);
    wins += ep.success ? 1 : 0;
  }
  double sum = 0.0;
  for (double v : returns) sum += v;
  r.mean_return = sum / static_cast<double>(n_episodes);
  double var = 0.0;
  for (double v : returns) var += (v - r.mean_return) * (v - r.mean_return);
  r.std_return = std::sqrt(var / static_cast<double>(n_episodes));
  r.mean_discounted_return = disc_sum / static_cast<double>(n_episodes);
  r.success_rate = static_cast<double>(wins) / static_cast<double>(n_episodes);
  return r;
}

EvalResult evaluate_checkpoint(const RunConfig& config, const std::filesystem::path& policy,
                               std::size_t n_episodes, std::uint64_t seed) {
  auto env = make_env(config);
  const QmixNets nets = load_policy_checkpoint(policy, config);
  return evaluate(*env, q_function(nets.agent), nets.shape(), n_episodes, seed);
}

// ------------------------------------------------------------ checkpoints

Checkpoint make_policy_checkpoint(const QmixNets& nets, const RunConfig& config,
                                  const std::string& kind) {
  Checkpoint ckpt;
  ckpt.meta["kind"] = kind;
  ckpt.meta["task"] = task_key(config);
  add_net_manifest(ckpt, nets.shape());
  save_nets(ckpt, nets, "");
  return ckpt;
}

QmixNets load_policy_checkpoint(const std::filesystem::path& path, const RunConfig& config) {
  QmixNets nets = load_nets(read_checkpoint(path), "");
  const auto env = make_env(config);
  nets.shape().check_compatible(env->spec());
  return nets;
}

OfflineArtifacts export_offline_artifacts(const TargetPair& nets, const RunConfig& config,
                                          const std::filesystem::path& out_dir) {
  OfflineArtifacts a;
  a.policy = out_dir / "policy.ckpt";
  a.offline_target = out_dir / "offline_target.ckpt";
  write_checkpoint(a.policy, make_policy_checkpoint(nets.live, config, "policy"));
  write_checkpoint(a.offline_target, make_policy_checkpoint(nets.target, config, "offline_target"));
  a.policy_hash = file_hash(a.policy);
  a.offline_target_hash = file_hash(a.offline_target);
  return a;
}

// --------------------------------------------------------------- datasets

Dataset collect_medium_dataset(Environment& env, const QmixNets& behavior, const NetShape& shape,
                               std::size_t n_episodes, double epsilon, std::uint64_t seed) {
  Explorer explorer{ExplorationMode::kIndependent, Schedule{epsilon, epsilon, 0}};
  Rng rng(mix_seed(seed, kDatasetStream));
  const std::uint64_t episode_base = mix_seed(seed, kDatasetStream + 1);
  Dataset ds;
  ds.meta.spec = env.spec();
  ds.meta.mode = "medium";
  ds.meta.seed = seed;
  std::uint64_t step = 0;
  const QFunction q = q_function(behavior.agent);
  for (std::size_t j = 0; j < n_episodes; ++j) {
    ds.episodes.push_back(std::make_shared<const EpisodeRecord>(
        run_episode(env, q, shape, explorer, mix_seed(episode_base, j), step, rng)));
  }
  return ds;
}

DatasetRun generate_dataset(const RunConfig& config, std::uint64_t seed,
                            const std::filesystem::path& out_dir) {
  const std::string mode = config.get("dataset.mode");
  if (mode != "medium" && mode != "medium-replay") {
    throw ConfigError("dataset.mode must be medium or medium-replay, got '" + mode + "'");
  }
  DatasetRun run;
  const ExactSolution oracle = oracle_solution(config, out_dir);
  run.oracle_return = oracle.optimal_return;
  const double threshold = config.get_double("dataset.medium_fraction") * oracle.optimal_return;

  RunConfig behavior_cfg = config;
  apply_algorithm_preset(behavior_cfg, "qmix");
  behavior_cfg.set("online.total_steps", config.get("dataset.behavior_steps"));
  behavior_cfg.set("eval.every", config.get("dataset.behavior_eval_every"));
  behavior_cfg.set("online.trace_schedule", "false");

  const auto behavior_dir = out_dir / "behavior";
  run.behavior_checkpoint = out_dir / "behavior.ckpt";
  OnlineHooks hooks;
  hooks.on_eval = [&](const MetricsRow& row, const EvalResult& e, const QmixNets& live) {
    if (row.step == 0 || e.mean_discounted_return < threshold) return false;
    write_checkpoint(run.behavior_checkpoint,
                     make_policy_checkpoint(live, behavior_cfg, "behavior"));
    run.threshold_reached = true;
    return true;
  };
  const OnlineResult behavior = run_online_phase(behavior_cfg, seed, behavior_dir, &hooks);
  run.behavior_env_steps = behavior.env_steps;
  if (!run.threshold_reached) {
    std::cerr << "warning: behaviour run never reached " << threshold
              << " discounted return; using its final policy\n";
    write_file_bytes(run.behavior_checkpoint, read_file_bytes(behavior_dir / "final.ckpt"));
  }

  auto env = make_env(config);
  Dataset ds;
  if (mode == "medium") {
    const QmixNets nets = load_policy_checkpoint(run.behavior_checkpoint, config);
    ds = collect_medium_dataset(*env, nets, nets.shape(), positive(config, "dataset.episodes"),
                                config.get_double("dataset.epsilon"), seed);
  } else {
    ds.episodes = behavior.buffer_contents;
  }
  ds.meta.env_name = config.get("env.name");
  ds.meta.env_params = env_params(config);
  ds.meta.spec = env->spec();
  ds.meta.mode = mode;
  ds.meta.behavior_checkpoint_hash = file_hash(run.behavior_checkpoint);
  ds.meta.behavior_mean_return = ds.mean_return();
  ds.meta.seed = seed;
  run.dataset_path = out_dir / "dataset.jsonl";
  save_dataset(run.dataset_path, ds);
  config.write_snapshot(out_dir);
  write_manifest(out_dir, config, seed, "gen-dataset",
                 {{"behavior.ckpt", ds.meta.behavior_checkpoint_hash},
                  {"dataset.jsonl", file_hash(run.dataset_path)}});
  run.dataset = std::move(ds);
  return run;
}

// ---------------------------------------------------------- offline phase

namespace {

Checkpoint offline_state(const OfflineLearner& learner, const Rng& batch_rng,
                         const RunConfig& config, double loss_sum, std::size_t loss_n) {
  Checkpoint st;
  st.meta["kind"] = "offline-state";
  st.meta["task"] = task_key(config);
  st.meta["updates"] = std::to_string(learner.updates());
  st.meta["agent_steps"] = std::to_string(learner.nets().live.agent.params().step_count);
  st.meta["mixer_steps"] = std::to_string(learner.nets().live.mixer.params().step_count);
  st.meta["batch_rng"] = batch_rng.save_state();
  st.meta["cql_rng"] = learner.cql_rng().save_state();
  add_net_manifest(st, learner.nets().live.shape());
  save_nets(st, learner.nets().live, "live.");
  save_nets(st, learner.nets().target, "target.");
  for (const auto& [name, m] : learner.optimizer().moments()) {
    st.add("adam.m." + name, m.first);
    st.add("adam.v." + name, m.second);
  }
  st.add("loss_accumulator",
         Tensor({2}, std::vector<double>{loss_sum, static_cast<double>(loss_n)}));
  return st;
}

void restore_offline_state(const Checkpoint& st, OfflineLearner& learner, Rng& batch_rng,
                           double& loss_sum, std::size_t& loss_n) {
  if (!st.meta.count("kind") || st.meta_value("kind") != "offline-state") {
    throw ArtifactError("resume file is not an offline state checkpoint");
  }
  const NetShape shape = read_net_manifest(st);
  if (!(shape == learner.nets().live.shape())) {
    throw ConfigError("resume checkpoint architecture does not match the configuration");
  }
  learner.nets().live.copy_values_from(load_nets(st, "live."));
  learner.nets().target.copy_values_from(load_nets(st, "target."));
  learner.nets().live.agent.params().step_count = std::stoull(st.meta_value("agent_steps"));
  learner.nets().live.mixer.params().step_count = std::stoull(st.meta_value("mixer_steps"));
  auto& moments = learner.optimizer().moments();
  moments.clear();
  for (const auto& [name, tensor] : st.tensors) {
    if (name.rfind("adam.m.", 0) == 0) moments[name.substr(7)].first = tensor;
    if (name.rfind("adam.v.", 0) == 0) moments[name.substr(7)].second = tensor;
  }
  batch_rng.load_state(st.meta_value("batch_rng"));
  learner.cql_rng().load_state(st.meta_value("cql_rng"));
  learner.set_updates(std::stoull(st.meta_value("updates")));
  const Tensor& acc = st.get("loss_accumulator");
  loss_sum = acc[0];
  loss_n = static_cast<std::size_t>(acc[1]);
}

Dataset load_task_dataset(const std::string& path, const DecPomdpSpec& spec, const char* key) {
  if (path.empty()) throw ArtifactError(std::string(key) + " is not set; no dataset to read");
  Dataset ds = load_dataset(path);
  if (!(ds.meta.spec == spec)) {
    throw ConfigError("dataset " + path + " was recorded for a different task");
  }
  if (ds.episodes.empty()) throw ArtifactError("dataset " + path + " has no episodes");
  return ds;
}

}  // namespace

OfflineResult run_offline_phase(const RunConfig& config, std::uint64_t seed,
                                const std::filesystem::path& out_dir) {
  auto env = make_env(config);
  const DecPomdpSpec& spec = env->spec();
  const Dataset dataset = load_task_dataset(config.get("offline.dataset"), spec, "offline.dataset");
  const NetShape shape = net_shape(config, spec);
  const std::size_t batch_size = positive(config, "train.batch_size");
  const std::uint64_t total = config.get_uint("offline.updates");
  const std::uint64_t log_every = positive(config, "offline.log_every");
  const std::uint64_t eval_every = positive(config, "offline.eval_every");
  const std::uint64_t ckpt_every = config.get_uint("offline.checkpoint_every");
  const std::size_t eval_episodes = positive(config, "eval.episodes");
  const std::uint64_t eval_seed = mix_seed(seed, kEvalStream);

  Rng init_rng(mix_seed(seed, kInitStream));
  OfflineLearner learner(QmixNets(shape, init_rng), offline_config(config),
                         learner_settings(config), seed);
  Rng batch_rng(mix_seed(seed, kBatchStream));
  double loss_sum = 0.0;
  std::size_t loss_n = 0;
  std::vector<MetricsRow> rows;
  config.write_snapshot(out_dir);

  const std::string resume = config.get("offline.resume_from");
  if (!resume.empty()) {
    restore_offline_state(read_checkpoint(resume), learner, batch_rng, loss_sum, loss_n);
    const auto existing = out_dir / "metrics.csv";
    if (std::filesystem::exists(existing)) {
      for (const auto& r : read_metrics(existing)) {
        if (r.step <= learner.updates()) rows.push_back(r);
      }
    }
  } else {
    MetricsRow r;
    r.step = 0;
    const EvalResult e = eval_nets(*env, learner.nets().live, eval_episodes, eval_seed);
    r.episode_return_mean = e.mean_return;
    r.success_rate = e.success_rate;
    rows.push_back(r);
  }

  OfflineResult result;
  result.dataset_mean_return = dataset.mean_return();
  std::vector<EpisodePtr> picked(batch_size);
  while (learner.updates() < total) {
    for (auto& p : picked) p = dataset.episodes[batch_rng.index(dataset.episodes.size())];
    const OfflineMetrics m = learner.update(make_batch(picked, spec, shape));
    loss_sum += m.loss;
    ++loss_n;
    const std::uint64_t u = m.update;
    const bool eval_now = u % eval_every == 0 || u == total;
    if (u % log_every == 0 || eval_now) {
      MetricsRow r;
      r.step = u;
      r.loss = loss_sum / static_cast<double>(loss_n);
      loss_sum = 0.0;
      loss_n = 0;
      if (eval_now) {
        const EvalResult e = eval_nets(*env, learner.nets().live, eval_episodes, eval_seed);
        r.episode_return_mean = e.mean_return;
        r.success_rate = e.success_rate;
      }
      rows.push_back(r);
    }
    if (ckpt_every > 0 && u % ckpt_every == 0) {
      write_checkpoint(out_dir / ("state_" + std::to_string(u) + ".ckpt"),
                       offline_state(learner, batch_rng, config, loss_sum, loss_n));
      write_metrics(out_dir / "metrics.csv", rows);
    }
  }
  write_metrics(out_dir / "metrics.csv", rows);
  result.artifacts = export_offline_artifacts(learner.nets(), config, out_dir);
  result.rows = rows;
  result.updates = learner.updates();
  result.final_eval = eval_nets(*env, learner.nets().live, eval_episodes, eval_seed);
  write_manifest(out_dir, config, seed, "pretrain",
                 {{"policy.ckpt", result.artifacts.policy_hash},
                  {"offline_target.ckpt", result.artifacts.offline_target_hash}});
  return result;
}

// ----------------------------------------------------------- online phase

ProbeBuffer collect_probe_buffer(Environment& env, const QmixNets& policy, const NetShape& shape,
                                 std::size_t n_episodes, std::uint64_t seed) {
  if (n_episodes == 0) throw UsageError("probe buffer needs at least one episode");
  ProbeBuffer probe;
  const QFunction q = q_function(policy.agent);
  for (std::size_t j = 0; j < n_episodes; ++j) {
    probe.episodes.push_back(
        std::make_shared<const EpisodeRecord>(run_greedy_episode(env, q, shape, mix_seed(seed, j))));
  }
  Dataset as_dataset;
  as_dataset.meta.spec = env.spec();
  as_dataset.meta.mode = "probe";
  as_dataset.episodes = probe.episodes;
  probe.hash = hex64(fnv1a64(encode_dataset(as_dataset)));
  probe.batch = make_batch(probe.episodes, env.spec(), shape);
  return probe;
}

double probe_mean_q(const ProbeBuffer& probe, const QmixNets& nets) {
  const std::vector<double> q = logged_q_tot(probe.batch, nets);
  double sum = 0.0;
  for (double v : q) sum += v;
  return sum / static_cast<double>(q.size());
}

OnlineResult run_online_phase(const RunConfig& config, std::uint64_t seed,
                              const std::filesystem::path& out_dir, const OnlineHooks* hooks) {
  auto env = make_env(config);
  const DecPomdpSpec spec = env->spec();
  const bool from_scratch = config.get_bool("online.from_scratch");
  const OnlineConfig ocfg = online_config(config);
  const Explorer explorer = online_explorer(config);
  const LearnerSettings settings = learner_settings(config);
  const std::size_t batch_size = positive(config, "train.batch_size");
  const std::uint64_t total = config.get_uint("online.total_steps");
  const std::uint64_t eval_every = positive(config, "eval.every");
  const std::size_t eval_episodes = positive(config, "eval.episodes");
  const std::size_t warmup = config.get_uint("online.warmup_episodes");
  const std::size_t updates_per_episode = config.get_uint("online.updates_per_episode");
  const double ratio = config.get_double("online.mixing_ratio");
  const bool trace_schedule = config.get_bool("online.trace_schedule");
  const std::uint64_t eval_seed = mix_seed(seed, kEvalStream);

  std::optional<QmixNets> live;
  std::optional<QmixNets> target;
  std::optional<QmixNets> memory;
  if (from_scratch) {
    if (ocfg.use_memory) {
      throw ConfigError("online.use_memory needs offline artifacts; set online.use_memory=false "
                        "for a from-scratch run");
    }
    Rng init_rng(mix_seed(seed, kInitStream));
    live.emplace(net_shape(config, spec), init_rng);
    target.emplace(*live);
  } else {
    const std::filesystem::path dir = config.get("online.offline_dir");
    if (dir.empty()) throw ArtifactError("online.offline_dir is not set");
    const auto policy_path = dir / "policy.ckpt";
    const auto target_path = dir / "offline_target.ckpt";
    for (const auto& p : {policy_path, target_path}) {
      if (!std::filesystem::exists(p)) throw ArtifactError("missing offline artifact " + p.string());
    }
    live.emplace(load_policy_checkpoint(policy_path, config));
    target.emplace(load_policy_checkpoint(target_path, config));
    if (!(target->shape() == live->shape())) {
      throw ConfigError("offline policy and target checkpoints disagree on architecture");
    }
    if (ocfg.use_memory) memory.emplace(*target);
  }
  const NetShape shape = live->shape();

  std::optional<Dataset> offline_data;
  if (ratio > 0.0) {
    offline_data = load_task_dataset(config.get("online.dataset"), spec, "online.dataset");
  }
  ReplayBuffer buffer(positive(config, "online.buffer_capacity"));
  const MixingRatioSampler sampler(ratio, offline_data ? &*offline_data : nullptr, &buffer);

  OnlineLearner learner(std::move(*live), std::move(*target), std::move(memory), ocfg, settings,
                        seed);
  Rng explore_rng(mix_seed(seed, kExploreStream));
  Rng batch_rng(mix_seed(seed, kBatchStream));
  const std::uint64_t episode_base = mix_seed(seed, kEpisodeStream);
  config.write_snapshot(out_dir);

  OnlineResult result;
  std::string trace_text;
  if (trace_schedule) trace_text = "kind,env_step,value\n";

  double loss_sum = 0.0;
  double mem_sum = 0.0;
  std::size_t metric_n = 0;
  std::uint64_t global_step = 0;
  std::uint64_t episode_index = 0;
  const auto& nets = learner.nets();

  auto do_eval = [&](std::uint64_t step) {
    MetricsRow r;
    r.step = step;
    const EvalResult e = eval_nets(*env, nets.live, eval_episodes, eval_seed);
    r.episode_return_mean = e.mean_return;
    r.success_rate = e.success_rate;
    r.epsilon = explorer.epsilon_at(step);
    if (ocfg.use_memory) r.lambda_memory = learner.lambda_at(step);
    if (metric_n > 0) {
      r.loss = loss_sum / static_cast<double>(metric_n);
      if (ocfg.use_memory) r.mem_branch_fraction = mem_sum / static_cast<double>(metric_n);
    }
    if (hooks && hooks->probe) r.q_probe_mean = probe_mean_q(*hooks->probe, nets.live);
    loss_sum = mem_sum = 0.0;
    metric_n = 0;
    result.rows.push_back(r);
    return hooks && hooks->on_eval && hooks->on_eval(r, e, nets.live);
  };

  bool stop = do_eval(0);
  if (hooks && hooks->on_update) hooks->on_update(0, 0, nets.live);
  std::uint64_t next_eval = eval_every;
  RolloutTrace trace;
  while (!stop && global_step < total) {
    trace = RolloutTrace{};
    EpisodeRecord ep =
        run_episode(*env, q_function(nets.live.agent), shape, explorer,
                    mix_seed(episode_base, episode_index++), global_step, explore_rng,
                    trace_schedule ? &trace : nullptr);
    if (trace_schedule) {
      for (std::size_t i = 0; i < trace.env_steps.size(); ++i) {
        trace_text += "epsilon," + std::to_string(trace.env_steps[i]) + "," +
                      format_double(trace.epsilons[i]) + "\n";
      }
    }
    buffer.add(std::move(ep));
    if (sampler.ready(batch_size, warmup)) {
      for (std::size_t k = 0; k < updates_per_episode; ++k) {
        const Batch batch = make_batch(sampler.sample(batch_size, batch_rng), spec, shape);
        const OnlineMetrics m = learner.update(batch, global_step);
        loss_sum += m.loss;
        mem_sum += m.mem_branch_fraction;
        ++metric_n;
        result.ovm_law_violations += m.ovm_law_violations;
        if (ocfg.use_memory) result.checked_transitions += m.transitions;
        if (trace_schedule) {
          trace_text += "lambda," + std::to_string(m.env_step) + "," + format_double(m.lambda) + "\n";
        }
        if (hooks && hooks->on_metrics) hooks->on_metrics(m);
        if (hooks && hooks->on_update && hooks->every > 0 && m.update % hooks->every == 0) {
          hooks->on_update(m.update, global_step, nets.live);
        }
      }
    }
    while (!stop && next_eval <= total && global_step >= next_eval) {
      stop = do_eval(next_eval);
      next_eval += eval_every;
    }
  }
  result.stopped_early = stop && global_step < total;
  result.env_steps = global_step;
  result.updates = learner.updates();
  result.success_auc = normalized_auc(result.rows, 2);
  result.buffer_insertions = buffer.insertions();
  result.buffer_contents = buffer.contents();

  write_metrics(out_dir / "metrics.csv", result.rows);
  if (trace_schedule) write_file_bytes(out_dir / "schedule_trace.csv", trace_text);
  const auto final_path = out_dir / "final.ckpt";
  write_checkpoint(final_path, make_policy_checkpoint(nets.live, config, "final"));
  result.final_checkpoint_hash = file_hash(final_path);
  write_manifest(out_dir, config, seed, "finetune", {{"final.ckpt", result.final_checkpoint_hash}});
  return result;
}

// ------------------------------------------------------------- diagnostic

QCurve diagnose_unlearning(const RunConfig& config, std::uint64_t seed,
                           const std::filesystem::path& out_dir,
                           const std::vector<std::string>& algorithms) {
  if (algorithms.empty()) throw ConfigError("diagnose: no algorithms given");
  auto env = make_env(config);
  const std::filesystem::path dir = config.get("online.offline_dir");
  if (dir.empty()) throw ArtifactError("online.offline_dir is not set");
  const QmixNets pretrained = load_policy_checkpoint(dir / "policy.ckpt", config);
  const std::size_t every = positive(config, "diagnose.every");

  QCurve curve;
  curve.algorithms = algorithms;
  curve.lambda_anneal_steps = online_config(config).lambda_anneal_steps;
  const std::uint64_t probe_seed = mix_seed(seed, kProbeStream);
  const std::size_t probe_n = positive(config, "diagnose.probe_episodes");
  for (const auto& algo : algorithms) {
    RunConfig arm = config;
    apply_algorithm_preset(arm, algo);
    if (arm.get_bool("online.from_scratch")) {
      throw ConfigError("diagnose: algorithm '" + algo + "' does not start from the offline policy");
    }
    // Collected afresh per arm from the same seed; the hashes must agree.
    auto probe_env = make_env(arm);
    const ProbeBuffer probe =
        collect_probe_buffer(*probe_env, pretrained, pretrained.shape(), probe_n, probe_seed);
    curve.probe_hashes.push_back(probe.hash);
    curve.offline_probe_mean = probe_mean_q(probe, pretrained);
    auto& points = curve.series.emplace_back();
    OnlineHooks hooks;
    hooks.every = every;
    hooks.probe = &probe;
    hooks.on_update = [&](std::uint64_t u, std::uint64_t step, const QmixNets& live) {
      points.push_back({u, step, probe_mean_q(probe, live)});
    };
    run_online_phase(arm, seed, out_dir / algo, &hooks);
  }

  std::map<std::uint64_t, std::vector<std::optional<double>>> table;
  for (std::size_t a = 0; a < algorithms.size(); ++a) {
    for (const auto& p : curve.series[a]) {
      auto& row = table[p.update];
      row.resize(algorithms.size());
      row[a] = p.q;
    }
  }
  std::string csv = "step";
  for (const auto& a : algorithms) csv += "," + a;
  csv += "\n";
  for (auto& [step, vals] : table) {
    vals.resize(algorithms.size());
    csv += std::to_string(step);
    for (const auto& v : vals) csv += "," + (v ? format_double(*v) : std::string());
    csv += "\n";
  }
  write_file_bytes(out_dir / "qcurve.csv", csv);
  config.write_snapshot(out_dir);
  return curve;
}

}  // namespace ovmse
