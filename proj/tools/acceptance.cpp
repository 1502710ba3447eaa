// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and exits
// nonzero when any fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ovmse/checkpoint.hpp"
#include "ovmse/config.hpp"
#include "ovmse/env.hpp"
#include "ovmse/errors.hpp"
#include "ovmse/exploration.hpp"
#include "ovmse/harness.hpp"
#include "ovmse/learner.hpp"
#include "ovmse/metrics.hpp"
#include "ovmse/replay.hpp"
#include "ovmse/schedule.hpp"
#include "support.hpp"

using namespace ovmse;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

// ------------------------------------------------------------ shared setup

// Desk-scale two-agent gridworld used for the fine-tuning criteria.
RunConfig desk_config(const fs::path& seed_dir) {
  RunConfig c;
  c.set("env.name", "gridworld");
  c.set("env.n_agents", "2");
  c.set("net.hidden_dim", "32");
  c.set("net.mixing_hidden_dim", "16");
  c.set("train.batch_size", "16");
  c.set("train.lr", "0.0002");
  c.set("train.target_sync", "500");
  c.set("online.updates_per_episode", "4");
  c.set("online.warmup_episodes", "16");
  c.set("online.total_steps", "20000");
  c.set("eval.episodes", "32");
  c.set("eval.every", "1000");
  c.set("dataset.behavior_steps", "40000");
  c.set("dataset.behavior_eval_every", "2000");
  c.set("dataset.episodes", "300");
  c.set("dataset.epsilon", "0.2");
  c.set("offline.updates", "5000");
  c.set("offline.log_every", "100");
  c.set("offline.eval_every", "500");
  c.set("offline.checkpoint_every", "1000");
  c.set("offline.dataset", (seed_dir / "dataset" / "dataset.jsonl").string());
  c.set("online.offline_dir", (seed_dir / "offline").string());
  return c;
}

RunConfig finetune_config(const fs::path& seed_dir) {
  RunConfig c = desk_config(seed_dir);
  c.set("online.updates_per_episode", "2");
  return c;
}

struct Prepared {
  fs::path dir;
  DatasetRun data;
  OfflineResult offline;
};

class Pipeline {
 public:
  explicit Pipeline(fs::path root) : root_(std::move(root)) {}

  // Dataset and CQL pretraining for one seed, built once per process.
  const Prepared& prepare(std::uint64_t seed) {
    auto it = cache_.find(seed);
    if (it != cache_.end()) return it->second;
    Prepared p;
    p.dir = root_ / ("seed_" + std::to_string(seed));
    const RunConfig cfg = desk_config(p.dir);
    const auto start = Clock::now();
    p.data = generate_dataset(cfg, seed, p.dir / "dataset");
    p.offline = run_offline_phase(cfg, seed, p.dir / "offline");
    std::cerr << "  seed " << seed << ": dataset mean return " << fmt(p.data.dataset.mean_return())
              << ", pretrained eval success " << fmt(p.offline.final_eval.success_rate) << " ("
              << fmt(seconds_since(start), 3) << " s)\n";
    return cache_.emplace(seed, std::move(p)).first->second;
  }

 private:
  fs::path root_;
  std::map<std::uint64_t, Prepared> cache_;
};

// ------------------------------------------------------------ criterion 1

Verdict gradient_check() {
  const auto start = Clock::now();
  GridWorld env;
  Rng rng(101);
  const NetShape shape = NetShape::for_env(env.spec());
  QmixNets live(shape, rng), target(shape, rng), offline(shape, rng);
  const Batch batch = testing::random_batch(env, live, 4, 202);
  const std::size_t probes_each = 24;

  struct Case {
    std::string name;
    std::function<double(bool)> loss;
  };
  const Rng cql_seed(303);
  const std::vector<Case> cases = {
      {"td", [&](bool acc) { return td_loss(batch, live, target, 0.99, acc).loss; }},
      {"cql",
       [&](bool acc) {
         Rng r = cql_seed;  // identical mu draws on every evaluation
         return cql_penalty(batch, live, MuMode::kUniform, 4, r, acc).cql;
       }},
      {"ovm", [&](bool acc) { return ovm_loss(batch, live, target, offline, 0.5, 0.99, acc).loss; }},
  };
  bool pass = true;
  std::string detail;
  for (const auto& c : cases) {
    testing::zero_grads(live);
    c.loss(true);
    const auto probes =
        testing::random_probes({&live.agent.params(), &live.mixer.params()}, probes_each, rng);
    const double worst = testing::worst_fd_error(probes, [&] { return c.loss(false); }, 1e-5);
    pass = pass && worst < 1e-4;
    detail += c.name + " worst rel err " + fmt(worst, 3) + " over " + std::to_string(probes_each) +
              " probes; ";
  }
  const double elapsed = seconds_since(start);
  pass = pass && elapsed < 60.0;
  return {pass, detail + "runtime " + fmt(elapsed, 3) + " s (limit 60)"};
}

// ------------------------------------------------------------ criterion 2

std::vector<int> exhaustive_argmax(const MixingNet& mixer, const Tensor& q,
                                   std::span<const double> state) {
  const std::size_t n = q.rows(), a = q.cols();
  std::vector<int> joint(n, 0), best;
  double best_v = -INFINITY;
  std::vector<double> qs(n);
  while (true) {
    for (std::size_t i = 0; i < n; ++i) qs[i] = q.at(i, static_cast<std::size_t>(joint[i]));
    const double v = mixer.forward_one(qs, state);
    if (v > best_v) {
      best_v = v;
      best = joint;
    }
    std::size_t k = n;
    while (k > 0 && ++joint[k - 1] == static_cast<int>(a)) joint[--k] = 0;
    if (k == 0) break;
  }
  return best;
}

Verdict monotonicity_igm() {
  Rng rng(404);
  const std::size_t draws = 200;
  double worst_partial = INFINITY;
  std::size_t partials = 0;
  std::map<std::size_t, std::size_t> igm_ok;
  for (std::size_t n : {2u, 4u}) {
    for (std::size_t d = 0; d < draws; ++d) {
      NetShape shape;
      shape.n_agents = n;
      shape.obs_dim = 3;
      shape.action_dim = 3;
      shape.state_dim = 6;
      shape.hidden_dim = 16;
      shape.mixing_hidden_dim = 8 + rng.index(25);
      const MixingNet mixer(shape, rng);
      std::vector<double> state(shape.state_dim), qs(n);
      for (auto& s : state) s = 2.0 * rng.uniform() - 1.0;
      for (auto& q : qs) q = 6.0 * rng.uniform() - 3.0;
      for (std::size_t i = 0; i < n; ++i) {
        auto up = qs, down = qs;
        up[i] += 1e-5;
        down[i] -= 1e-5;
        const double fd = (mixer.forward_one(up, state) - mixer.forward_one(down, state)) / 2e-5;
        worst_partial = std::min(worst_partial, fd);
        ++partials;
      }
      Tensor q({n, 3});
      for (std::size_t i = 0; i < q.size(); ++i) q[i] = 4.0 * rng.uniform() - 2.0;
      const std::vector<std::uint8_t> avail(n * 3, 1);
      igm_ok[n] += greedy_actions(q, avail) == exhaustive_argmax(mixer, q, state);
    }
  }
  const bool pass = worst_partial >= -1e-9 && igm_ok[2] == draws && igm_ok[4] == draws;
  return {pass, std::to_string(2 * draws) + " mixers, " + std::to_string(partials) +
                    " partials, min " + fmt(worst_partial, 3) + "; IGM 2x3 " +
                    std::to_string(igm_ok[2]) + "/" + std::to_string(draws) + ", 4x3 " +
                    std::to_string(igm_ok[4]) + "/" + std::to_string(draws)};
}

// ------------------------------------------------------- criteria 3 and 4

struct TracedRun {
  OnlineResult result;
  std::size_t hook_updates = 0;
  std::size_t hook_violations = 0;
  std::size_t hook_transitions = 0;
  RunConfig config;
  fs::path dir;
};

TracedRun traced_finetune(Pipeline& pipe) {
  const Prepared& p = pipe.prepare(0);
  TracedRun t;
  t.config = finetune_config(p.dir);
  apply_algorithm_preset(t.config, "ovmse");
  t.config.set("online.total_steps", "10000");
  t.config.set("online.trace_schedule", "true");
  t.dir = p.dir / "traced";
  OnlineHooks hooks;
  hooks.on_metrics = [&](const OnlineMetrics& m) {
    ++t.hook_updates;
    t.hook_violations += m.ovm_law_violations;
    t.hook_transitions += m.transitions;
  };
  t.result = run_online_phase(t.config, 0, t.dir, &hooks);
  return t;
}

Verdict ovm_law(const TracedRun& t) {
  const bool pass = t.result.env_steps >= 10000 && t.hook_updates == t.result.updates &&
                    t.hook_updates > 0 && t.hook_violations == 0 &&
                    t.result.ovm_law_violations == 0;
  return {pass, std::to_string(t.result.env_steps) + " env steps, " +
                    std::to_string(t.hook_updates) + " batches, " +
                    std::to_string(t.hook_transitions) + " transitions checked, " +
                    std::to_string(t.hook_violations) + " violations"};
}

Verdict schedule_exactness(const TracedRun& t) {
  const Explorer explorer = online_explorer(t.config);
  const OnlineConfig oc = online_config(t.config);
  std::istringstream in(read_file_bytes(t.dir / "schedule_trace.csv"));
  std::string line;
  std::getline(in, line);
  std::size_t eps_rows = 0, lambda_rows = 0, mismatches = 0;
  while (std::getline(in, line)) {
    const auto c1 = line.find(','), c2 = line.rfind(',');
    const std::string kind = line.substr(0, c1);
    const std::uint64_t step = std::stoull(line.substr(c1 + 1, c2 - c1 - 1));
    const double value = std::strtod(line.c_str() + c2 + 1, nullptr);
    double expected = 0.0;
    if (kind == "epsilon") {
      expected = epsilon_value(step, explorer.epsilon);
      ++eps_rows;
    } else {
      expected = lambda_schedule_value(step, oc.lambda_end, oc.lambda_anneal_steps);
      ++lambda_rows;
    }
    mismatches += value != expected;
  }
  // The metrics stream logs both schedules at every evaluation point.
  std::size_t metric_rows = 0;
  bool lambda0 = false;
  for (const auto& row : t.result.rows) {
    if (!row.epsilon || !row.lambda_memory) continue;
    ++metric_rows;
    mismatches += *row.epsilon != epsilon_value(row.step, explorer.epsilon);
    mismatches += *row.lambda_memory !=
                  lambda_schedule_value(row.step, oc.lambda_end, oc.lambda_anneal_steps);
    if (row.step == 0) lambda0 = *row.lambda_memory == 1.0;
  }
  const bool closed0 = lambda_schedule_value(0, oc.lambda_end, oc.lambda_anneal_steps) == 1.0;
  const bool pass = mismatches == 0 && eps_rows >= 10000 && lambda_rows > 0 && lambda0 && closed0;
  return {pass, std::to_string(eps_rows) + " epsilon and " + std::to_string(lambda_rows) +
                    " lambda trace values, " + std::to_string(metric_rows) +
                    " metric rows, " + std::to_string(mismatches) + " mismatches; lambda(0) = " +
                    (lambda0 && closed0 ? "1" : "not 1")};
}

// ------------------------------------------------------------ criterion 5

Verdict exploration_statistics() {
  GridWorldConfig gc;
  gc.n_agents = 5;
  GridWorld env(gc);
  Rng init(505);
  const NetShape shape = NetShape::for_env(env.spec());
  const QmixNets nets(shape, init);
  const QFunction q = q_function(nets.agent);
  const std::uint64_t steps = 100000;

  auto rollout = [&](ExplorationMode mode, auto&& visit) {
    const Explorer explorer{mode, Schedule{0.3, 0.3, 0}};
    Rng rng(606);
    std::uint64_t global = 0, seen = 0, episode = 0;
    while (seen < steps) {
      RolloutTrace trace;
      run_episode(env, q, shape, explorer, mix_seed(707, episode++), global, rng, &trace);
      for (std::size_t i = 0; i < trace.explorers.size() && seen < steps; ++i, ++seen) {
        visit(trace, i);
      }
    }
  };

  double explorers = 0.0;
  rollout(ExplorationMode::kSequentialDecentralized,
          [&](const RolloutTrace& t, std::size_t i) { explorers += static_cast<double>(t.explorers[i]); });
  const double mean = explorers / static_cast<double>(steps);
  const double band = 3.0 * std::sqrt(0.3 * (1.0 - 0.3 / 5.0)) / std::sqrt(static_cast<double>(steps));

  std::uint64_t within = 0, total = 0;
  rollout(ExplorationMode::kSequentialCentralized, [&](const RolloutTrace& t, std::size_t i) {
    std::size_t diff = 0;
    for (std::size_t k = 0; k < t.greedy[i].size(); ++k) diff += t.greedy[i][k] != t.chosen[i][k];
    within += diff <= 1;
    ++total;
  });
  const bool pass = std::abs(mean - 0.3) <= band && within == total;
  return {pass, "decentralized mean explorers " + fmt(mean, 5) + " (0.3 +/- " + fmt(band, 3) +
                    "); centralized Hamming <= 1 on " + std::to_string(within) + "/" +
                    std::to_string(total) + " steps"};
}

// ------------------------------------------------------------ criterion 6

Verdict matrix_convergence(const fs::path& root, std::size_t n_seeds) {
  std::size_t solved = 0;
  double slowest = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < n_seeds; ++seed) {
    RunConfig c;
    c.set("env.name", "matrix");
    apply_algorithm_preset(c, "qmix");
    c.set("online.total_steps", "50000");
    c.set("eval.every", "1000");
    c.set("eval.episodes", "4");
    OnlineHooks hooks;
    bool reached = false;
    std::uint64_t at = 0;
    hooks.on_eval = [&](const MetricsRow& row, const EvalResult& e, const QmixNets&) {
      if (e.success_rate == 1.0) {
        reached = true;
        at = row.step;
      }
      return reached;
    };
    const auto start = Clock::now();
    run_online_phase(c, seed, root / "matrix" / ("seed_" + std::to_string(seed)), &hooks);
    const double elapsed = seconds_since(start);
    slowest = std::max(slowest, elapsed);
    const bool ok = reached && elapsed < 300.0;
    solved += ok;
    per_seed += " " + (reached ? std::to_string(at) : std::string("no"));
  }
  return {solved >= 4, std::to_string(solved) + "/" + std::to_string(n_seeds) +
                           " seeds reach the optimal joint action (step reached:" + per_seed +
                           "); slowest seed " + fmt(slowest, 3) + " s"};
}

// ------------------------------------------------------- criteria 7 and 8

struct ArmRun {
  std::vector<QCurvePoint> curve;
  double offline_probe_mean = 0.0;
  std::uint64_t anneal = 0;
  double auc = 0.0;
  double seconds = 0.0;
  std::string probe_hash;
};

struct SeedArms {
  std::map<std::string, ArmRun> arms;
};

SeedArms run_arms(Pipeline& pipe, std::uint64_t seed) {
  const Prepared& p = pipe.prepare(seed);
  const RunConfig cfg = finetune_config(p.dir);
  SeedArms out;
  for (const std::string algo : {"ovmse", "ovm", "switch-cql"}) {
    const auto start = Clock::now();
    const QCurve c = diagnose_unlearning(cfg, seed, p.dir / "arms", {algo});
    ArmRun a;
    a.seconds = seconds_since(start);
    a.curve = c.series.front();
    a.offline_probe_mean = c.offline_probe_mean;
    a.anneal = c.lambda_anneal_steps;
    a.probe_hash = c.probe_hashes.front();
    const auto success = static_cast<std::size_t>(
        std::find(metrics_columns().begin(), metrics_columns().end(), "success_rate") -
        metrics_columns().begin());
    a.auc = normalized_auc(read_metrics(p.dir / "arms" / algo / "metrics.csv"), success);
    out.arms.emplace(algo, std::move(a));
  }
  return out;
}

double min_within(const std::vector<QCurvePoint>& curve, std::uint64_t anneal) {
  double m = INFINITY;
  for (const auto& p : curve) {
    if (p.env_step <= anneal) m = std::min(m, p.q);
  }
  return m;
}

Verdict unlearning(const std::vector<SeedArms>& seeds) {
  std::vector<double> ovm_min, base_min, drop_frac;
  bool same_probe = true;
  for (const auto& s : seeds) {
    const ArmRun& ovm = s.arms.at("ovm");
    const ArmRun& base = s.arms.at("switch-cql");
    same_probe = same_probe && ovm.probe_hash == base.probe_hash &&
                 ovm.curve.front().q == base.curve.front().q;
    ovm_min.push_back(min_within(ovm.curve, ovm.anneal));
    base_min.push_back(min_within(base.curve, ovm.anneal));
    drop_frac.push_back((ovm.curve.front().q - ovm_min.back()) /
                        std::abs(ovm.offline_probe_mean));
  }
  const double m_ovm = median(ovm_min), m_base = median(base_min), m_drop = median(drop_frac);
  const bool pass = same_probe && m_ovm >= m_base && m_drop <= 0.05;
  std::string per;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    per += " " + fmt(ovm_min[i]) + "/" + fmt(base_min[i]);
  }
  return {pass, "median min probe Q over the anneal window: OVM " + fmt(m_ovm) + " vs lambda=0 " +
                    fmt(m_base) + " (per seed OVM/base:" + per + "); median OVM drop " +
                    fmt(100.0 * m_drop, 3) + "% of |offline probe mean| (limit 5%)" +
                    (same_probe ? "" : "; probe buffers differ")};
}

Verdict se_ablation(const std::vector<SeedArms>& seeds) {
  std::map<std::string, std::vector<double>> auc;
  double slowest = 0.0;
  for (const auto& s : seeds) {
    for (const auto& [name, arm] : s.arms) {
      auc[name].push_back(arm.auc);
      slowest = std::max(slowest, arm.seconds);
    }
  }
  const double ovmse = median(auc["ovmse"]), ovm = median(auc["ovm"]),
               sw = median(auc["switch-cql"]);
  const bool pass = ovmse >= ovm && ovm >= sw && slowest <= 600.0;
  return {pass, "median success AUC: ovmse " + fmt(ovmse) + ", ovm " + fmt(ovm) +
                    ", switch-cql " + fmt(sw) + "; slowest arm " + fmt(slowest, 3) +
                    " s (limit 600)"};
}

// ------------------------------------------------------------ criterion 9

Verdict reductions(Pipeline& pipe) {
  const Prepared& p = pipe.prepare(0);
  const RunConfig cfg = finetune_config(p.dir);
  auto env = make_env(cfg);
  const Dataset& data = p.data.dataset;
  const NetShape shape = net_shape(cfg, env->spec());
  const QmixNets pretrained = load_policy_checkpoint(p.offline.artifacts.policy, cfg);
  const QmixNets memory = load_policy_checkpoint(p.offline.artifacts.offline_target, cfg);
  const LearnerSettings ls = learner_settings(cfg);
  const std::size_t updates = 200;
  Rng batch_rng(909);
  std::vector<Batch> batches;
  for (std::size_t u = 0; u < updates; ++u) {
    std::vector<EpisodePtr> eps;
    for (std::size_t k = 0; k < 16; ++k) eps.push_back(data.episodes[batch_rng.index(data.episodes.size())]);
    batches.push_back(make_batch(eps, env->spec(), shape));
  }

  // Reference: plain TD updates, clip, Adam, periodic hard sync.
  auto reference = [&](const QmixNets& init) {
    std::vector<QmixNets> trail;
    TargetPair nets(init, ls.target_sync_interval);
    AdamOptimizer opt(ls.adam);
    for (std::size_t u = 0; u < updates; ++u) {
      td_loss(batches[u], nets.live, nets.target, ls.gamma, true);
      clip_grad_norm({&nets.live.agent.params(), &nets.live.mixer.params()}, ls.grad_clip);
      opt.step(nets.live.agent.params());
      opt.step(nets.live.mixer.params());
      if ((u + 1) % nets.sync_interval == 0) nets.sync();
      trail.push_back(nets.live);
    }
    return trail;
  };

  const auto online_ref = reference(pretrained);
  OnlineConfig zero;
  zero.lambda_end = 0.0;
  zero.lambda_anneal_steps = 0;
  OnlineLearner online(pretrained, pretrained, memory, zero, ls, 1);
  std::size_t online_same = 0;
  for (std::size_t u = 0; u < updates; ++u) {
    online.update(batches[u], 40 * u);
    online_same += online.nets().live.values_equal(online_ref[u]);
  }

  Rng fresh(910);
  const QmixNets scratch(shape, fresh);
  const auto offline_ref = reference(scratch);
  OfflineConfig no_cql = offline_config(cfg);
  no_cql.cql_alpha = 0.0;
  OfflineLearner offline(scratch, no_cql, ls, 1);
  std::size_t offline_same = 0;
  for (std::size_t u = 0; u < updates; ++u) {
    offline.update(batches[u]);
    offline_same += offline.nets().live.values_equal(offline_ref[u]);
  }

  ReplayBuffer buffer(100);
  GridWorld grid = GridWorld(grid_config(cfg));
  for (const auto& e : testing::random_episodes(grid, pretrained, 40, 911)) buffer.add(e);
  const std::set<const EpisodeRecord*> offline_set = [&] {
    std::set<const EpisodeRecord*> s;
    for (const auto& e : data.episodes) s.insert(e.get());
    return s;
  }();
  const MixingRatioSampler sampler(0.0, &data, &buffer);
  Rng sample_rng(912);
  std::size_t drawn = 0, from_offline = 0;
  for (int k = 0; k < 1000; ++k) {
    for (const auto& e : sampler.sample(32, sample_rng)) {
      ++drawn;
      from_offline += offline_set.count(e.get());
    }
  }
  const bool pass = online_same == updates && offline_same == updates && from_offline == 0;
  return {pass, "lambda=0 online updates bit-identical to TD: " + std::to_string(online_same) +
                    "/" + std::to_string(updates) + "; alpha=0 offline updates bit-identical: " +
                    std::to_string(offline_same) + "/" + std::to_string(updates) +
                    "; rho=0 offline draws " + std::to_string(from_offline) + "/" +
                    std::to_string(drawn)};
}

// ----------------------------------------------------------- criterion 10

Verdict persistence(Pipeline& pipe) {
  const Prepared& p = pipe.prepare(0);
  const std::string dataset_bytes = read_file_bytes(p.data.dataset_path);
  const bool dataset_ok = encode_dataset(decode_dataset(dataset_bytes)) == dataset_bytes;

  std::size_t ckpt_ok = 0, ckpt_total = 0;
  for (const auto& name : {"policy.ckpt", "offline_target.ckpt", "state_2000.ckpt"}) {
    const std::string bytes = read_file_bytes(p.dir / "offline" / name);
    ++ckpt_total;
    ckpt_ok += encode_checkpoint(decode_checkpoint(bytes)) == bytes;
  }

  RunConfig resume = desk_config(p.dir);
  resume.set("offline.resume_from", (p.dir / "offline" / "state_2000.ckpt").string());
  const OfflineResult r = run_offline_phase(resume, 0, p.dir / "offline_resumed");
  const auto& full = p.offline.rows;
  bool rows_ok = !r.rows.empty() && r.rows.size() < full.size() &&
                 std::equal(r.rows.begin(), r.rows.end(),
                            full.end() - static_cast<std::ptrdiff_t>(r.rows.size()));
  const bool policy_ok = r.artifacts.policy_hash == p.offline.artifacts.policy_hash &&
                         r.artifacts.offline_target_hash == p.offline.artifacts.offline_target_hash;
  const bool pass = dataset_ok && ckpt_ok == ckpt_total && rows_ok && policy_ok;
  return {pass, std::string("dataset re-encode ") + (dataset_ok ? "identical" : "differs") +
                    "; checkpoints identical " + std::to_string(ckpt_ok) + "/" +
                    std::to_string(ckpt_total) + "; resume from update 2000 reproduces " +
                    std::to_string(r.rows.size()) + " metric rows " +
                    (rows_ok ? "exactly" : "with differences") + ", final artifacts " +
                    (policy_ok ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string work = "acceptance_work";
  std::size_t seeds = 5;
  std::vector<int> only;
  app.add_option("--work", work, "scratch directory (recreated)")->capture_default_str();
  app.add_option("--seeds", seeds, "seeds for the multi-seed criteria")->capture_default_str();
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);

  const fs::path root(work);
  fs::remove_all(root);
  fs::create_directories(root);
  Pipeline pipe(root / "grid");
  auto wanted = [&](int k) {
    return only.empty() || std::find(only.begin(), only.end(), k) != only.end();
  };

  static const char* names[] = {"",
                                "gradient correctness",
                                "monotonicity and IGM",
                                "OVM target law",
                                "schedule exactness",
                                "sequential exploration statistics",
                                "oracle convergence on the matrix game",
                                "unlearning diagnostic",
                                "sequential exploration ablation",
                                "reduction identities",
                                "persistence round-trips"};
  int failures = 0;
  auto report = [&](int k, const Verdict& v) {
    std::cout << "criterion " << k << " " << (v.pass ? "PASS" : "FAIL") << " " << names[k] << ": "
              << v.detail << std::endl;
    failures += !v.pass;
  };
  auto guarded = [&](int k, const std::function<Verdict()>& fn) {
    if (!wanted(k)) return;
    const auto start = Clock::now();
    try {
      report(k, fn());
    } catch (const std::exception& e) {
      report(k, {false, std::string("error: ") + e.what()});
    }
    std::cerr << "  (criterion " << k << " took " << fmt(seconds_since(start), 3) << " s)\n";
  };

  guarded(1, gradient_check);
  guarded(2, monotonicity_igm);
  if (wanted(3) || wanted(4)) {
    try {
      const TracedRun t = traced_finetune(pipe);
      guarded(3, [&] { return ovm_law(t); });
      guarded(4, [&] { return schedule_exactness(t); });
    } catch (const std::exception& e) {
      for (int k : {3, 4}) {
        if (wanted(k)) report(k, {false, std::string("error: ") + e.what()});
      }
    }
  }
  guarded(5, exploration_statistics);
  guarded(6, [&] { return matrix_convergence(root, seeds); });
  if (wanted(7) || wanted(8)) {
    std::vector<SeedArms> arms;
    try {
      for (std::uint64_t s = 0; s < seeds; ++s) arms.push_back(run_arms(pipe, s));
      guarded(7, [&] { return unlearning(arms); });
      guarded(8, [&] { return se_ablation(arms); });
    } catch (const std::exception& e) {
      for (int k : {7, 8}) {
        if (wanted(k)) report(k, {false, std::string("error: ") + e.what()});
      }
    }
  }
  guarded(9, [&] { return reductions(pipe); });
  guarded(10, [&] { return persistence(pipe); });
  return failures == 0 ? 0 : 1;
}
