#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ovmse/config.hpp"
#include "ovmse/episode.hpp"
#include "ovmse/learner.hpp"
#include "ovmse/metrics.hpp"
#include "ovmse/oracle.hpp"
#include "ovmse/replay.hpp"

namespace ovmse {

// ------------------------------------------------------------ task assembly

GridWorldConfig grid_config(const RunConfig& config);
std::unique_ptr<Environment> make_env(const RunConfig& config);
NetShape net_shape(const RunConfig& config, const DecPomdpSpec& spec);
LearnerSettings learner_settings(const RunConfig& config);
OfflineConfig offline_config(const RunConfig& config);
// Resolves the "auto" anneal length to half of online.total_steps.
OnlineConfig online_config(const RunConfig& config);
// Resolves "auto" start (1.0 from scratch, 0.3 otherwise) and anneal length
// (20% of online.total_steps).
Explorer online_explorer(const RunConfig& config);
// Stable text describing the task; stored in checkpoints and datasets.
std::string task_key(const RunConfig& config);
// Oracle for the configured task. Gridworld solutions are cached at
// oracle.cache (or cache_dir/oracle.ckpt when unset).
ExactSolution oracle_solution(const RunConfig& config, const std::filesystem::path& cache_dir);

// --------------------------------------------------------------- evaluation

struct EvalResult {
  std::size_t episodes = 0;
  double mean_return = 0.0;
  double std_return = 0.0;  // population standard deviation
  double mean_discounted_return = 0.0;
  double success_rate = 0.0;
};

// Greedy rollouts from episode seeds mix_seed(seed, j). n == 0 is a UsageError.
EvalResult evaluate(Environment& env, const QFunction& q, const NetShape& shape,
                    std::size_t n_episodes, std::uint64_t seed);
EvalResult evaluate_checkpoint(const RunConfig& config, const std::filesystem::path& policy,
                               std::size_t n_episodes, std::uint64_t seed);

double discounted_return(const EpisodeRecord& episode, double gamma);

// ------------------------------------------------------------ checkpoints

Checkpoint make_policy_checkpoint(const QmixNets& nets, const RunConfig& config,
                                  const std::string& kind);
QmixNets load_policy_checkpoint(const std::filesystem::path& path, const RunConfig& config);

struct OfflineArtifacts {
  std::filesystem::path policy;
  std::filesystem::path offline_target;
  std::string policy_hash;
  std::string offline_target_hash;
};

// Writes policy.ckpt (live networks) and offline_target.ckpt (target copy).
OfflineArtifacts export_offline_artifacts(const TargetPair& nets, const RunConfig& config,
                                          const std::filesystem::path& out_dir);

// --------------------------------------------------------------- datasets

// Episodes of the behaviour networks with fixed independent epsilon.
Dataset collect_medium_dataset(Environment& env, const QmixNets& behavior, const NetShape& shape,
                               std::size_t n_episodes, double epsilon, std::uint64_t seed);

struct DatasetRun {
  Dataset dataset;
  std::filesystem::path dataset_path;
  std::filesystem::path behavior_checkpoint;
  bool threshold_reached = false;
  std::uint64_t behavior_env_steps = 0;
  double oracle_return = 0.0;
};

// Trains a QMIX behaviour policy from scratch until the earliest evaluation
// whose discounted return reaches dataset.medium_fraction of the oracle
// optimum, then writes <out>/dataset.jsonl in the configured mode.
DatasetRun generate_dataset(const RunConfig& config, std::uint64_t seed,
                            const std::filesystem::path& out_dir);

// ---------------------------------------------------------- offline phase

struct OfflineResult {
  OfflineArtifacts artifacts;
  std::vector<MetricsRow> rows;
  std::uint64_t updates = 0;
  EvalResult final_eval;
  double dataset_mean_return = 0.0;
};

// CQL pretraining on offline.dataset. Writes metrics.csv, config.snapshot,
// manifest.json, state_<n>.ckpt every offline.checkpoint_every updates and
// the two offline artifacts. offline.resume_from restarts from a state file.
OfflineResult run_offline_phase(const RunConfig& config, std::uint64_t seed,
                                const std::filesystem::path& out_dir);

// ----------------------------------------------------------- online phase

// Frozen greedy trajectories of the pretrained policy.
struct ProbeBuffer {
  std::vector<EpisodePtr> episodes;
  std::string hash;
  Batch batch;
};

ProbeBuffer collect_probe_buffer(Environment& env, const QmixNets& policy, const NetShape& shape,
                                 std::size_t n_episodes, std::uint64_t seed);
// Mean Q_tot(tau, a) over every logged transition of the probe buffer.
double probe_mean_q(const ProbeBuffer& probe, const QmixNets& nets);

struct OnlineHooks {
  // on_update fires before the first update (update 0) and after every
  // `every` updates.
  std::size_t every = 0;
  std::function<void(std::uint64_t update, std::uint64_t env_step, const QmixNets& live)>
      on_update;
  std::function<void(const OnlineMetrics&)> on_metrics;
  // Return true to stop the run after this evaluation.
  std::function<bool(const MetricsRow&, const EvalResult&, const QmixNets& live)> on_eval;
  const ProbeBuffer* probe = nullptr;
};

struct OnlineResult {
  std::vector<MetricsRow> rows;
  std::uint64_t env_steps = 0;
  std::uint64_t updates = 0;
  std::size_t ovm_law_violations = 0;
  std::size_t checked_transitions = 0;
  std::string final_checkpoint_hash;
  double success_auc = 0.0;
  bool stopped_early = false;
  std::uint64_t buffer_insertions = 0;
  std::vector<EpisodePtr> buffer_contents;  // oldest first, at the end of the run
};

// Fine-tuning from the offline artifacts in online.offline_dir (or from a
// random initialisation with online.from_scratch). Writes metrics.csv,
// config.snapshot, manifest.json, final.ckpt and optionally
// schedule_trace.csv.
OnlineResult run_online_phase(const RunConfig& config, std::uint64_t seed,
                              const std::filesystem::path& out_dir,
                              const OnlineHooks* hooks = nullptr);

// ------------------------------------------------------------- diagnostic

struct QCurvePoint {
  std::uint64_t update = 0;
  std::uint64_t env_step = 0;
  double q = 0.0;
};

struct QCurve {
  std::vector<std::string> algorithms;
  std::vector<std::vector<QCurvePoint>> series;
  double offline_probe_mean = 0.0;
  std::vector<std::string> probe_hashes;  // one per arm; all equal
  std::uint64_t lambda_anneal_steps = 0;
};

// Fine-tunes each algorithm arm from the same offline artifacts and records
// the probe-buffer mean Q_tot every diagnose.every updates into qcurve.csv.
QCurve diagnose_unlearning(const RunConfig& config, std::uint64_t seed,
                           const std::filesystem::path& out_dir,
                           const std::vector<std::string>& algorithms);

std::vector<std::string> split_list(const std::string& text);

}  // namespace ovmse
