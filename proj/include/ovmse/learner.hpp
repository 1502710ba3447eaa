#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ovmse/networks.hpp"
#include "ovmse/optimizer.hpp"
#include "ovmse/replay.hpp"
#include "ovmse/schedule.hpp"

namespace ovmse {

// Sampling distribution for the out-of-data term of the CQL penalty.
enum class MuMode {
  kUniform,        // per-agent independent uniform over available actions, m draws
  kPolicySoftmax,  // per-agent softmax of the live action values, m draws
  kUniformExact,   // exact expectation over every available joint action
};

MuMode parse_mu_mode(const std::string& name);
std::string to_string(MuMode mode);

// What to minimise on one batch. The TD part is always present; the memory
// term and the CQL term are switched on by `offline_target` and
// `cql_weight > 0`.
struct Objective {
  double gamma = 0.99;
  // Weight of the OVM-target branch. Only read when offline_target is set.
  double lambda = 0.0;
  const QmixNets* offline_target = nullptr;
  double cql_weight = 0.0;
  MuMode mu = MuMode::kUniform;
  std::size_t mu_samples = 4;
};

struct LossResult {
  double loss = 0.0;      // full objective value
  double td = 0.0;        // mean squared TD error
  double cql = 0.0;       // unweighted penalty (0 when not evaluated)
  double q_mean = 0.0;    // mean Q_tot(tau, a) over transitions
  double mem_branch_fraction = 0.0;
  std::size_t ovm_law_violations = 0;

  std::vector<double> q_tot;
  std::vector<double> td_target;
  std::vector<double> offline_value;  // empty unless offline_target set
  std::vector<double> ovm_target;     // empty unless offline_target set
};

// max_a' Q_tot(tau', a') of `nets` for every slot in the batch. Monotonic
// mixing makes this the mixer applied to per-agent maxima over available
// actions.
std::vector<double> max_joint_values(const Batch& batch, const QmixNets& nets);

// Q_tot(tau, a_logged) for every transition; no gradients.
std::vector<double> logged_q_tot(const Batch& batch, const QmixNets& nets);

// r + gamma * max_a' Q_target(tau', a'), with no bootstrap on terminated steps.
std::vector<double> td_targets(const Batch& batch, const QmixNets& target, double gamma);

// max(offline, td). The whole expression is a constant w.r.t. the live nets.
double ovm_target(double offline_value, double td_target);

// Evaluates the objective and, when `accumulate` is set, adds its gradient to
// the live networks' gradient buffers. `cql_rng` drives mu sampling; it may be
// null only when the CQL term is neither weighted nor requested.
LossResult compute_objective(const Batch& batch, QmixNets& live, const QmixNets& target,
                             const Objective& objective, Rng* cql_rng, bool accumulate,
                             bool evaluate_cql = false);

// Mean over transitions of (Q_tot - td_target)^2.
LossResult td_loss(const Batch& batch, QmixNets& live, const QmixNets& target, double gamma,
                   bool accumulate = true);

// E_{a~mu}[Q_tot(tau, a)] - E_{a~D}[Q_tot(tau, a)], averaged over transitions.
LossResult cql_penalty(const Batch& batch, QmixNets& live, MuMode mu, std::size_t samples,
                       Rng& rng, bool accumulate = true);

// (1 - lambda) (Q_tot - td)^2 + lambda (Q_tot - max(offline, td))^2, averaged.
LossResult ovm_loss(const Batch& batch, QmixNets& live, const QmixNets& target,
                    const QmixNets& offline_target, double lambda, double gamma,
                    bool accumulate = true);

struct LearnerSettings {
  double gamma = 0.99;
  std::size_t target_sync_interval = 200;
  AdamSettings adam{};
  double grad_clip = 10.0;  // <= 0 disables
};

struct OfflineConfig {
  double cql_alpha = 1.0;
  MuMode mu = MuMode::kUniform;
  std::size_t mu_samples = 4;
};

struct OfflineMetrics {
  std::uint64_t update = 0;
  double loss = 0.0;
  double loss_td = 0.0;
  double loss_cql = 0.0;
  double q_mean = 0.0;
};

// QMIX + CQL pretraining on a fixed dataset.
class OfflineLearner {
 public:
  OfflineLearner(QmixNets init, OfflineConfig config, LearnerSettings settings,
                 std::uint64_t seed);

  // One optimizer step on L_td + alpha * L_cql; target sync every C updates.
  // Throws NumericalError if the loss is not finite.
  OfflineMetrics update(const Batch& batch);

  TargetPair& nets() { return nets_; }
  const TargetPair& nets() const { return nets_; }
  AdamOptimizer& optimizer() { return optimizer_; }
  const AdamOptimizer& optimizer() const { return optimizer_; }
  Rng& cql_rng() { return cql_rng_; }
  const Rng& cql_rng() const { return cql_rng_; }
  std::uint64_t updates() const { return updates_; }
  void set_updates(std::uint64_t n) { updates_ = n; }
  const OfflineConfig& config() const { return config_; }
  const LearnerSettings& settings() const { return settings_; }

 private:
  OfflineConfig config_;
  LearnerSettings settings_;
  TargetPair nets_;
  AdamOptimizer optimizer_;
  Rng cql_rng_;
  std::uint64_t updates_ = 0;
};

struct OnlineConfig {
  // false: lambda is identically 0 and the offline memory is never read.
  bool use_memory = true;
  double lambda_end = 0.2;
  std::uint64_t lambda_anneal_steps = 0;
  bool literal_min = false;
  bool use_cql = false;
  double cql_alpha = 1.0;
  MuMode mu = MuMode::kUniform;
  std::size_t mu_samples = 4;
};

struct OnlineMetrics {
  std::uint64_t update = 0;
  std::uint64_t env_step = 0;
  double loss = 0.0;
  double lambda = 0.0;
  double q_mean = 0.0;
  double mem_branch_fraction = 0.0;
  std::size_t ovm_law_violations = 0;
  std::size_t transitions = 0;
};

// OVM fine-tuning. The offline target networks are frozen for the whole phase.
class OnlineLearner {
 public:
  OnlineLearner(QmixNets live, QmixNets target, std::optional<QmixNets> offline_target,
                OnlineConfig config, LearnerSettings settings, std::uint64_t seed);

  double lambda_at(std::uint64_t env_step) const;

  // One optimizer step on L_OVM (plus optional CQL) with lambda evaluated at
  // env_step; target sync every C updates.
  OnlineMetrics update(const Batch& batch, std::uint64_t env_step);

  TargetPair& nets() { return nets_; }
  const TargetPair& nets() const { return nets_; }
  const std::optional<QmixNets>& offline_target() const { return offline_target_; }
  AdamOptimizer& optimizer() { return optimizer_; }
  const AdamOptimizer& optimizer() const { return optimizer_; }
  Rng& cql_rng() { return cql_rng_; }
  std::uint64_t updates() const { return updates_; }
  void set_updates(std::uint64_t n) { updates_ = n; }
  const OnlineConfig& config() const { return config_; }

 private:
  OnlineConfig config_;
  LearnerSettings settings_;
  TargetPair nets_;
  std::optional<QmixNets> offline_target_;
  AdamOptimizer optimizer_;
  Rng cql_rng_;
  std::uint64_t updates_ = 0;
};

}  // namespace ovmse
