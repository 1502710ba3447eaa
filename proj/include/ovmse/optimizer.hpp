#pragma once

#include <map>
#include <string>

#include "ovmse/param_set.hpp"

namespace ovmse {

struct AdamSettings {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive-moment optimizer. Moments are keyed by parameter name, so one
// optimizer can drive several ParamSets as long as their names are disjoint.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamSettings settings = {});

  // theta -= lr * m_hat / (sqrt(v_hat) + eps), using params.step_count + 1 for
  // bias correction. Zeroes the gradients and increments step_count.
  // Throws NumericalError naming the first parameter with a non-finite grad.
  void step(ParamSet& params);

  const AdamSettings& settings() const { return settings_; }

  struct Moments {
    Tensor first;
    Tensor second;
  };
  const std::map<std::string, Moments>& moments() const { return moments_; }
  std::map<std::string, Moments>& moments() { return moments_; }

 private:
  AdamSettings settings_;
  std::map<std::string, Moments> moments_;
};

// Scales every gradient in the given sets so that their joint L2 norm is at
// most max_norm. Returns the norm before scaling. max_norm <= 0 disables.
double clip_grad_norm(std::initializer_list<ParamSet*> sets, double max_norm);

}  // namespace ovmse
