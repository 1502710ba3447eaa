#include "ovmse/optimizer.hpp"

#include <cmath>

#include "ovmse/errors.hpp"

namespace ovmse {

AdamOptimizer::AdamOptimizer(AdamSettings settings) : settings_(settings) {
  if (!(settings_.learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (settings_.beta1 < 0.0 || settings_.beta1 >= 1.0 || settings_.beta2 < 0.0 ||
      settings_.beta2 >= 1.0) {
    throw ConfigError("Adam decay coefficients must lie in [0, 1)");
  }
}

void AdamOptimizer::step(ParamSet& params) {
  for (const auto& e : params.entries()) {
    if (!e.grad.all_finite()) {
      throw NumericalError("non-finite gradient for parameter '" + e.name + "'");
    }
  }
  const double t = static_cast<double>(params.step_count + 1);
  const double b1 = settings_.beta1;
  const double b2 = settings_.beta2;
  const double correction1 = 1.0 - std::pow(b1, t);
  const double correction2 = 1.0 - std::pow(b2, t);
  for (auto& e : params.entries()) {
    auto [it, inserted] = moments_.try_emplace(e.name);
    if (inserted) {
      it->second.first = Tensor(e.value.shape());
      it->second.second = Tensor(e.value.shape());
    }
    auto& m = it->second.first.storage();
    auto& v = it->second.second.storage();
    auto& theta = e.value.storage();
    auto& g = e.grad.storage();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      theta[i] -= settings_.learning_rate * m_hat / (std::sqrt(v_hat) + settings_.epsilon);
      g[i] = 0.0;
    }
  }
  ++params.step_count;
}

double clip_grad_norm(std::initializer_list<ParamSet*> sets, double max_norm) {
  double sq = 0.0;
  for (const ParamSet* p : sets) {
    for (const auto& e : p->entries()) {
      for (double g : e.grad.storage()) sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (ParamSet* p : sets) {
      for (auto& e : p->entries()) {
        for (double& g : e.grad.storage()) g *= scale;
      }
    }
  }
  return norm;
}

}  // namespace ovmse
