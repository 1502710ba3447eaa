#include "ovmse/param_set.hpp"

#include <iterator>

#include <cmath>

#include "ovmse/errors.hpp"
#include "ovmse/rng.hpp"

namespace ovmse {

std::size_t ParamSet::add(const std::string& name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  Tensor grad(value.shape());
  entries_.push_back({name, std::move(value), std::move(grad)});
  index_.emplace(name, entries_.size() - 1);
  return entries_.size() - 1;
}

std::size_t ParamSet::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name ||
        entries_[i].value.shape() != other.entries_[i].value.shape()) {
      return false;
    }
  }
  return true;
}

void ParamSet::copy_values_from(const ParamSet& other) {
  if (!same_layout(other)) throw ConfigError("copy_values_from: parameter layout mismatch");
  for (std::size_t i = 0; i < entries_.size(); ++i) entries_[i].value = other.entries_[i].value;
}

bool ParamSet::values_equal(const ParamSet& other) const {
  if (!same_layout(other)) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].value.storage() != other.entries_[i].value.storage()) return false;
  }
  return true;
}

void add_dense_params(ParamSet& params, const std::string& prefix, std::size_t in,
                      std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Tensor w({in, out});
  Tensor b({out});
  for (auto& x : w.storage()) x = (2.0 * rng.uniform() - 1.0) * bound;
  for (auto& x : b.storage()) x = (2.0 * rng.uniform() - 1.0) * bound;
  params.add(prefix + ".weight", std::move(w));
  params.add(prefix + ".bias", std::move(b));
}

Tensor SequentialTape::dense(const ParamSet& params, const std::string& prefix,
                             const Tensor& input) {
  Step step;
  step.is_dense = true;
  step.weight = params.index_of(prefix + ".weight");
  step.bias = params.index_of(prefix + ".bias");
  step.input = input;
  Tensor out = linear_forward(input, params.value(step.weight), params.value(step.bias));
  steps_.push_back(std::move(step));
  return out;
}

Tensor SequentialTape::elu(const Tensor& pre) {
  Step step;
  step.input = pre;
  steps_.push_back(std::move(step));
  return elu_forward(pre);
}

Tensor SequentialTape::backward(const Tensor& out_grad, ParamSet& params,
                                bool want_input_grad) {
  if (steps_.empty()) throw UsageError("backward called without a recorded forward pass");
  Tensor grad = out_grad;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
    if (it->is_dense) {
      const bool first = std::next(it) == steps_.rend();
      grad = linear_backward(it->input, params.value(it->weight), grad, params.grad(it->weight),
                             params.grad(it->bias), want_input_grad || !first);
    } else {
      grad = elu_backward(it->input, grad);
    }
  }
  steps_.clear();
  return grad;
}

}  // namespace ovmse
