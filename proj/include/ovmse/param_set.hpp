#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ovmse/tensor.hpp"

namespace ovmse {

class Rng;

// Named parameters with paired gradient buffers. Iteration follows insertion
// order so that serialization and optimizer updates are deterministic.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
  };

  std::size_t add(const std::string& name, Tensor value);

  std::size_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor& value(std::size_t i) { return entries_[i].value; }
  const Tensor& value(std::size_t i) const { return entries_[i].value; }
  Tensor& grad(std::size_t i) { return entries_[i].grad; }
  const Tensor& grad(std::size_t i) const { return entries_[i].grad; }
  Tensor& value(const std::string& name) { return value(index_of(name)); }
  const Tensor& value(const std::string& name) const { return value(index_of(name)); }
  Tensor& grad(const std::string& name) { return grad(index_of(name)); }
  const Tensor& grad(const std::string& name) const { return grad(index_of(name)); }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  // Overwrites values from another set with identical names and shapes.
  void copy_values_from(const ParamSet& other);
  bool same_layout(const ParamSet& other) const;
  bool values_equal(const ParamSet& other) const;

  std::uint64_t step_count = 0;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weight and bias for a dense layer
// named "<prefix>.weight" [in x out] and "<prefix>.bias" [out].
void add_dense_params(ParamSet& params, const std::string& prefix, std::size_t in,
                      std::size_t out, Rng& rng);

// Records a chain of dense/ELU layers so the matching backward pass can be
// replayed. One forward, one backward; backward consumes the tape.
class SequentialTape {
 public:
  Tensor dense(const ParamSet& params, const std::string& prefix, const Tensor& input);
  Tensor elu(const Tensor& pre);

  // Accumulates parameter gradients into `params` and returns d(loss)/d(input).
  // Throws UsageError if nothing was recorded. With want_input_grad false
  // the returned tensor is empty and the first layer skips that product.
  Tensor backward(const Tensor& out_grad, ParamSet& params, bool want_input_grad = true);

  bool empty() const { return steps_.empty(); }
  void clear() { steps_.clear(); }

 private:
  struct Step {
    bool is_dense = false;
    std::size_t weight = 0;
    std::size_t bias = 0;
    Tensor input;
  };
  std::vector<Step> steps_;
};

}  // namespace ovmse
