#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ovmse {

// Dense row-major block of doubles. Rank is whatever the shape says, but
// every kernel in this library works on rank-1 or rank-2 tensors.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  // Throws ConfigError if the data length disagrees with the shape or if any
  // entry is non-finite.
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return data().subspan(r * cols(), cols()); }
  std::span<const double> row(std::size_t r) const {
    return data().subspan(r * cols(), cols());
  }

  void fill(double value);
  bool all_finite() const;
  std::string shape_string() const;

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

// Debug builds re-validate every kernel output; release builds skip it.
void debug_check_finite(const Tensor& t, const char* where);

// out[b,j] = sum_i input[b,i] * weight[i,j] + bias[j]
Tensor linear_forward(const Tensor& input, const Tensor& weight, const Tensor& bias);

// Backward of linear_forward. Accumulates into weight_grad / bias_grad and
// returns d(loss)/d(input), or an empty tensor when want_input_grad is false.
Tensor linear_backward(const Tensor& input, const Tensor& weight,
                       const Tensor& out_grad, Tensor& weight_grad, Tensor& bias_grad,
                       bool want_input_grad = true);

// ELU with alpha = 1: x for x > 0, exp(x) - 1 otherwise. Smooth, monotone.
Tensor elu_forward(const Tensor& pre);
Tensor elu_backward(const Tensor& pre, const Tensor& out_grad);

double elu(double x);
double elu_grad(double x);

}  // namespace ovmse
