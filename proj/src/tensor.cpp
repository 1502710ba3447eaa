#include "ovmse/tensor.hpp"

#include <cmath>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "ovmse/errors.hpp"

namespace ovmse {

namespace {

// Learner updates allocate and release multi-megabyte tensors many times per
// second. With glibc defaults each one is a fresh mmap whose pages fault in
// on first touch; keeping them on the heap avoids that.
[[maybe_unused]] const bool kAllocatorTuned = [] {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  return true;
}();

}  // namespace

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {
  if (!std::isfinite(fill)) throw ConfigError("Tensor: non-finite fill value");
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw ConfigError("Tensor: shape " + shape_string() + " does not match " +
                      std::to_string(data_.size()) + " values");
  }
  if (!all_finite()) throw ConfigError("Tensor: non-finite entry at construction");
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ConfigError("Tensor::matrix: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

void Tensor::fill(double value) {
  for (auto& x : data_) x = value;
}

bool Tensor::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::string Tensor::shape_string() const {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) out << 'x';
    out << shape_[i];
  }
  out << ']';
  return out.str();
}

void debug_check_finite([[maybe_unused]] const Tensor& t, [[maybe_unused]] const char* where) {
#ifndef NDEBUG
  if (!t.all_finite()) throw NumericalError(std::string("non-finite output in ") + where);
#endif
}

namespace {

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw ConfigError(std::string(what) + " must be rank-2, got " + t.shape_string());
  }
}

}  // namespace

Tensor linear_forward(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_matrix(input, "linear input");
  require_matrix(weight, "linear weight");
  const std::size_t batch = input.rows();
  const std::size_t in = input.cols();
  const std::size_t out = weight.cols();
  if (weight.rows() != in || bias.size() != out) {
    throw ConfigError("linear_forward: shape mismatch input " + input.shape_string() +
                      " weight " + weight.shape_string() + " bias " + bias.shape_string());
  }
  Tensor result({batch, out});
  const double* w = weight.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    double* dst = result.row(b).data();
    for (std::size_t j = 0; j < out; ++j) dst[j] = bias[j];
    const double* src = input.row(b).data();
    for (std::size_t i = 0; i < in; ++i) {
      const double x = src[i];
      if (x == 0.0) continue;
      const double* wrow = w + i * out;
      for (std::size_t j = 0; j < out; ++j) dst[j] += x * wrow[j];
    }
  }
  debug_check_finite(result, "linear_forward");
  return result;
}

Tensor linear_backward(const Tensor& input, const Tensor& weight, const Tensor& out_grad,
                       Tensor& weight_grad, Tensor& bias_grad, bool want_input_grad) {
  const std::size_t batch = input.rows();
  const std::size_t in = input.cols();
  const std::size_t out = weight.cols();
  if (out_grad.rows() != batch || out_grad.cols() != out || weight_grad.size() != in * out ||
      bias_grad.size() != out) {
    throw ConfigError("linear_backward: shape mismatch");
  }
  Tensor input_grad;
  if (want_input_grad) input_grad = Tensor({batch, in});
  const double* w = weight.data().data();
  double* wg = weight_grad.data().data();
  double* bg = bias_grad.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    const double* g = out_grad.row(b).data();
    const double* x = input.row(b).data();
    for (std::size_t j = 0; j < out; ++j) bg[j] += g[j];
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      double* wgrow = wg + i * out;
      for (std::size_t j = 0; j < out; ++j) wgrow[j] += xi * g[j];
    }
    if (!want_input_grad) continue;
    double* dx = input_grad.row(b).data();
    for (std::size_t i = 0; i < in; ++i) {
      const double* wrow = w + i * out;
      double acc = 0.0;
      for (std::size_t j = 0; j < out; ++j) acc += g[j] * wrow[j];
      dx[i] = acc;
    }
  }
  if (want_input_grad) debug_check_finite(input_grad, "linear_backward");
  return input_grad;
}

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

Tensor elu_forward(const Tensor& pre) {
  Tensor out(pre.shape());
  for (std::size_t i = 0; i < pre.size(); ++i) out[i] = elu(pre[i]);
  return out;
}

Tensor elu_backward(const Tensor& pre, const Tensor& out_grad) {
  Tensor g(pre.shape());
  for (std::size_t i = 0; i < pre.size(); ++i) g[i] = out_grad[i] * elu_grad(pre[i]);
  return g;
}

}  // namespace ovmse
