#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace gconv {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

// Dense rank-1..3 array of doubles in row-major order. Every operation in
// this library is a pure function over these values; nothing mutates its
// arguments, so tensors can be shared across threads for reading.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);                     // zero-filled
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_[axis]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& at(std::size_t i) { return data_[i]; }
  double at(std::size_t i) const { return data_[i]; }
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  Shape shape_;
  std::vector<double> data_;
};

// c[p,n] = sum_m a[p,m] * b[m,n], accumulated left-to-right in m for every
// output element (bitwise-reproducible).
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& x);  // rank-2

// Row-wise softmax with max subtraction; each output row sums to 1.
Tensor softmax_rows(const Tensor& x);

// Exact Gaussian-CDF GELU: x * Phi(x).
double gelu_scalar(double x);
double gelu_grad_scalar(double x);
Tensor gelu(const Tensor& x);

// Per-row normalization with biased variance, then affine scale/shift.
// x is P x C; gamma and beta are length-C vectors.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps);

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor tanh_elementwise(const Tensor& x);

bool all_finite(const Tensor& x);
bool bitwise_equal(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace gconv
