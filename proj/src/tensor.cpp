#include "gconv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "gconv/errors.hpp"

namespace gconv {

namespace {

std::size_t checked_element_count(const Shape& shape) {
  if (shape.empty() || shape.size() > 3) {
    throw DimensionError("tensor rank must be 1..3, got rank " +
                         std::to_string(shape.size()));
  }
  std::size_t n = 1;
  for (std::size_t extent : shape) {
    if (extent == 0) {
      throw DimensionError("tensor extents must be positive, got shape " +
                           shape_to_string(shape));
    }
    n *= extent;
  }
  return n;
}

void require_rank(const Tensor& x, std::size_t rank, const char* what) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(what) + " expects rank-" +
                         std::to_string(rank) + " tensor, got shape " +
                         shape_to_string(x.shape()));
  }
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += "x";
    out += std::to_string(shape[i]);
  }
  out += ")";
  return out;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  data_.assign(checked_element_count(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_element_count(shape_) != data_.size()) {
    throw DimensionError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_to_string(shape_));
  }
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul lhs");
  require_rank(b, 2, "matmul rhs");
  if (a.extent(1) != b.extent(0)) {
    throw DimensionError("matmul shape mismatch: " +
                         shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  const std::size_t rows = a.extent(0);
  const std::size_t inner = a.extent(1);
  const std::size_t cols = b.extent(1);
  Tensor c({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    const double* arow = a.data() + i * inner;
    double* crow = c.data() + i * cols;
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = arow[k];
      const double* brow = b.data() + k * cols;
      for (std::size_t j = 0; j < cols; ++j) {
        crow[j] += aik * brow[j];
      }
    }
  }
  return c;
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t rows = x.extent(0);
  const std::size_t cols = x.extent(1);
  Tensor t({cols, rows});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      t.at(j, i) = x.at(i, j);
    }
  }
  return t;
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t rows = x.extent(0);
  const std::size_t cols = x.extent(1);
  Tensor y({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    const double* in = x.data() + i * cols;
    double* out = y.data() + i * cols;
    double m = in[0];
    for (std::size_t j = 1; j < cols; ++j) m = std::max(m, in[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      out[j] = std::exp(in[j] - m);
      sum += out[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < cols; ++j) out[j] *= inv;
  }
  return y;
}

double gelu_scalar(double x) {
  return x * 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 * 0.5));
}

double gelu_grad_scalar(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 * 0.5));
  const double pdf =
      std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Tensor gelu(const Tensor& x) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y.at(i) = gelu_scalar(y.at(i));
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  require_rank(x, 2, "layer_norm");
  require_rank(gamma, 1, "layer_norm gamma");
  require_rank(beta, 1, "layer_norm beta");
  const std::size_t rows = x.extent(0);
  const std::size_t cols = x.extent(1);
  if (gamma.extent(0) != cols || beta.extent(0) != cols) {
    throw DimensionError("layer_norm parameter length does not match " +
                         shape_to_string(x.shape()));
  }
  if (!(eps > 0.0)) {
    throw ValidationError("layer_norm eps must be positive");
  }
  Tensor y({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    const double* in = x.data() + i * cols;
    double* out = y.data() + i * cols;
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += in[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double d = in[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) {
      out[j] = gamma.at(j) * ((in[j] - mean) * inv_std) + beta.at(j);
    }
  }
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("add shape mismatch: " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.at(i) += b.at(i);
  return c;
}

Tensor scale(const Tensor& x, double factor) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y.at(i) *= factor;
  return y;
}

Tensor tanh_elementwise(const Tensor& x) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y.at(i) = std::tanh(y.at(i));
  return y;
}

bool all_finite(const Tensor& x) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x.at(i))) return false;
  }
  return true;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("max_abs_diff shape mismatch: " +
                         shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a.at(i) - b.at(i)));
  }
  return m;
}

}  // namespace gconv
