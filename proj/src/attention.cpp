#include "gconv/attention.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "gconv/errors.hpp"

namespace gconv {

namespace {

constexpr double kMaskedScore = -1e9;

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + " shape mismatch: " +
                         shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

void check_mask(const Tensor* mask, std::size_t positions) {
  if (mask == nullptr) return;
  if (mask->rank() != 2 || mask->extent(0) != positions ||
      mask->extent(1) != positions) {
    throw DimensionError("attention mask must be P x P, got " +
                         shape_to_string(mask->shape()));
  }
}

// One head: softmax(Q K^T / sqrt(d_k) + mask) V. probs_out, when non-null,
// receives the pre-dropout attention probabilities.
Tensor attention_head(const Tensor& q, const Tensor& k, const Tensor& v,
                      const Tensor* mask, Tensor* probs_out,
                      const Tensor* prob_dropout) {
  const double inv_sqrt_dk =
      1.0 / std::sqrt(static_cast<double>(q.extent(1)));
  Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt_dk);
  if (mask != nullptr) scores = add(scores, *mask);
  Tensor probs = softmax_rows(scores);
  if (probs_out != nullptr) *probs_out = probs;
  if (prob_dropout != nullptr) {
    for (std::size_t i = 0; i < probs.size(); ++i) {
      probs.at(i) *= prob_dropout->at(i);
    }
  }
  return matmul(probs, v);
}

}  // namespace

void AttentionWeights::validate() const {
  q_proj.validate();
  k_proj.validate();
  v_proj.validate();
  const std::size_t c = q_proj.out_channels();
  if (k_proj.out_channels() != c || v_proj.out_channels() != c ||
      q_proj.in_channels() != c || k_proj.in_channels() != c ||
      v_proj.in_channels() != c) {
    throw ConfigError("attention projections must all be C -> C");
  }
  if (q_proj.groups != k_proj.groups || q_proj.groups != v_proj.groups) {
    throw ConfigError("q/k/v projections must share one group count");
  }
  if (q_proj.kernel_size != 1 || k_proj.kernel_size != 1 ||
      v_proj.kernel_size != 1) {
    throw ConfigError("attention projections must have kernel_size 1");
  }
  if (num_heads == 0 || c % num_heads != 0) {
    throw ConfigError("num_heads=" + std::to_string(num_heads) +
                      " must divide channels=" + std::to_string(c));
  }
}

Tensor slice_columns(const Tensor& x, std::size_t first, std::size_t count) {
  const std::size_t rows = x.extent(0);
  Tensor out({rows, count});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < count; ++j) {
      out.at(i, j) = x.at(i, first + j);
    }
  }
  return out;
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const Tensor* mask) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw DimensionError("scaled_dot_attention expects rank-2 Q, K, V");
  }
  check_same_shape(q, k, "scaled_dot_attention Q/K");
  check_same_shape(q, v, "scaled_dot_attention Q/V");
  check_mask(mask, q.extent(0));
  return attention_head(q, k, v, mask, nullptr, nullptr);
}

Tensor mha_combine(const Tensor& q, const Tensor& k, const Tensor& v,
                   std::size_t num_heads, const Tensor* mask,
                   std::vector<Tensor>* prob_sink,
                   const std::vector<Tensor>* prob_dropout) {
  const std::size_t positions = q.extent(0);
  const std::size_t channels = q.extent(1);
  const std::size_t dim = channels / num_heads;
  check_mask(mask, positions);
  Tensor out({positions, channels});
  for (std::size_t h = 0; h < num_heads; ++h) {
    const std::size_t base = h * dim;
    const Tensor qh = slice_columns(q, base, dim);
    const Tensor kh = slice_columns(k, base, dim);
    const Tensor vh = slice_columns(v, base, dim);
    Tensor probs;
    const Tensor ctx = attention_head(
        qh, kh, vh, mask, prob_sink != nullptr ? &probs : nullptr,
        prob_dropout != nullptr ? &(*prob_dropout)[h] : nullptr);
    if (prob_sink != nullptr) prob_sink->push_back(std::move(probs));
    for (std::size_t p = 0; p < positions; ++p) {
      for (std::size_t j = 0; j < dim; ++j) {
        out.at(p, base + j) = ctx.at(p, j);
      }
    }
  }
  return out;
}

Tensor multi_head_attention(const Tensor& f, const AttentionWeights& w,
                            const Tensor* mask) {
  w.validate();
  if (f.rank() != 2 || f.extent(1) != w.channels()) {
    throw DimensionError("multi_head_attention input " +
                         shape_to_string(f.shape()) + " does not match C=" +
                         std::to_string(w.channels()));
  }
  const Tensor q = grouped_conv1d(f, w.q_proj);
  const Tensor k = grouped_conv1d(f, w.k_proj);
  const Tensor v = grouped_conv1d(f, w.v_proj);
  return mha_combine(q, k, v, w.num_heads, mask);
}

Tensor padding_mask(std::size_t seq_len, std::size_t valid_len) {
  Tensor mask({seq_len, seq_len});
  for (std::size_t i = 0; i < seq_len; ++i) {
    for (std::size_t j = valid_len; j < seq_len; ++j) {
      mask.at(i, j) = kMaskedScore;
    }
  }
  return mask;
}

}  // namespace gconv
