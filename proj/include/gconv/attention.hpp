#pragma once

#include <cstddef>

#include "gconv/layers.hpp"
#include "gconv/tensor.hpp"

namespace gconv {

// Q/K/V projections are C -> C grouped convolutions with K=1 sharing one
// group count. Heads are contiguous channel slices of width head_dim.
struct AttentionWeights {
  LayerWeights q_proj;
  LayerWeights k_proj;
  LayerWeights v_proj;
  std::size_t num_heads = 1;

  std::size_t channels() const { return q_proj.out_channels(); }
  std::size_t head_dim() const { return channels() / num_heads; }
  void validate() const;
};

// softmax(Q K^T / sqrt(d_k) + mask) V for one head. The mask, when present,
// is additive pre-softmax (0 for visible, about -1e9 for padded keys).
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const Tensor* mask = nullptr);

// Projects f through q/k/v, runs scaled_dot_attention per head, and
// concatenates head outputs in channel order. No output projection here:
// in this architecture the dense layer after attention is FFN1, owned by the
// encoder block.
Tensor multi_head_attention(const Tensor& f, const AttentionWeights& w,
                            const Tensor* mask = nullptr);

// Additive key-padding mask: 0 for key positions < valid_len, -1e9 beyond.
Tensor padding_mask(std::size_t seq_len, std::size_t valid_len);

// Internal combine step shared by multi_head_attention and the instrumented
// model forward; prob_sink, when non-null, receives the P x P attention
// probabilities of each head.
Tensor mha_combine(const Tensor& q, const Tensor& k, const Tensor& v,
                   std::size_t num_heads, const Tensor* mask,
                   std::vector<Tensor>* prob_sink = nullptr,
                   const std::vector<Tensor>* prob_dropout = nullptr);

Tensor slice_columns(const Tensor& x, std::size_t first, std::size_t count);

}  // namespace gconv
