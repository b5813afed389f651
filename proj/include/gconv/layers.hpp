#pragma once

#include <cstddef>
#include <span>

#include "gconv/tensor.hpp"

namespace gconv {

// Weights of one (grouped) 1D convolution layer. The kernel layout is
// (C_out, C_in/G, K), so with G=1 and K=1 the kernel is a plain C_out x C_in
// matrix. Bias is always per-output-channel.
struct LayerWeights {
  Tensor kernel;
  Tensor bias;
  std::size_t groups = 1;
  std::size_t kernel_size = 1;

  std::size_t out_channels() const { return kernel.extent(0); }
  std::size_t in_channels() const { return kernel.extent(1) * groups; }

  // Throws ConfigError if G does not divide the channel counts, K is even,
  // or the tensor extents disagree with (groups, kernel_size).
  void validate() const;
};

// Zero-initialized layer with consistent extents.
LayerWeights make_layer(std::size_t c_out, std::size_t c_in,
                        std::size_t groups = 1, std::size_t kernel_size = 1);

// Group that owns output channel c_out: floor(c_out * G / C_out).
// Output channels form G contiguous equal blocks, as do input channels.
std::size_t group_of_output_channel(std::size_t c_out, std::size_t groups,
                                    std::size_t total_out);

// out[p,c] = sum_i w[c,i] * f[p,i] + bias[c], every position independent.
// Requires G=1, K=1.
Tensor positionwise_fc(const Tensor& f, const LayerWeights& w);

// out[p,c] = sum_i sum_k w[c,i,k] * f[p-(K-1)/2+k, i] + bias[c], positions
// outside [0,P) read as zero. Requires G=1.
Tensor conv1d(const Tensor& f, const LayerWeights& w);

// Grouped convolution: output channel c in group g reads only input channels
// [g*C_in/G, (g+1)*C_in/G); within a group this is an ordinary conv1d with
// independent weights.
Tensor grouped_conv1d(const Tensor& f, const LayerWeights& w);

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-12;
};

struct EmbeddingTables {
  Tensor token_table;     // V x C
  Tensor position_table;  // P_max x C
  Tensor segment_table;   // 2 x C
  LayerNormParams norm;

  std::size_t vocab_size() const { return token_table.extent(0); }
  std::size_t max_positions() const { return position_table.extent(0); }
  std::size_t channels() const { return token_table.extent(1); }
};

// Row p = layer_norm(token_table[id_p] + position_table[p] +
// segment_table[seg_p]). Out-of-range ids raise IndexError naming the
// offending position.
Tensor embed(std::span<const int> token_ids, std::span<const int> segment_ids,
             const EmbeddingTables& tables);

// The pre-norm lookup sum; embed() is layer_norm over this. The backward
// pass needs the pre-norm value to differentiate through the embedding norm.
Tensor embed_presum(std::span<const int> token_ids,
                    std::span<const int> segment_ids,
                    const EmbeddingTables& tables);

}  // namespace gconv
