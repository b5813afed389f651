#include "gconv/layers.hpp"

#include <string>
#include <vector>

#include "gconv/errors.hpp"

namespace gconv {

namespace {

void check_input_channels(const Tensor& f, const LayerWeights& w,
                          const char* what) {
  if (f.rank() != 2) {
    throw DimensionError(std::string(what) + " expects P x C_in input, got " +
                         shape_to_string(f.shape()));
  }
  if (f.extent(1) != w.in_channels()) {
    throw DimensionError(std::string(what) + " channel mismatch: input " +
                         shape_to_string(f.shape()) + " vs weights expecting " +
                         std::to_string(w.in_channels()) + " channels");
  }
}

// K=1 path used by every layer of the models here; per output element the
// accumulation order over input channels is ascending, identical to the
// literal loops below.
Tensor grouped_conv1d_k1(const Tensor& f, const LayerWeights& w) {
  const std::size_t positions = f.extent(0);
  const std::size_t groups = w.groups;
  const std::size_t c_out = w.out_channels();
  const std::size_t cig = w.kernel.extent(1);    // C_in / G
  const std::size_t cog = c_out / groups;        // C_out / G
  const std::size_t c_in = f.extent(1);

  std::vector<double> kernel_t(c_out * cig);     // (G, C_in/G, C_out/G)
  const double* kd = w.kernel.data();
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t j = 0; j < cog; ++j) {
      for (std::size_t i = 0; i < cig; ++i) {
        kernel_t[(g * cig + i) * cog + j] = kd[(g * cog + j) * cig + i];
      }
    }
  }

  Tensor out({positions, c_out});
  for (std::size_t p = 0; p < positions; ++p) {
    const double* frow = f.data() + p * c_in;
    double* orow = out.data() + p * c_out;
    for (std::size_t g = 0; g < groups; ++g) {
      const double* fg = frow + g * cig;
      double* og = orow + g * cog;
      for (std::size_t i = 0; i < cig; ++i) {
        const double a = fg[i];
        const double* wrow = kernel_t.data() + (g * cig + i) * cog;
        for (std::size_t j = 0; j < cog; ++j) {
          og[j] += a * wrow[j];
        }
      }
    }
    for (std::size_t c = 0; c < c_out; ++c) {
      orow[c] += w.bias.at(c);
    }
  }
  return out;
}

}  // namespace

void LayerWeights::validate() const {
  if (kernel.rank() != 3) {
    throw ConfigError("layer kernel must have shape (C_out, C_in/G, K), got " +
                      shape_to_string(kernel.shape()));
  }
  if (bias.rank() != 1 || bias.extent(0) != kernel.extent(0)) {
    throw ConfigError("layer bias must have length C_out=" +
                      std::to_string(kernel.extent(0)));
  }
  if (groups == 0) {
    throw ConfigError("groups must be positive");
  }
  if (kernel_size == 0 || kernel_size % 2 == 0) {
    throw ConfigError("kernel_size must be odd, got " +
                      std::to_string(kernel_size));
  }
  if (kernel.extent(2) != kernel_size) {
    throw ConfigError("kernel extent " + std::to_string(kernel.extent(2)) +
                      " does not match kernel_size " +
                      std::to_string(kernel_size));
  }
  if (kernel.extent(0) % groups != 0) {
    throw ConfigError("groups=" + std::to_string(groups) +
                      " does not divide C_out=" +
                      std::to_string(kernel.extent(0)));
  }
  // kernel extent 1 is C_in/G by construction; in_channels() = extent * G is
  // divisible by G automatically, so only C_out needs the explicit check.
}

LayerWeights make_layer(std::size_t c_out, std::size_t c_in,
                        std::size_t groups, std::size_t kernel_size) {
  if (groups == 0 || c_in % groups != 0 || c_out % groups != 0) {
    throw ConfigError("groups=" + std::to_string(groups) +
                      " must divide C_in=" + std::to_string(c_in) +
                      " and C_out=" + std::to_string(c_out));
  }
  LayerWeights w;
  w.kernel = Tensor({c_out, c_in / groups, kernel_size});
  w.bias = Tensor({c_out});
  w.groups = groups;
  w.kernel_size = kernel_size;
  w.validate();
  return w;
}

std::size_t group_of_output_channel(std::size_t c_out, std::size_t groups,
                                    std::size_t total_out) {
  return c_out * groups / total_out;
}

Tensor positionwise_fc(const Tensor& f, const LayerWeights& w) {
  w.validate();
  if (w.groups != 1 || w.kernel_size != 1) {
    throw ConfigError("positionwise_fc requires G=1, K=1 weights");
  }
  check_input_channels(f, w, "positionwise_fc");
  const std::size_t positions = f.extent(0);
  const std::size_t c_in = f.extent(1);
  const std::size_t c_out = w.out_channels();
  Tensor out({positions, c_out});
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t c = 0; c < c_out; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < c_in; ++i) {
        acc += w.kernel.at(c, i, 0) * f.at(p, i);
      }
      out.at(p, c) = acc + w.bias.at(c);
    }
  }
  return out;
}

Tensor conv1d(const Tensor& f, const LayerWeights& w) {
  w.validate();
  if (w.groups != 1) {
    throw ConfigError("conv1d requires G=1 weights; use grouped_conv1d");
  }
  check_input_channels(f, w, "conv1d");
  const std::size_t positions = f.extent(0);
  const std::size_t c_in = f.extent(1);
  const std::size_t c_out = w.out_channels();
  const std::size_t k_size = w.kernel_size;
  const std::ptrdiff_t offset = static_cast<std::ptrdiff_t>((k_size - 1) / 2);
  Tensor out({positions, c_out});
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t c = 0; c < c_out; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < c_in; ++i) {
        for (std::size_t k = 0; k < k_size; ++k) {
          const std::ptrdiff_t q =
              static_cast<std::ptrdiff_t>(p + k) - offset;
          if (q < 0 || q >= static_cast<std::ptrdiff_t>(positions)) continue;
          acc += w.kernel.at(c, i, k) * f.at(static_cast<std::size_t>(q), i);
        }
      }
      out.at(p, c) = acc + w.bias.at(c);
    }
  }
  return out;
}

Tensor grouped_conv1d(const Tensor& f, const LayerWeights& w) {
  w.validate();
  check_input_channels(f, w, "grouped_conv1d");
  if (f.extent(1) % w.groups != 0) {
    throw ConfigError("groups=" + std::to_string(w.groups) +
                      " does not divide C_in=" + std::to_string(f.extent(1)));
  }
  if (w.kernel_size == 1) {
    return grouped_conv1d_k1(f, w);
  }
  const std::size_t positions = f.extent(0);
  const std::size_t c_out = w.out_channels();
  const std::size_t cig = w.kernel.extent(1);
  const std::size_t k_size = w.kernel_size;
  const std::ptrdiff_t offset = static_cast<std::ptrdiff_t>((k_size - 1) / 2);
  Tensor out({positions, c_out});
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t c = 0; c < c_out; ++c) {
      const std::size_t g = group_of_output_channel(c, w.groups, c_out);
      const std::size_t in_base = g * cig;
      double acc = 0.0;
      for (std::size_t i = 0; i < cig; ++i) {
        for (std::size_t k = 0; k < k_size; ++k) {
          const std::ptrdiff_t q =
              static_cast<std::ptrdiff_t>(p + k) - offset;
          if (q < 0 || q >= static_cast<std::ptrdiff_t>(positions)) continue;
          acc += w.kernel.at(c, i, k) *
                 f.at(static_cast<std::size_t>(q), in_base + i);
        }
      }
      out.at(p, c) = acc + w.bias.at(c);
    }
  }
  return out;
}

Tensor embed(std::span<const int> token_ids, std::span<const int> segment_ids,
             const EmbeddingTables& tables) {
  const Tensor sum = embed_presum(token_ids, segment_ids, tables);
  return layer_norm(sum, tables.norm.gamma, tables.norm.beta,
                    tables.norm.eps);
}

Tensor embed_presum(std::span<const int> token_ids,
                    std::span<const int> segment_ids,
                    const EmbeddingTables& tables) {
  if (token_ids.size() != segment_ids.size()) {
    throw DimensionError("token/segment id lengths differ: " +
                         std::to_string(token_ids.size()) + " vs " +
                         std::to_string(segment_ids.size()));
  }
  if (token_ids.empty()) {
    throw DimensionError("embed requires at least one position");
  }
  const std::size_t positions = token_ids.size();
  const std::size_t channels = tables.channels();
  if (positions > tables.max_positions()) {
    throw IndexError("sequence length " + std::to_string(positions) +
                     " exceeds max positions " +
                     std::to_string(tables.max_positions()));
  }
  Tensor sum({positions, channels});
  for (std::size_t p = 0; p < positions; ++p) {
    const int token = token_ids[p];
    const int segment = segment_ids[p];
    if (token < 0 ||
        static_cast<std::size_t>(token) >= tables.vocab_size()) {
      throw IndexError("token id " + std::to_string(token) +
                       " out of range at position " + std::to_string(p));
    }
    if (segment < 0 || segment > 1) {
      throw IndexError("segment id " + std::to_string(segment) +
                       " out of range at position " + std::to_string(p));
    }
    for (std::size_t c = 0; c < channels; ++c) {
      sum.at(p, c) = tables.token_table.at(static_cast<std::size_t>(token), c) +
                     tables.position_table.at(p, c) +
                     tables.segment_table.at(static_cast<std::size_t>(segment), c);
    }
  }
  return sum;
}

}  // namespace gconv
