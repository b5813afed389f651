#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gconv/attention.hpp"
#include "gconv/layers.hpp"
#include "gconv/tensor.hpp"

namespace gconv {

// Declarative architecture description; the single source of truth for
// building, counting, and profiling a model.
struct ModelConfig {
  std::size_t vocab_size = 30522;
  std::size_t max_positions = 512;
  std::size_t channels = 768;
  std::size_t num_blocks = 12;
  std::size_t num_heads = 12;
  std::size_t ffn_inner = 3072;
  std::size_t groups_qkv = 1;
  std::size_t groups_ffn1 = 1;
  std::size_t groups_ffn2 = 1;
  std::size_t groups_ffn3 = 1;
  double ln_eps = 1e-12;
  std::size_t num_classes = 2;
  double dropout_encoder = 0.0;
  double dropout_final = 0.0;

  void validate() const;  // ConfigError naming the offending field
  bool operator==(const ModelConfig&) const = default;
};

// Presets: "bert-base", "squeezebert", "tiny".
ModelConfig preset_config(const std::string& name);

// Tiny preset with the requested group count applied to the grouped layers
// (q/k/v, FFN2, FFN3; FFN1 stays dense, mirroring the squeezebert layout).
ModelConfig tiny_config(std::size_t groups);

// Flat "key = value" text form, '#' comments; unknown keys are errors.
ModelConfig parse_config_text(const std::string& text);
std::string config_to_text(const ModelConfig& config);
ModelConfig load_config_file(const std::filesystem::path& path);

struct EncoderBlockWeights {
  AttentionWeights attn;
  LayerWeights ffn1;  // C -> C, attention output projection
  LayerWeights ffn2;  // C -> C_ffn
  LayerWeights ffn3;  // C_ffn -> C
  LayerNormParams ln_attn;
  LayerNormParams ln_out;
};

// Treated as immutable after build_model/load; forward passes never mutate.
struct ModelWeights {
  EmbeddingTables embeddings;
  std::vector<EncoderBlockWeights> blocks;
  LayerWeights pooler;
  LayerWeights classifier;

  std::size_t channels() const { return embeddings.channels(); }
  std::size_t num_classes() const { return classifier.out_channels(); }
};

// Seeded deterministic initialization: truncated normal (std 0.02) kernels
// and embedding tables, zero biases, layer-norm gamma 1 / beta 0. Same
// (config, seed) gives bitwise-identical weights.
ModelWeights build_model(const ModelConfig& config, std::uint64_t seed);

// Structure with metadata but no tensor storage; checkpoint loading fills it.
ModelWeights model_skeleton(const ModelConfig& config);

// Stage labels for latency attribution. Layer norms, residual adds, and GELU
// are booked with the FFN stage; attention softmax with the attention
// matmuls, matching the table layout this artifact reproduces.
enum class Stage : std::size_t {
  kEmbedding = 0,
  kQkv = 1,
  kAttnMatmul = 2,
  kFfn = 3,
  kClassifier = 4,
};
inline constexpr std::size_t kNumStages = 5;
inline constexpr std::array<const char*, kNumStages> kStageNames = {
    "embedding", "qkv_fc", "attention_matmuls", "ffn_fc", "classifier"};

struct StageTimer {
  std::array<double, kNumStages> seconds{};
  void add(Stage stage, double elapsed) {
    seconds[static_cast<std::size_t>(stage)] += elapsed;
  }
};

// Training-mode dropout. Rates of zero make this a no-op; sampled masks end
// up in the ForwardCache so the backward pass can reuse them.
struct DropoutPlan {
  double encoder_rate = 0.0;   // attention probs and sublayer outputs
  double final_rate = 0.0;     // pooled features before the classifier
  std::uint64_t seed = 0;
};

struct BlockCache {
  Tensor input;        // x
  Tensor q, k, v;      // projections
  Tensor attn_concat;  // concatenated head outputs
  Tensor s1;           // ffn1(attn_concat), after dropout if active
  Tensor res_attn;     // x + s1
  Tensor h;            // ln_attn(res_attn)
  Tensor s2;           // ffn2(h)
  Tensor g;            // gelu(s2)
  Tensor s3;           // ffn3(g), after dropout if active
  Tensor res_out;      // h + s3
  Tensor output;       // ln_out(res_out)
  std::vector<Tensor> attn_prob_dropout;  // per head, empty when inactive
  Tensor s1_dropout, s3_dropout;          // empty when inactive
};

struct ForwardCache {
  Tensor embed_sum;  // pre-norm embedding sum
  Tensor x0;         // embedding output
  std::vector<BlockCache> blocks;
  Tensor features;    // position-0 row, 1 x C
  Tensor pooled_pre;  // pooler linear output
  Tensor pooled;      // tanh(pooled_pre), after final dropout if active
  Tensor final_dropout;  // empty when inactive
  Tensor logits;
};

// Post-LN residual block:
//   h   = ln_attn(x + ffn1(multi_head_attention(x)))
//   out = ln_out(h + ffn3(gelu(ffn2(h))))
Tensor encoder_block_forward(const Tensor& x, const EncoderBlockWeights& w,
                             const Tensor* mask = nullptr);

// embed -> num_blocks encoder blocks -> position-0 features -> pooler
// (dense + tanh) -> classifier dense -> logits (rank-1, num_classes).
Tensor forward(const ModelWeights& model, std::span<const int> token_ids,
               std::span<const int> segment_ids, const Tensor* mask = nullptr);

// Same computation with optional instrumentation; every plain entry point
// above routes through this.
Tensor forward_run(const ModelWeights& model, std::span<const int> token_ids,
                   std::span<const int> segment_ids, const Tensor* mask,
                   ForwardCache* cache, StageTimer* timer,
                   const DropoutPlan* dropout);

// Visits every parameter tensor as (name, tensor) in a fixed structural
// order. Names are stable and double as checkpoint keys and gradient keys.
template <typename Weights, typename Fn>
void for_each_parameter(Weights& model, Fn&& fn);

std::vector<std::pair<std::string, Shape>> parameter_shapes(
    const ModelConfig& config);

std::size_t total_parameter_count(const ModelWeights& model);

std::string block_param_prefix(std::size_t block_index);

// --- implementation of the visitor ---

template <typename Weights, typename Fn>
void for_each_parameter(Weights& model, Fn&& fn) {
  fn("embeddings.token_table", model.embeddings.token_table);
  fn("embeddings.position_table", model.embeddings.position_table);
  fn("embeddings.segment_table", model.embeddings.segment_table);
  fn("embeddings.norm.gamma", model.embeddings.norm.gamma);
  fn("embeddings.norm.beta", model.embeddings.norm.beta);
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    auto& block = model.blocks[b];
    const std::string prefix = block_param_prefix(b);
    fn(prefix + ".attn.q_proj.kernel", block.attn.q_proj.kernel);
    fn(prefix + ".attn.q_proj.bias", block.attn.q_proj.bias);
    fn(prefix + ".attn.k_proj.kernel", block.attn.k_proj.kernel);
    fn(prefix + ".attn.k_proj.bias", block.attn.k_proj.bias);
    fn(prefix + ".attn.v_proj.kernel", block.attn.v_proj.kernel);
    fn(prefix + ".attn.v_proj.bias", block.attn.v_proj.bias);
    fn(prefix + ".ffn1.kernel", block.ffn1.kernel);
    fn(prefix + ".ffn1.bias", block.ffn1.bias);
    fn(prefix + ".ffn2.kernel", block.ffn2.kernel);
    fn(prefix + ".ffn2.bias", block.ffn2.bias);
    fn(prefix + ".ffn3.kernel", block.ffn3.kernel);
    fn(prefix + ".ffn3.bias", block.ffn3.bias);
    fn(prefix + ".ln_attn.gamma", block.ln_attn.gamma);
    fn(prefix + ".ln_attn.beta", block.ln_attn.beta);
    fn(prefix + ".ln_out.gamma", block.ln_out.gamma);
    fn(prefix + ".ln_out.beta", block.ln_out.beta);
  }
  fn("pooler.kernel", model.pooler.kernel);
  fn("pooler.bias", model.pooler.bias);
  fn("classifier.kernel", model.classifier.kernel);
  fn("classifier.bias", model.classifier.bias);
}

}  // namespace gconv
