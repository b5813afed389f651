#include "gconv/model.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string_view>

#include "gconv/errors.hpp"
#include "gconv/rng.hpp"

namespace gconv {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void require_divides(std::size_t groups, std::size_t channels,
                     const char* group_field, const char* channel_field) {
  if (groups == 0 || channels % groups != 0) {
    throw ConfigError(std::string(group_field) + "=" + std::to_string(groups) +
                      " must divide " + channel_field + "=" +
                      std::to_string(channels));
  }
}

void require_positive(std::size_t value, const char* field) {
  if (value == 0) {
    throw ConfigError(std::string(field) + " must be positive");
  }
}

void require_rate(double value, const char* field) {
  if (!(value >= 0.0 && value < 1.0)) {
    throw ConfigError(std::string(field) + " must lie in [0, 1)");
  }
}

LayerWeights skeleton_layer(std::size_t groups, std::size_t kernel_size = 1) {
  LayerWeights w;
  w.groups = groups;
  w.kernel_size = kernel_size;
  return w;
}

// Shared structure builder. With allocate=false only metadata (groups,
// kernel sizes, head count, eps) is set; tensors stay empty.
ModelWeights model_structure(const ModelConfig& config, bool allocate) {
  config.validate();
  const std::size_t c = config.channels;
  ModelWeights m;
  if (allocate) {
    m.embeddings.token_table = Tensor({config.vocab_size, c});
    m.embeddings.position_table = Tensor({config.max_positions, c});
    m.embeddings.segment_table = Tensor({2, c});
    m.embeddings.norm.gamma = Tensor({c});
    m.embeddings.norm.beta = Tensor({c});
  }
  m.embeddings.norm.eps = config.ln_eps;
  m.blocks.resize(config.num_blocks);
  for (auto& block : m.blocks) {
    if (allocate) {
      block.attn.q_proj = make_layer(c, c, config.groups_qkv);
      block.attn.k_proj = make_layer(c, c, config.groups_qkv);
      block.attn.v_proj = make_layer(c, c, config.groups_qkv);
      block.ffn1 = make_layer(c, c, config.groups_ffn1);
      block.ffn2 = make_layer(config.ffn_inner, c, config.groups_ffn2);
      block.ffn3 = make_layer(c, config.ffn_inner, config.groups_ffn3);
      block.ln_attn.gamma = Tensor({c});
      block.ln_attn.beta = Tensor({c});
      block.ln_out.gamma = Tensor({c});
      block.ln_out.beta = Tensor({c});
    } else {
      block.attn.q_proj = skeleton_layer(config.groups_qkv);
      block.attn.k_proj = skeleton_layer(config.groups_qkv);
      block.attn.v_proj = skeleton_layer(config.groups_qkv);
      block.ffn1 = skeleton_layer(config.groups_ffn1);
      block.ffn2 = skeleton_layer(config.groups_ffn2);
      block.ffn3 = skeleton_layer(config.groups_ffn3);
    }
    block.attn.num_heads = config.num_heads;
    block.ln_attn.eps = config.ln_eps;
    block.ln_out.eps = config.ln_eps;
  }
  if (allocate) {
    m.pooler = make_layer(c, c);
    m.classifier = make_layer(config.num_classes, c);
  } else {
    m.pooler = skeleton_layer(1);
    m.classifier = skeleton_layer(1);
  }
  return m;
}

void fill_truncated_normal(Tensor& t, Rng& rng, double stddev) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    t.at(i) = rng.next_truncated_normal(stddev);
  }
}

void fill_value(Tensor& t, double value) {
  for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = value;
}

struct DropoutCtx {
  double encoder_rate = 0.0;
  double final_rate = 0.0;
  Rng rng{0};

  bool encoder_active() const { return encoder_rate > 0.0; }
  bool final_active() const { return final_rate > 0.0; }

  Tensor sample_mask(Shape shape, double rate) {
    Tensor mask(std::move(shape));
    const double keep = 1.0 - rate;
    const double inv_keep = 1.0 / keep;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      mask.at(i) = rng.next_unit() < keep ? inv_keep : 0.0;
    }
    return mask;
  }
};

void apply_mask(Tensor& x, const Tensor& mask) {
  for (std::size_t i = 0; i < x.size(); ++i) x.at(i) *= mask.at(i);
}

Tensor block_forward(const Tensor& x, const EncoderBlockWeights& w,
                     const Tensor* mask, BlockCache* cache, StageTimer* timer,
                     DropoutCtx* dropout) {
  auto start = Clock::now();
  const Tensor q = grouped_conv1d(x, w.attn.q_proj);
  const Tensor k = grouped_conv1d(x, w.attn.k_proj);
  const Tensor v = grouped_conv1d(x, w.attn.v_proj);
  if (timer != nullptr) timer->add(Stage::kQkv, seconds_since(start));

  const bool drop_enc = dropout != nullptr && dropout->encoder_active();
  std::vector<Tensor> prob_masks;
  if (drop_enc) {
    const std::size_t positions = x.extent(0);
    prob_masks.reserve(w.attn.num_heads);
    for (std::size_t h = 0; h < w.attn.num_heads; ++h) {
      prob_masks.push_back(
          dropout->sample_mask({positions, positions}, dropout->encoder_rate));
    }
  }

  start = Clock::now();
  const Tensor attn = mha_combine(q, k, v, w.attn.num_heads, mask, nullptr,
                                  drop_enc ? &prob_masks : nullptr);
  if (timer != nullptr) timer->add(Stage::kAttnMatmul, seconds_since(start));

  start = Clock::now();
  Tensor s1 = grouped_conv1d(attn, w.ffn1);
  Tensor s1_mask;
  if (drop_enc) {
    s1_mask = dropout->sample_mask(s1.shape(), dropout->encoder_rate);
    apply_mask(s1, s1_mask);
  }
  const Tensor res_attn = add(x, s1);
  const Tensor h =
      layer_norm(res_attn, w.ln_attn.gamma, w.ln_attn.beta, w.ln_attn.eps);
  const Tensor s2 = grouped_conv1d(h, w.ffn2);
  const Tensor g = gelu(s2);
  Tensor s3 = grouped_conv1d(g, w.ffn3);
  Tensor s3_mask;
  if (drop_enc) {
    s3_mask = dropout->sample_mask(s3.shape(), dropout->encoder_rate);
    apply_mask(s3, s3_mask);
  }
  const Tensor res_out = add(h, s3);
  Tensor out = layer_norm(res_out, w.ln_out.gamma, w.ln_out.beta, w.ln_out.eps);
  if (timer != nullptr) timer->add(Stage::kFfn, seconds_since(start));

  if (cache != nullptr) {
    cache->input = x;
    cache->q = q;
    cache->k = k;
    cache->v = v;
    cache->attn_concat = attn;
    cache->s1 = s1;
    cache->res_attn = res_attn;
    cache->h = h;
    cache->s2 = s2;
    cache->g = g;
    cache->s3 = s3;
    cache->res_out = res_out;
    cache->output = out;
    cache->attn_prob_dropout = std::move(prob_masks);
    cache->s1_dropout = std::move(s1_mask);
    cache->s3_dropout = std::move(s3_mask);
  }
  return out;
}

std::size_t parse_size_value(std::string_view value, const std::string& key) {
  std::size_t out = 0;
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last) {
    throw ConfigError("invalid integer for key '" + key + "': " +
                      std::string(value));
  }
  return out;
}

double parse_double_value(std::string_view value, const std::string& key) {
  try {
    std::size_t consumed = 0;
    const std::string text(value);
    const double out = std::stod(text, &consumed);
    if (consumed != text.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("invalid number for key '" + key + "': " +
                      std::string(value));
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                        s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::string format_double(double value) {
  std::ostringstream out;
  out.precision(17);
  out << value;
  return out.str();
}

}  // namespace

void ModelConfig::validate() const {
  require_positive(vocab_size, "vocab_size");
  require_positive(max_positions, "max_positions");
  require_positive(channels, "channels");
  require_positive(num_blocks, "num_blocks");
  require_positive(ffn_inner, "ffn_inner");
  require_positive(num_classes, "num_classes");
  if (num_heads == 0 || channels % num_heads != 0) {
    throw ConfigError("num_heads=" + std::to_string(num_heads) +
                      " must divide channels=" + std::to_string(channels));
  }
  require_divides(groups_qkv, channels, "groups_qkv", "channels");
  require_divides(groups_ffn1, channels, "groups_ffn1", "channels");
  require_divides(groups_ffn2, channels, "groups_ffn2", "channels");
  require_divides(groups_ffn2, ffn_inner, "groups_ffn2", "ffn_inner");
  require_divides(groups_ffn3, ffn_inner, "groups_ffn3", "ffn_inner");
  require_divides(groups_ffn3, channels, "groups_ffn3", "channels");
  if (!(ln_eps > 0.0)) {
    throw ConfigError("ln_eps must be positive");
  }
  require_rate(dropout_encoder, "dropout_encoder");
  require_rate(dropout_final, "dropout_final");
}

ModelConfig preset_config(const std::string& name) {
  ModelConfig config;  // defaults are BERT-base
  if (name == "bert-base") {
    return config;
  }
  if (name == "squeezebert") {
    config.groups_qkv = 4;
    config.groups_ffn1 = 1;
    config.groups_ffn2 = 4;
    config.groups_ffn3 = 4;
    return config;
  }
  if (name == "tiny") {
    return tiny_config(1);
  }
  throw ConfigError("unknown preset '" + name +
                    "'; available: bert-base, squeezebert, tiny");
}

ModelConfig tiny_config(std::size_t groups) {
  ModelConfig config;
  config.vocab_size = 64;
  config.max_positions = 16;
  config.channels = 8;
  config.num_blocks = 2;
  config.num_heads = 2;
  config.ffn_inner = 32;
  config.groups_qkv = groups;
  config.groups_ffn1 = 1;
  config.groups_ffn2 = groups;
  config.groups_ffn3 = groups;
  config.validate();
  return config;
}

ModelConfig parse_config_text(const std::string& text) {
  ModelConfig config;
  std::set<std::string> seen;
  std::istringstream stream(text);
  std::string raw_line;
  std::size_t line_no = 0;
  while (std::getline(stream, raw_line)) {
    ++line_no;
    std::string_view line = trim(raw_line);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        " is not 'key = value': " + raw_line);
    }
    const std::string key{trim(line.substr(0, eq))};
    const std::string_view value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) {
      throw ConfigError("duplicate config key '" + key + "'");
    }
    if (key == "vocab_size") {
      config.vocab_size = parse_size_value(value, key);
    } else if (key == "max_positions") {
      config.max_positions = parse_size_value(value, key);
    } else if (key == "channels") {
      config.channels = parse_size_value(value, key);
    } else if (key == "num_blocks") {
      config.num_blocks = parse_size_value(value, key);
    } else if (key == "num_heads") {
      config.num_heads = parse_size_value(value, key);
    } else if (key == "ffn_inner") {
      config.ffn_inner = parse_size_value(value, key);
    } else if (key == "groups_qkv") {
      config.groups_qkv = parse_size_value(value, key);
    } else if (key == "groups_ffn1") {
      config.groups_ffn1 = parse_size_value(value, key);
    } else if (key == "groups_ffn2") {
      config.groups_ffn2 = parse_size_value(value, key);
    } else if (key == "groups_ffn3") {
      config.groups_ffn3 = parse_size_value(value, key);
    } else if (key == "ln_eps") {
      config.ln_eps = parse_double_value(value, key);
    } else if (key == "num_classes") {
      config.num_classes = parse_size_value(value, key);
    } else if (key == "dropout_encoder") {
      config.dropout_encoder = parse_double_value(value, key);
    } else if (key == "dropout_final") {
      config.dropout_final = parse_double_value(value, key);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  config.validate();
  return config;
}

std::string config_to_text(const ModelConfig& config) {
  std::ostringstream out;
  out << "vocab_size = " << config.vocab_size << "\n"
      << "max_positions = " << config.max_positions << "\n"
      << "channels = " << config.channels << "\n"
      << "num_blocks = " << config.num_blocks << "\n"
      << "num_heads = " << config.num_heads << "\n"
      << "ffn_inner = " << config.ffn_inner << "\n"
      << "groups_qkv = " << config.groups_qkv << "\n"
      << "groups_ffn1 = " << config.groups_ffn1 << "\n"
      << "groups_ffn2 = " << config.groups_ffn2 << "\n"
      << "groups_ffn3 = " << config.groups_ffn3 << "\n"
      << "ln_eps = " << format_double(config.ln_eps) << "\n"
      << "num_classes = " << config.num_classes << "\n"
      << "dropout_encoder = " << format_double(config.dropout_encoder) << "\n"
      << "dropout_final = " << format_double(config.dropout_final) << "\n";
  return out.str();
}

ModelConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw StorageError("cannot open config file: " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

ModelWeights build_model(const ModelConfig& config, std::uint64_t seed) {
  ModelWeights m = model_structure(config, true);
  Rng rng(seed);
  constexpr double kInitStd = 0.02;
  fill_truncated_normal(m.embeddings.token_table, rng, kInitStd);
  fill_truncated_normal(m.embeddings.position_table, rng, kInitStd);
  fill_truncated_normal(m.embeddings.segment_table, rng, kInitStd);
  fill_value(m.embeddings.norm.gamma, 1.0);
  for (auto& block : m.blocks) {
    fill_truncated_normal(block.attn.q_proj.kernel, rng, kInitStd);
    fill_truncated_normal(block.attn.k_proj.kernel, rng, kInitStd);
    fill_truncated_normal(block.attn.v_proj.kernel, rng, kInitStd);
    fill_truncated_normal(block.ffn1.kernel, rng, kInitStd);
    fill_truncated_normal(block.ffn2.kernel, rng, kInitStd);
    fill_truncated_normal(block.ffn3.kernel, rng, kInitStd);
    fill_value(block.ln_attn.gamma, 1.0);
    fill_value(block.ln_out.gamma, 1.0);
  }
  fill_truncated_normal(m.pooler.kernel, rng, kInitStd);
  fill_truncated_normal(m.classifier.kernel, rng, kInitStd);
  return m;
}

ModelWeights model_skeleton(const ModelConfig& config) {
  return model_structure(config, false);
}

Tensor encoder_block_forward(const Tensor& x, const EncoderBlockWeights& w,
                             const Tensor* mask) {
  return block_forward(x, w, mask, nullptr, nullptr, nullptr);
}

Tensor forward(const ModelWeights& model, std::span<const int> token_ids,
               std::span<const int> segment_ids, const Tensor* mask) {
  return forward_run(model, token_ids, segment_ids, mask, nullptr, nullptr,
                     nullptr);
}

Tensor forward_run(const ModelWeights& model, std::span<const int> token_ids,
                   std::span<const int> segment_ids, const Tensor* mask,
                   ForwardCache* cache, StageTimer* timer,
                   const DropoutPlan* dropout) {
  DropoutCtx ctx;
  DropoutCtx* ctx_ptr = nullptr;
  if (dropout != nullptr &&
      (dropout->encoder_rate > 0.0 || dropout->final_rate > 0.0)) {
    ctx.encoder_rate = dropout->encoder_rate;
    ctx.final_rate = dropout->final_rate;
    ctx.rng = Rng(derive_seed(dropout->seed, 0xD20));
    ctx_ptr = &ctx;
  }

  auto start = Clock::now();
  const Tensor presum = embed_presum(token_ids, segment_ids, model.embeddings);
  Tensor x = layer_norm(presum, model.embeddings.norm.gamma,
                        model.embeddings.norm.beta, model.embeddings.norm.eps);
  if (timer != nullptr) timer->add(Stage::kEmbedding, seconds_since(start));
  if (cache != nullptr) {
    cache->embed_sum = presum;
    cache->x0 = x;
    cache->blocks.assign(model.blocks.size(), BlockCache{});
  }

  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    x = block_forward(x, model.blocks[b], mask,
                      cache != nullptr ? &cache->blocks[b] : nullptr, timer,
                      ctx_ptr);
  }

  start = Clock::now();
  const std::size_t channels = model.channels();
  Tensor features({1, channels});
  for (std::size_t c = 0; c < channels; ++c) features.at(0, c) = x.at(0, c);
  const Tensor pooled_pre = positionwise_fc(features, model.pooler);
  Tensor pooled = tanh_elementwise(pooled_pre);
  Tensor final_mask;
  if (ctx_ptr != nullptr && ctx_ptr->final_active()) {
    final_mask = ctx_ptr->sample_mask(pooled.shape(), ctx_ptr->final_rate);
    apply_mask(pooled, final_mask);
  }
  const Tensor logits_row = positionwise_fc(pooled, model.classifier);
  Tensor logits({model.num_classes()});
  for (std::size_t c = 0; c < logits.size(); ++c) {
    logits.at(c) = logits_row.at(0, c);
  }
  if (timer != nullptr) timer->add(Stage::kClassifier, seconds_since(start));

  if (cache != nullptr) {
    cache->features = features;
    cache->pooled_pre = pooled_pre;
    cache->pooled = pooled;
    cache->final_dropout = std::move(final_mask);
    cache->logits = logits;
  }
  return logits;
}

std::string block_param_prefix(std::size_t block_index) {
  std::string number = std::to_string(block_index);
  if (number.size() < 2) number.insert(number.begin(), '0');
  return "block_" + number;
}

std::vector<std::pair<std::string, Shape>> parameter_shapes(
    const ModelConfig& config) {
  config.validate();
  const std::size_t c = config.channels;
  std::vector<std::pair<std::string, Shape>> shapes;
  shapes.emplace_back("embeddings.token_table", Shape{config.vocab_size, c});
  shapes.emplace_back("embeddings.position_table",
                      Shape{config.max_positions, c});
  shapes.emplace_back("embeddings.segment_table", Shape{2, c});
  shapes.emplace_back("embeddings.norm.gamma", Shape{c});
  shapes.emplace_back("embeddings.norm.beta", Shape{c});
  for (std::size_t b = 0; b < config.num_blocks; ++b) {
    const std::string prefix = block_param_prefix(b);
    const Shape qkv_kernel{c, c / config.groups_qkv, 1};
    shapes.emplace_back(prefix + ".attn.q_proj.kernel", qkv_kernel);
    shapes.emplace_back(prefix + ".attn.q_proj.bias", Shape{c});
    shapes.emplace_back(prefix + ".attn.k_proj.kernel", qkv_kernel);
    shapes.emplace_back(prefix + ".attn.k_proj.bias", Shape{c});
    shapes.emplace_back(prefix + ".attn.v_proj.kernel", qkv_kernel);
    shapes.emplace_back(prefix + ".attn.v_proj.bias", Shape{c});
    shapes.emplace_back(prefix + ".ffn1.kernel",
                        Shape{c, c / config.groups_ffn1, 1});
    shapes.emplace_back(prefix + ".ffn1.bias", Shape{c});
    shapes.emplace_back(prefix + ".ffn2.kernel",
                        Shape{config.ffn_inner, c / config.groups_ffn2, 1});
    shapes.emplace_back(prefix + ".ffn2.bias", Shape{config.ffn_inner});
    shapes.emplace_back(prefix + ".ffn3.kernel",
                        Shape{c, config.ffn_inner / config.groups_ffn3, 1});
    shapes.emplace_back(prefix + ".ffn3.bias", Shape{c});
    shapes.emplace_back(prefix + ".ln_attn.gamma", Shape{c});
    shapes.emplace_back(prefix + ".ln_attn.beta", Shape{c});
    shapes.emplace_back(prefix + ".ln_out.gamma", Shape{c});
    shapes.emplace_back(prefix + ".ln_out.beta", Shape{c});
  }
  shapes.emplace_back("pooler.kernel", Shape{c, c, 1});
  shapes.emplace_back("pooler.bias", Shape{c});
  shapes.emplace_back("classifier.kernel", Shape{config.num_classes, c, 1});
  shapes.emplace_back("classifier.bias", Shape{config.num_classes});
  return shapes;
}

std::size_t total_parameter_count(const ModelWeights& model) {
  std::size_t total = 0;
  for_each_parameter(model, [&total](const std::string&, const Tensor& t) {
    total += t.size();
  });
  return total;
}

}  // namespace gconv
