// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "gacd/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gacd/error.hpp"

namespace gacd {

namespace {

constexpr char kMagic[8] = {'G', 'A', 'C', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::size_t kTensorsPerLayer = 12;
constexpr std::size_t kLeadingTensors = 3;  // token, position, projector

struct BoundLayer {
  Var ln1_gain, ln1_bias, w_qkv, b_qkv, w_attn_out, b_attn_out;
  Var ln2_gain, ln2_bias, w_fc1, b_fc1, w_fc2, b_fc2;
};

struct Bound {
  Var token_embedding, position_embedding, visual_projector;
  std::vector<BoundLayer> layers;
  Var final_gain, final_bias, w_out, b_out;
  std::vector<Var> all;  // named() order; only filled when trainable
};

/// Records the weights on `tape`. Inference binds only what the transformer
/// body and output head need; training binds everything as leaves.
Bound bind(Tape& tape, const ModelParams& p, bool trainable) {
  Bound b;
  auto put = [&](const Tensor& t) {
    Var v = trainable ? tape.leaf(t) : tape.constant(t);
    if (trainable) b.all.push_back(v);
    return v;
  };
  if (trainable) {
    b.token_embedding = put(p.token_embedding);
    b.position_embedding = put(p.position_embedding);
    b.visual_projector = put(p.visual_projector);
  }
  for (const LayerParams& l : p.layers) {
    BoundLayer bl;
    bl.ln1_gain = put(l.ln1_gain);
    bl.ln1_bias = put(l.ln1_bias);
    bl.w_qkv = put(l.w_qkv);
    bl.b_qkv = put(l.b_qkv);
    bl.w_attn_out = put(l.w_attn_out);
    bl.b_attn_out = put(l.b_attn_out);
    bl.ln2_gain = put(l.ln2_gain);
    bl.ln2_bias = put(l.ln2_bias);
    bl.w_fc1 = put(l.w_fc1);
    bl.b_fc1 = put(l.b_fc1);
    bl.w_fc2 = put(l.w_fc2);
    bl.b_fc2 = put(l.b_fc2);
    b.layers.push_back(bl);
  }
  b.final_gain = put(p.final_gain);
  b.final_bias = put(p.final_bias);
  b.w_out = put(p.w_out);
  b.b_out = put(p.b_out);
  return b;
}

RowMask attention_mask(std::size_t total, std::size_t visual) {
  auto mask = std::make_shared<std::vector<std::uint8_t>>(total * total, 0);
  for (std::size_t i = 0; i < total; ++i) {
    for (std::size_t j = 0; j < total; ++j) {
      const bool allowed = j <= i || (i < visual && j < visual);
      (*mask)[i * total + j] = allowed ? 1 : 0;
    }
  }
  return mask;
}

Var run_blocks(Tape& t, const Bound& b, Var x, std::size_t visual,
               const ModelConfig& cfg) {
  const std::size_t total = t.value(x).rows();
  const std::size_t d = cfg.d_model;
  const std::size_t dh = d / cfg.heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const RowMask mask = attention_mask(total, visual);
  for (const BoundLayer& l : b.layers) {
    Var h = t.layer_norm(x, l.ln1_gain, l.ln1_bias);
    Var qkv = t.add_row(t.matmul(h, l.w_qkv), l.b_qkv);
    std::vector<Var> heads;
    for (std::size_t k = 0; k < cfg.heads; ++k) {
      Var q = t.slice_cols(qkv, k * dh, (k + 1) * dh);
      Var key = t.slice_cols(qkv, d + k * dh, d + (k + 1) * dh);
      Var v = t.slice_cols(qkv, 2 * d + k * dh, 2 * d + (k + 1) * dh);
      Var scores = t.scale(t.matmul_nt(q, key), inv_sqrt_dh);
      heads.push_back(t.matmul(t.row_softmax(scores, mask), v));
    }
    Var att = heads.size() == 1 ? heads.front() : t.concat_cols(heads);
    x = t.add(x, t.add_row(t.matmul(att, l.w_attn_out), l.b_attn_out));
    Var h2 = t.layer_norm(x, l.ln2_gain, l.ln2_bias);
    Var hidden = t.gelu(t.add_row(t.matmul(h2, l.w_fc1), l.b_fc1));
    x = t.add(x, t.add_row(t.matmul(hidden, l.w_fc2), l.b_fc2));
  }
  return x;
}

Var output_head(Tape& t, const Bound& b, Var rows) {
  Var normed = t.layer_norm(rows, b.final_gain, b.final_bias);
  return t.add_row(t.matmul(normed, b.w_out), b.b_out);
}

/// Constant positional rows for inference: zeros (or slots 0..S-1) for the
/// visual prefix, then consecutive positions for text.
Tensor position_rows(const ModelParams& p, std::size_t visual, std::size_t text) {
  const std::size_t d = p.config.d_model;
  Tensor out({visual + text, d});
  const std::size_t offset = p.config.zero_visual_positions ? 0 : visual;
  if (!p.config.zero_visual_positions) {
    for (std::size_t s = 0; s < visual; ++s) {
      auto src = p.position_embedding.row(s);
      std::copy(src.begin(), src.end(), out.row(s).begin());
    }
  }
  for (std::size_t j = 0; j < text; ++j) {
    auto src = p.position_embedding.row(offset + j);
    std::copy(src.begin(), src.end(), out.row(visual + j).begin());
  }
  return out;
}

void check_lengths(const ModelConfig& cfg, std::size_t visual, std::size_t text) {
  require(visual <= cfg.max_visual, ErrorCode::kInvalidArgument,
          "input has " + std::to_string(visual) + " visual tokens, limit is " +
              std::to_string(cfg.max_visual));
  require(text >= 1, ErrorCode::kInvalidArgument, "input has no text tokens");
  require(visual + text <= cfg.context, ErrorCode::kInvalidArgument,
          "context overflow: " + std::to_string(visual + text) + " positions, limit is " +
              std::to_string(cfg.context));
}

void check_ids(const ModelConfig& cfg, const std::vector<TokenId>& ids) {
  for (TokenId id : ids) {
    require(id < cfg.vocab_size, ErrorCode::kInvalidArgument,
            "token id " + std::to_string(id) + " out of range for vocabulary of " +
                std::to_string(cfg.vocab_size));
  }
}

Tensor gaussian(std::vector<std::size_t> shape, double stddev, SplitRng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = stddev * rng.normal();
  return t;
}

/// Training-graph loss for one example; visual features projected on tape.
Var example_loss_node(Tape& t, const Bound& b, const ModelParams& p,
                      const TrainExample& ex, const Tensor& features, double smoothing = 0.0) {
  const ModelConfig& cfg = p.config;
  const std::size_t visual = features.empty() ? 0 : features.rows();
  std::vector<TokenId> text = ex.prompt;
  text.insert(text.end(), ex.tokens.begin(), ex.tokens.end() - 1);
  check_lengths(cfg, visual, text.size());

  std::vector<std::uint32_t> ids(text.begin(), text.end());
  Var x = t.embedding(b.token_embedding, std::move(ids));
  const std::size_t offset = cfg.zero_visual_positions ? 0 : visual;
  Var pos = t.slice_rows(b.position_embedding, offset, offset + text.size());
  if (visual > 0) {
    Var vis = t.matmul(t.constant(features), b.visual_projector);
    x = t.concat_rows({vis, x});
    Var vis_pos = cfg.zero_visual_positions
                      ? t.constant(Tensor::zeros(visual, cfg.d_model))
                      : t.slice_rows(b.position_embedding, 0, visual);
    pos = t.concat_rows({vis_pos, pos});
  }
  x = t.add(x, pos);
  Var h = run_blocks(t, b, x, visual, cfg);
  const std::size_t first = visual + ex.prompt.size();
  Var rows = t.slice_rows(h, first, visual + text.size());
  Var logits = output_head(t, b, rows);
  std::vector<std::uint32_t> targets(ex.tokens.begin() + 1, ex.tokens.end());
  return t.cross_entropy(logits, std::move(targets), smoothing);
}

void append_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}

template <class T>
void append_pod(std::string& out, T value) {
  append_bytes(out, &value, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <class T>
  T pod() {
    T value;
    take(&value, sizeof(T));
    return value;
  }

  void take(void* dst, std::size_t n) {
    require(pos_ + n <= bytes_.size(), ErrorCode::kFormat, "checkpoint truncated");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  require(vocab_size > 0 && d_model > 0 && layers > 0 && heads > 0 && d_visual > 0 &&
              context > 0 && mlp_ratio > 0,
          ErrorCode::kInvalidArgument, "model config: all dimensions must be positive");
  require(d_model % heads == 0, ErrorCode::kInvalidArgument,
          "model config: d_model must be divisible by heads");
  require(max_visual < context, ErrorCode::kInvalidArgument,
          "model config: max_visual must be below context");
}

ModelParams ModelParams::init(const ModelConfig& config, SplitRng rng) {
  config.validate();
  ModelParams p;
  p.config = config;
  const std::size_t d = config.d_model;
  const std::size_t ff = d * config.mlp_ratio;
  const double s = config.init_scale;
  auto fan_in = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
  p.token_embedding = gaussian({config.vocab_size, d}, s, rng);
  p.position_embedding = gaussian({config.context, d}, s, rng);
  p.visual_projector = gaussian({config.d_visual, d}, fan_in(config.d_visual), rng);
  for (std::size_t l = 0; l < config.layers; ++l) {
    LayerParams lp;
    lp.ln1_gain = Tensor({1, d}, 1.0);
    lp.ln1_bias = Tensor({1, d});
    lp.w_qkv = gaussian({d, 3 * d}, fan_in(d), rng);
    lp.b_qkv = Tensor({1, 3 * d});
    lp.w_attn_out = gaussian({d, d}, fan_in(d) * 0.5, rng);
    lp.b_attn_out = Tensor({1, d});
    lp.ln2_gain = Tensor({1, d}, 1.0);
    lp.ln2_bias = Tensor({1, d});
    lp.w_fc1 = gaussian({d, ff}, fan_in(d), rng);
    lp.b_fc1 = Tensor({1, ff});
    lp.w_fc2 = gaussian({ff, d}, fan_in(ff) * 0.5, rng);
    lp.b_fc2 = Tensor({1, d});
    p.layers.push_back(std::move(lp));
  }
  p.final_gain = Tensor({1, d}, 1.0);
  p.final_bias = Tensor({1, d});
  p.w_out = gaussian({d, config.vocab_size}, s, rng);
  p.b_out = Tensor({1, config.vocab_size});
  return p;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (const auto& [name, t] : std::as_const(*this).named()) {
    out.emplace_back(name, const_cast<Tensor*>(t));
  }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.emplace_back("token_embedding", &token_embedding);
  out.emplace_back("position_embedding", &position_embedding);
  out.emplace_back("visual_projector", &visual_projector);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerParams& lp = layers[l];
    const std::string pre = "layers." + std::to_string(l) + ".";
    out.emplace_back(pre + "ln1_gain", &lp.ln1_gain);
    out.emplace_back(pre + "ln1_bias", &lp.ln1_bias);
    out.emplace_back(pre + "w_qkv", &lp.w_qkv);
    out.emplace_back(pre + "b_qkv", &lp.b_qkv);
    out.emplace_back(pre + "w_attn_out", &lp.w_attn_out);
    out.emplace_back(pre + "b_attn_out", &lp.b_attn_out);
    out.emplace_back(pre + "ln2_gain", &lp.ln2_gain);
    out.emplace_back(pre + "ln2_bias", &lp.ln2_bias);
    out.emplace_back(pre + "w_fc1", &lp.w_fc1);
    out.emplace_back(pre + "b_fc1", &lp.b_fc1);
    out.emplace_back(pre + "w_fc2", &lp.w_fc2);
    out.emplace_back(pre + "b_fc2", &lp.b_fc2);
  }
  out.emplace_back("final_gain", &final_gain);
  out.emplace_back("final_bias", &final_bias);
  out.emplace_back("w_out", &w_out);
  out.emplace_back("b_out", &b_out);
  return out;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (!(a.config == b.config)) return false;
  auto na = a.named();
  auto nb = b.named();
  if (na.size() != nb.size()) return false;
  for (std::size_t i = 0; i < na.size(); ++i) {
    if (na[i].first != nb[i].first || !(*na[i].second == *nb[i].second)) return false;
  }
  return true;
}

std::string ModelParams::serialize() const {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint format assumes a little-endian host");
  std::string out;
  append_bytes(out, kMagic, sizeof(kMagic));
  append_pod<std::uint32_t>(out, kCheckpointVersion);
  for (std::size_t v : {config.vocab_size, config.d_model, config.layers, config.heads,
                        config.d_visual, config.max_visual, config.context,
                        config.mlp_ratio}) {
    append_pod<std::uint64_t>(out, v);
  }
  append_pod<std::uint8_t>(out, config.zero_visual_positions ? 1 : 0);
  append_pod<double>(out, config.init_scale);
  const auto tensors = named();
  append_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    append_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    append_bytes(out, name.data(), name.size());
    append_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t->rank()));
    for (std::size_t dim : t->shape()) append_pod<std::uint64_t>(out, dim);
    append_bytes(out, t->data().data(), t->size() * sizeof(double));
  }
  return out;
}

ModelParams ModelParams::deserialize(std::string_view bytes) {
  Reader in(bytes);
  char magic[8];
  in.take(magic, sizeof(magic));
  require(std::memcmp(magic, kMagic, sizeof(magic)) == 0, ErrorCode::kFormat,
          "not a checkpoint file (bad magic)");
  const auto version = in.pod<std::uint32_t>();
  require(version == kCheckpointVersion, ErrorCode::kFormat,
          "unsupported checkpoint version " + std::to_string(version));
  ModelConfig cfg;
  cfg.vocab_size = in.pod<std::uint64_t>();
  cfg.d_model = in.pod<std::uint64_t>();
  cfg.layers = in.pod<std::uint64_t>();
  cfg.heads = in.pod<std::uint64_t>();
  cfg.d_visual = in.pod<std::uint64_t>();
  cfg.max_visual = in.pod<std::uint64_t>();
  cfg.context = in.pod<std::uint64_t>();
  cfg.mlp_ratio = in.pod<std::uint64_t>();
  cfg.zero_visual_positions = in.pod<std::uint8_t>() != 0;
  cfg.init_scale = in.pod<double>();
  cfg.validate();

  ModelParams p = init(cfg, SplitRng(0));
  auto tensors = p.named();
  const auto count = in.pod<std::uint32_t>();
  require(count == tensors.size(), ErrorCode::kFormat,
          "checkpoint holds " + std::to_string(count) + " tensors, expected " +
              std::to_string(tensors.size()));
  for (auto& [name, t] : tensors) {
    const auto len = in.pod<std::uint32_t>();
    std::string stored(len, '\0');
    in.take(stored.data(), len);
    require(stored == name, ErrorCode::kFormat,
            "checkpoint tensor '" + stored + "' where '" + name + "' was expected");
    const auto rank = in.pod<std::uint32_t>();
    std::vector<std::size_t> shape(rank);
    for (auto& dim : shape) dim = in.pod<std::uint64_t>();
    require(shape == t->shape(), ErrorCode::kFormat,
            "checkpoint tensor '" + name + "' has unexpected shape");
    in.take(t->data().data(), t->size() * sizeof(double));
  }
  require(in.done(), ErrorCode::kFormat, "trailing bytes after checkpoint");
  return p;
}

void ModelParams::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write checkpoint '" + path + "'");
  const std::string bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed for '" + path + "'");
}

ModelParams ModelParams::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open checkpoint '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

// ---------------------------------------------------------------------------

Tensor encode_scene(const ModelParams& params, const Tensor& features) {
  const std::size_t d = params.config.d_model;
  if (features.size() == 0) return Tensor({0, d});
  require(features.rank() == 2 && features.cols() == params.config.d_visual,
          ErrorCode::kShapeMismatch,
          "scene features must be k x " + std::to_string(params.config.d_visual) +
              ", got " + features.shape_string());
  Tape t;
  Var out = t.matmul(t.constant(features), t.constant(params.visual_projector));
  return t.value(out);
}

ForwardPass forward_logits(const ModelParams& params, const SequenceInput& input) {
  const ModelConfig& cfg = params.config;
  const std::size_t visual = input.visual.size() == 0 ? 0 : input.visual.rows();
  if (visual > 0) {
    require(input.visual.cols() == cfg.d_model, ErrorCode::kShapeMismatch,
            "visual tokens must be S x " + std::to_string(cfg.d_model) + ", got " +
                input.visual.shape_string());
  }
  const std::size_t text = input.prompt.size() + input.history.size();
  check_lengths(cfg, visual, text);
  check_ids(cfg, input.prompt);
  check_ids(cfg, input.history);

  ForwardPass fp;
  Tape& t = fp.tape;
  std::vector<Var> rows;
  rows.reserve(visual + text);
  for (std::size_t s = 0; s < visual; ++s) {
    auto r = input.visual.row(s);
    fp.visual.push_back(t.leaf(Tensor({1, cfg.d_model}, std::vector<double>(r.begin(), r.end()))));
    rows.push_back(fp.visual.back());
  }
  auto embed = [&](TokenId id) {
    auto r = params.token_embedding.row(id);
    return t.leaf(Tensor({1, cfg.d_model}, std::vector<double>(r.begin(), r.end())));
  };
  for (TokenId id : input.prompt) {
    fp.prompt.push_back(embed(id));
    rows.push_back(fp.prompt.back());
  }
  for (TokenId id : input.history) {
    fp.history.push_back(embed(id));
    rows.push_back(fp.history.back());
  }
  const Bound b = bind(t, params, false);
  Var x = t.add(t.concat_rows(rows), t.constant(position_rows(params, visual, text)));
  Var h = run_blocks(t, b, x, visual, cfg);
  Var last = t.slice_rows(h, visual + text - 1, visual + text);
  fp.logits = output_head(t, b, last);
  return fp;
}

Tensor forward_text_logits(const ModelParams& params, const Tensor& visual,
                           const std::vector<TokenId>& text) {
  const ModelConfig& cfg = params.config;
  const std::size_t s = visual.size() == 0 ? 0 : visual.rows();
  check_lengths(cfg, s, text.size());
  check_ids(cfg, text);
  Tape t;
  const Bound b = bind(t, params, false);
  std::vector<std::uint32_t> ids(text.begin(), text.end());
  Var x = t.embedding(t.constant(params.token_embedding), std::move(ids));
  if (s > 0) x = t.concat_rows({t.constant(visual), x});
  x = t.add(x, t.constant(position_rows(params, s, text.size())));
  Var h = run_blocks(t, b, x, s, cfg);
  Var logits = output_head(t, b, t.slice_rows(h, s, s + text.size()));
  return t.value(logits);
}

std::vector<double> next_token_distribution(std::span<const double> logits) {
  return softmax(logits);
}

double sequence_log_likelihood(const ModelParams& params, const SequenceInput& input,
                               const std::vector<TokenId>& y) {
  require(!y.empty(), ErrorCode::kInvalidArgument, "sequence_log_likelihood: empty y");
  require(!input.history.empty(), ErrorCode::kInvalidArgument,
          "sequence_log_likelihood: history must start with BOS");
  std::vector<TokenId> text = input.prompt;
  text.insert(text.end(), input.history.begin(), input.history.end());
  text.insert(text.end(), y.begin(), y.end() - 1);
  const Tensor logits = forward_text_logits(params, input.visual, text);
  const std::size_t first = input.prompt.size() + input.history.size() - 1;
  double total = 0.0;
  for (std::size_t m = 0; m < y.size(); ++m) {
    auto row = logits.row(first + m);
    total += row[y[m]] - log_sum_exp(row);
  }
  return total;
}

double example_loss(const ModelParams& params, const TrainExample& example,
                    bool with_visual) {
  Tape t;
  const Bound b = bind(t, params, true);
  const Tensor features = with_visual ? example.features : Tensor();
  return t.value(example_loss_node(t, b, params, example, features))[0];
}

double teacher_forced_accuracy(const ModelParams& params,
                               const std::vector<TrainExample>& examples) {
  std::size_t hits = 0, total = 0;
  for (const TrainExample& ex : examples) {
    std::vector<TokenId> text = ex.prompt;
    text.insert(text.end(), ex.tokens.begin(), ex.tokens.end() - 1);
    const Tensor logits =
        forward_text_logits(params, encode_scene(params, ex.features), text);
    for (std::size_t m = 1; m < ex.tokens.size(); ++m) {
      auto row = logits.row(ex.prompt.size() + m - 1);
      const auto best = static_cast<TokenId>(
          std::max_element(row.begin(), row.end()) - row.begin());
      hits += best == ex.tokens[m] ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

Tensor training_view(const Tensor& features, const TrainConfig& config, SplitRng& rng) {
  return rng.bernoulli(config.text_only_fraction) ? Tensor() : features;
}

TrainResult train(ModelParams params, const std::vector<TrainExample>& corpus,
                  const TrainConfig& config) {
  require(!corpus.empty(), ErrorCode::kInvalidArgument, "train: corpus is empty");
  require(config.batch > 0, ErrorCode::kInvalidArgument, "train: batch must be positive");
  for (const TrainExample& ex : corpus) {
    require(ex.tokens.size() >= 2, ErrorCode::kInvalidArgument,
            "train: every example needs BOS and at least one target");
    if (ex.features.size() > 0) {
      require(ex.features.cols() == params.config.d_visual, ErrorCode::kShapeMismatch,
              "train: feature width does not match d_visual");
    }
  }
  TrainResult result;
  const SplitRng root(config.seed);
  AdamState adam;
  std::vector<std::size_t> order(corpus.size());
  ModelParams last_good = params;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const SplitRng epoch_rng = root.split(epoch);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    SplitRng order_rng = epoch_rng.split("order");
    order_rng.shuffle(order);
    const double progress =
        config.epochs > 1 ? static_cast<double>(epoch) / static_cast<double>(config.epochs - 1)
                          : 0.0;
    const double lr = config.lr * (1.0 - (1.0 - config.final_lr_fraction) * progress);
    double epoch_loss = 0.0;

    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t stop = std::min(order.size(), start + config.batch);
      Tape t;
      const Bound b = bind(t, params, true);
      std::vector<Var> losses;
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t idx = order[k];
        SplitRng pick = epoch_rng.split("text_only").split(idx);
        const Tensor features = training_view(corpus[idx].features, config, pick);
        losses.push_back(
            example_loss_node(t, b, params, corpus[idx], features, config.label_smoothing));
      }
      Var total = losses.front();
      for (std::size_t k = 1; k < losses.size(); ++k) total = t.add(total, losses[k]);
      total = t.scale(total, 1.0 / static_cast<double>(losses.size()));
      const double loss = t.value(total)[0];
      if (!std::isfinite(loss)) {
        result.params = std::move(last_good);
        result.diverged = true;
        result.message = "non-finite loss in epoch " + std::to_string(epoch + 1);
        return result;
      }
      const GradientMap grads = t.backward(total);
      std::vector<Tensor> g;
      g.reserve(b.all.size());
      double sq = 0.0;
      for (Var v : b.all) {
        g.push_back(grads.at(v));
        for (double x : g.back().data()) sq += x * x;
      }
      const double norm = std::sqrt(sq);
      if (config.clip_norm > 0.0 && norm > config.clip_norm) {
        const double f = config.clip_norm / norm;
        for (Tensor& gt : g) {
          for (double& x : gt.data()) x *= f;
        }
      }
      auto named = params.named();
      std::vector<Tensor*> ptrs;
      ptrs.reserve(named.size());
      for (auto& [name, p] : named) ptrs.push_back(p);
      try {
        adam_step(ptrs, g, adam, lr);
      } catch (const Error& e) {
        result.params = std::move(last_good);
        result.diverged = true;
        result.message = std::string(e.what()) + " (epoch " + std::to_string(epoch + 1) + ")";
        return result;
      }
      epoch_loss += loss * static_cast<double>(stop - start);
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(corpus.size()));
    last_good = params;
  }
  result.params = std::move(params);
  const auto& curve = result.loss_curve;
  if (config.plateau_window > 0 && curve.size() > config.plateau_window) {
    const double before = curve[curve.size() - 1 - config.plateau_window];
    result.reached_plateau = (before - curve.back()) <= config.plateau_tolerance * before;
  }
  return result;
}

}  // namespace gacd
