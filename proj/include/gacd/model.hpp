// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Toy decoder-only multimodal transformer.
//
// Input layout is [visual tokens][prompt tokens][history tokens], where the
// history starts with BOS. Visual tokens attend to each other in both
// directions; all other positions are causal. By default visual slots carry
// no positional embedding, so the model sees the visual tokens as a set.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gacd/rng.hpp"
#include "gacd/tensor.hpp"
#include "gacd/vocab.hpp"

namespace gacd {

struct ModelConfig {
  std::size_t vocab_size = 128;
  std::size_t d_model = 32;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t d_visual = 16;
  std::size_t max_visual = 8;
  std::size_t context = 96;
  std::size_t mlp_ratio = 4;
  bool zero_visual_positions = true;
  double init_scale = 0.02;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerParams {
  Tensor ln1_gain, ln1_bias;
  Tensor w_qkv, b_qkv;
  Tensor w_attn_out, b_attn_out;
  Tensor ln2_gain, ln2_bias;
  Tensor w_fc1, b_fc1;
  Tensor w_fc2, b_fc2;
};

struct ModelParams {
  ModelConfig config;
  Tensor token_embedding;     // |V| x d
  Tensor position_embedding;  // context x d
  Tensor visual_projector;    // d_v x d
  std::vector<LayerParams> layers;
  Tensor final_gain, final_bias;
  Tensor w_out;  // d x |V|
  Tensor b_out;  // 1 x |V|

  static ModelParams init(const ModelConfig& config, SplitRng rng);

  /// Every weight tensor with a stable name, in serialization order.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;

  std::string serialize() const;
  static ModelParams deserialize(std::string_view bytes);
  void save(const std::string& path) const;
  static ModelParams load(const std::string& path);

  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

/// Model input for one next-token query. `visual` is S x d (S may be 0);
/// `history` holds the output prefix including the leading BOS.
struct SequenceInput {
  Tensor visual;
  std::vector<TokenId> prompt;
  std::vector<TokenId> history;
};

/// Projects raw scene features (k x d_v) into visual tokens (k x d).
Tensor encode_scene(const ModelParams& params, const Tensor& features);

/// A recorded forward pass. Every visual, prompt and history token embedding
/// is a separate 1 x d leaf so that per-token gradients are available.
struct ForwardPass {
  Tape tape;
  Var logits;
  std::vector<Var> visual;
  std::vector<Var> prompt;
  std::vector<Var> history;

  std::span<const double> logit_values() const { return tape.value(logits).data(); }
};

ForwardPass forward_logits(const ModelParams& params, const SequenceInput& input);

/// Logits at every text position (rows follow prompt + history order) for a
/// single full-sequence forward. Row j predicts the token after text j.
Tensor forward_text_logits(const ModelParams& params, const Tensor& visual,
                           const std::vector<TokenId>& text);

std::vector<double> next_token_distribution(std::span<const double> logits);

/// Sum over m of log p(y_m | visual, prompt, history, y_<m).
double sequence_log_likelihood(const ModelParams& params, const SequenceInput& input,
                               const std::vector<TokenId>& y);

struct TrainExample {
  Tensor features;              // k x d_v raw scene features
  std::vector<TokenId> prompt;
  std::vector<TokenId> tokens;  // BOS, caption..., EOS
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch = 16;
  double lr = 3e-3;
  double final_lr_fraction = 0.1;
  double clip_norm = 1.0;
  /// Fraction of examples (drawn per epoch) presented without visual tokens,
  /// giving the model a caption-only language prior.
  double text_only_fraction = 0.25;
  /// Mass spread uniformly over the vocabulary in the training targets.
  double label_smoothing = 0.1;
  /// The run counts as plateaued when the epoch loss improved by at most
  /// plateau_tolerance (relative) over the last plateau_window epochs.
  std::size_t plateau_window = 3;
  double plateau_tolerance = 0.02;
  std::uint64_t seed = 0;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_curve;  // mean loss per epoch
  bool diverged = false;
  bool reached_plateau = false;
  std::string message;
};

/// The visual rows an example is trained with: none (text-only draw) or all.
Tensor training_view(const Tensor& features, const TrainConfig& config, SplitRng& rng);

/// Teacher-forced cross-entropy training with Adam. On a non-finite loss or
/// gradient the result holds the parameters from the last completed epoch.
TrainResult train(ModelParams params, const std::vector<TrainExample>& corpus,
                  const TrainConfig& config);

/// Mean cross-entropy of one example (the training objective).
double example_loss(const ModelParams& params, const TrainExample& example,
                    bool with_visual = true);

/// Fraction of caption positions where the teacher-forced argmax is correct.
double teacher_forced_accuracy(const ModelParams& params,
                               const std::vector<TrainExample>& examples);

}  // namespace gacd
