// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Gradient-based token influence.
//
// The influence of an input token on a step is the norm of the gradient of a
// single target logit with respect to that token's embedding. Group
// influences sum the per-token values over the visual, prompt and history
// groups; ratios normalize the groups by their total.

#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gacd/model.hpp"
#include "gacd/tensor.hpp"
#include "gacd/vocab.hpp"

namespace gacd {

enum class InfluenceNorm { kL1, kL2, kLinf };

std::string to_string(InfluenceNorm norm);
InfluenceNorm parse_norm(std::string_view text);
double vector_norm(std::span<const double> v, InfluenceNorm norm);

/// Per-token gradients of one scalar logit, grouped like the model input.
struct TokenGradients {
  TokenId target = 0;
  std::vector<Tensor> visual;
  std::vector<Tensor> prompt;
  std::vector<Tensor> history;
};

struct StepInfluence {
  TokenId target = 0;
  std::vector<double> visual;
  std::vector<double> prompt;
  std::vector<double> history;
  double visual_total = 0.0;
  double prompt_total = 0.0;
  double history_total = 0.0;

  double total() const { return visual_total + prompt_total + history_total; }
};

struct InfluenceRatios {
  double visual = 0.0;
  double prompt = 0.0;
  double history = 0.0;
  /// max(max(prompt, history) - visual, 0)
  double gap = 0.0;
  /// False when the total influence is zero; all ratios are then 0.
  bool defined = false;
};

struct InfluenceOptions {
  InfluenceNorm norm = InfluenceNorm::kL1;
  /// Drop BOS/EOS from the history group.
  bool exclude_special = false;
};

/// One reverse pass from logits[target] over a recorded forward pass.
TokenGradients token_gradients(ForwardPass& pass, TokenId target);

/// Applies the norm per token and sums groups. `history_ids` (same length as
/// the history gradients) is consulted only when excluding special tokens.
StepInfluence summarize_influence(const TokenGradients& grads, const InfluenceOptions& options,
                                  std::span<const TokenId> history_ids = {},
                                  const Vocab* vocab = nullptr);

/// Forward + one backward pass from the target logit.
StepInfluence token_influence(const ModelParams& params, const SequenceInput& input,
                              TokenId target, const InfluenceOptions& options = {},
                              const Vocab* vocab = nullptr);

InfluenceRatios influence_ratios(double visual, double prompt, double history);
InfluenceRatios influence_ratios(const StepInfluence& step);

}  // namespace gacd
