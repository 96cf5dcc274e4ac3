// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Influence-aware constrained decoding.
//
// Each step runs the full input and a negative branch (prompt, history and
// the object-related visual tokens only), measures how much each group moved
// the candidate logit in both branches, and mixes the logits with a clamped
// coefficient alpha:
//
//   adjusted = (1 + alpha) * full - alpha * negative
//
// Early stopping ends the caption at a sentence boundary once the visual
// share of influence drops below epsilon.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gacd/grouping.hpp"
#include "gacd/influence.hpp"
#include "gacd/model.hpp"
#include "gacd/vocab.hpp"

namespace gacd {

enum class DecodeMode { kBaseline, kVisualAmplification, kObjectAware, kFull };

std::string to_string(DecodeMode mode);
/// Accepts baseline, va, va+cr (or va_cr), full.
DecodeMode parse_mode(std::string_view text);

enum class ClampBound { kNone, kAlphaMax, kObject, kPrompt };
std::string to_string(ClampBound bound);

enum class StopReason { kEos, kMaxLen, kContext, kEarlyStop };
std::string to_string(StopReason reason);

struct DecoderConfig {
  DecodeMode mode = DecodeMode::kFull;
  double alpha_max = 3.0;
  double epsilon = 0.07;
  InfluenceNorm norm = InfluenceNorm::kL1;
  std::size_t max_len = 256;
  bool greedy = true;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  std::size_t anchor_top_k = 1;
  NegativeBranch negative = NegativeBranch::kDrop;
  bool exclude_special = false;
  /// Early stopping fires only right after one of these tokens. Empty means
  /// the vocabulary's sentence terminal.
  std::vector<TokenId> terminals;

  void validate() const;
};

struct LogitSummary {
  TokenId argmax = 0;
  std::vector<std::pair<TokenId, double>> top;  // top-5, descending
};

LogitSummary summarize_logits(std::span<const double> logits, std::size_t k = 5);

struct AlphaTerms {
  double visual = 0.0;       // I^v
  double prompt = 0.0;       // I^p
  double history = 0.0;      // I^y
  double object = 0.0;       // I^o
  double neg_object = 0.0;   // negative-branch I^o
  double neg_prompt = 0.0;   // negative-branch I^p
  double neg_history = 0.0;  // negative-branch I^y
};

struct AlphaResult {
  double raw = 0.0;
  double value = 0.0;
  ClampBound bound = ClampBound::kNone;
};

/// Unclamped coefficient; 0 when the numerator or denominator is not positive.
double compute_alpha(const AlphaTerms& t);
AlphaResult clamp_alpha(double raw, const AlphaTerms& t, double alpha_max);

std::vector<double> adjust_logits(std::span<const double> full, std::span<const double> negative,
                                  double alpha);

/// KL(softmax(p) || softmax(q)), evaluated from log-probabilities.
double kl_divergence(std::span<const double> p_logits, std::span<const double> q_logits);

bool should_early_stop(const InfluenceRatios& ratios, std::optional<TokenId> previous,
                       std::span<const TokenId> terminals, double epsilon);

struct StepTrace {
  std::size_t step = 0;  // 1-based
  bool noun_candidate = false;
  bool has_negative = false;
  TokenId candidate = 0;
  LogitSummary full;
  LogitSummary negative;
  StepInfluence influence;           // full branch, candidate target
  StepInfluence negative_influence;  // negative branch, candidate target
  std::vector<bool> mask;
  ObjectPartition split;
  AlphaResult alpha;
  double kl = 0.0;
  std::optional<TokenId> token;  // empty for an early-stop probe
  double confidence = 0.0;
  /// Ratios of the full branch; these drive early stopping.
  InfluenceRatios ratios;
  /// Ratios of the adjusted logit; equal to `ratios` when alpha = 0.
  InfluenceRatios adjusted_ratios;
  bool early_stop = false;
};

struct DecodeResult {
  std::vector<TokenId> tokens;  // emitted tokens, EOS included when produced
  std::vector<StepTrace> steps;
  std::optional<StepTrace> stop_probe;
  std::vector<Anchor> anchors;
  StopReason stop = StopReason::kEos;

  /// Emitted tokens without a trailing EOS.
  std::vector<TokenId> caption(const Vocab& vocab) const;
};

/// Decodes a caption from projected visual tokens (S x d, S may be 0).
DecodeResult decode_tokens(const ModelParams& params, const Vocab& vocab, const Tensor& visual,
                           const std::vector<TokenId>& prompt, const DecoderConfig& config);

/// Decodes from raw scene features (k x d_v).
DecodeResult decode(const ModelParams& params, const Vocab& vocab, const Tensor& features,
                    const std::vector<TokenId>& prompt, const DecoderConfig& config);

}  // namespace gacd
