// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "gacd/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gacd/error.hpp"
#include "gacd/rng.hpp"

namespace gacd {

namespace {

TokenId argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

std::vector<double> log_softmax(std::span<const double> z) {
  const double lse = log_sum_exp(z);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
  return out;
}

double effective_norm(std::span<const double> full, const double* negative, double alpha,
                      InfluenceNorm norm) {
  std::vector<double> mixed(full.size());
  for (std::size_t j = 0; j < full.size(); ++j) {
    mixed[j] = (1.0 + alpha) * full[j] - (negative ? alpha * negative[j] : 0.0);
  }
  return vector_norm(mixed, norm);
}

// Influence ratios of the adjusted logit, whose gradient with respect to a
// token is (1 + alpha) g_full - alpha g_negative (the second term is absent
// for tokens the negative branch does not see).
InfluenceRatios adjusted_ratios(const TokenGradients& full, const TokenGradients& neg,
                                const ObjectPartition& split, NegativeBranch mode,
                                double alpha, const InfluenceOptions& options,
                                std::span<const TokenId> history, const Vocab& vocab) {
  std::vector<const Tensor*> neg_visual(full.visual.size(), nullptr);
  for (std::size_t k = 0; k < split.object.size(); ++k) {
    const std::size_t s = split.object[k];
    neg_visual[s] = &neg.visual[mode == NegativeBranch::kDrop ? k : s];
  }
  double v = 0.0, p = 0.0, y = 0.0;
  for (std::size_t s = 0; s < full.visual.size(); ++s) {
    v += effective_norm(full.visual[s].data(),
                        neg_visual[s] ? neg_visual[s]->data().data() : nullptr, alpha,
                        options.norm);
  }
  for (std::size_t j = 0; j < full.prompt.size(); ++j) {
    p += effective_norm(full.prompt[j].data(), neg.prompt[j].data().data(), alpha, options.norm);
  }
  for (std::size_t j = 0; j < full.history.size(); ++j) {
    if (options.exclude_special && vocab.is_special(history[j])) continue;
    y += effective_norm(full.history[j].data(), neg.history[j].data().data(), alpha,
                        options.norm);
  }
  return influence_ratios(v, p, y);
}

TokenId sample(std::span<const double> logits, double temperature, SplitRng& rng) {
  std::vector<double> scaled(logits.begin(), logits.end());
  for (double& z : scaled) z /= temperature;
  const std::vector<double> p = softmax(scaled);
  double u = rng.uniform();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (u < p[i]) return static_cast<TokenId>(i);
    u -= p[i];
  }
  return argmax(logits);
}

}  // namespace

std::string to_string(DecodeMode mode) {
  switch (mode) {
    case DecodeMode::kBaseline: return "baseline";
    case DecodeMode::kVisualAmplification: return "va";
    case DecodeMode::kObjectAware: return "va+cr";
    case DecodeMode::kFull: return "full";
  }
  return "full";
}

DecodeMode parse_mode(std::string_view text) {
  if (text == "baseline") return DecodeMode::kBaseline;
  if (text == "va") return DecodeMode::kVisualAmplification;
  if (text == "va+cr" || text == "va_cr") return DecodeMode::kObjectAware;
  if (text == "full") return DecodeMode::kFull;
  fail(ErrorCode::kInvalidArgument,
       "unknown mode '" + std::string(text) + "' (baseline, va, va+cr, full)");
}

std::string to_string(ClampBound bound) {
  switch (bound) {
    case ClampBound::kNone: return "none";
    case ClampBound::kAlphaMax: return "alpha_max";
    case ClampBound::kObject: return "object";
    case ClampBound::kPrompt: return "prompt";
  }
  return "none";
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::kEos: return "eos";
    case StopReason::kMaxLen: return "max_len";
    case StopReason::kContext: return "context";
    case StopReason::kEarlyStop: return "early_stop";
  }
  return "eos";
}

void DecoderConfig::validate() const {
  require(std::isfinite(alpha_max) && alpha_max >= 0.0, ErrorCode::kInvalidArgument,
          "alpha_max must be a finite value >= 0");
  require(std::isfinite(epsilon) && epsilon >= 0.0 && epsilon <= 1.0,
          ErrorCode::kInvalidArgument, "epsilon must lie in [0, 1]");
  require(max_len >= 1, ErrorCode::kInvalidArgument, "max_len must be >= 1");
  require(greedy || (std::isfinite(temperature) && temperature > 0.0),
          ErrorCode::kInvalidArgument, "temperature must be > 0");
  require(anchor_top_k >= 1, ErrorCode::kInvalidArgument, "anchor_top_k must be >= 1");
}

LogitSummary summarize_logits(std::span<const double> logits, std::size_t k) {
  LogitSummary s;
  s.argmax = argmax(logits);
  for (std::size_t i : top_indices(logits, k)) {
    s.top.emplace_back(static_cast<TokenId>(i), logits[i]);
  }
  return s;
}

double compute_alpha(const AlphaTerms& t) {
  const bool prompt_dominates = t.prompt >= t.history;
  const double text = prompt_dominates ? t.prompt : t.history;
  const double neg_text = prompt_dominates ? t.neg_prompt : t.neg_history;
  const double numerator = text - t.visual;
  const double denominator = t.visual - t.neg_object + neg_text - text;
  if (!(numerator > 0.0) || !(denominator > 0.0)) return 0.0;
  return numerator / denominator;
}

AlphaResult clamp_alpha(double raw, const AlphaTerms& t, double alpha_max) {
  AlphaResult r;
  r.raw = raw;
  r.value = raw;
  if (alpha_max < r.value) {
    r.value = alpha_max;
    r.bound = ClampBound::kAlphaMax;
  }
  if (t.neg_object > t.object) {
    const double bound = t.object / (t.neg_object - t.object);
    if (bound < r.value) {
      r.value = bound;
      r.bound = ClampBound::kObject;
    }
  }
  if (t.neg_prompt > t.prompt) {
    const double bound = t.prompt / (t.neg_prompt - t.prompt);
    if (bound < r.value) {
      r.value = bound;
      r.bound = ClampBound::kPrompt;
    }
  }
  return r;
}

std::vector<double> adjust_logits(std::span<const double> full, std::span<const double> negative,
                                  double alpha) {
  require(full.size() == negative.size(), ErrorCode::kShapeMismatch,
          "adjust_logits: " + std::to_string(full.size()) + " vs " +
              std::to_string(negative.size()) + " logits");
  std::vector<double> out(full.size());
  for (std::size_t i = 0; i < full.size(); ++i) {
    out[i] = (1.0 + alpha) * full[i] - alpha * negative[i];
  }
  return out;
}

double kl_divergence(std::span<const double> p_logits, std::span<const double> q_logits) {
  require(p_logits.size() == q_logits.size() && !p_logits.empty(), ErrorCode::kShapeMismatch,
          "kl_divergence: logit vectors differ in size");
  const std::vector<double> lp = log_softmax(p_logits);
  const std::vector<double> lq = log_softmax(q_logits);
  double kl = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    const double p = std::exp(lp[i]);
    if (p > 0.0) kl += p * (lp[i] - lq[i]);
  }
  return std::max(kl, 0.0);
}

bool should_early_stop(const InfluenceRatios& ratios, std::optional<TokenId> previous,
                       std::span<const TokenId> terminals, double epsilon) {
  if (!previous || !ratios.defined) return false;
  if (std::find(terminals.begin(), terminals.end(), *previous) == terminals.end()) return false;
  return ratios.visual < epsilon;
}

std::vector<TokenId> DecodeResult::caption(const Vocab& vocab) const {
  std::vector<TokenId> out = tokens;
  if (!out.empty() && out.back() == vocab.eos()) out.pop_back();
  return out;
}

DecodeResult decode_tokens(const ModelParams& params, const Vocab& vocab, const Tensor& visual,
                           const std::vector<TokenId>& prompt, const DecoderConfig& config) {
  config.validate();
  const std::size_t s_count = visual.empty() ? 0 : visual.rows();
  if (s_count > 0) {
    require(visual.cols() == params.config.d_model, ErrorCode::kShapeMismatch,
            "visual tokens have width " + std::to_string(visual.cols()) + ", model expects " +
                std::to_string(params.config.d_model));
  }
  std::vector<TokenId> terminals = config.terminals;
  if (terminals.empty()) {
    if (auto dot = vocab.find(".")) terminals.push_back(*dot);
  }
  const InfluenceOptions options{config.norm, config.exclude_special};
  const bool adjust = config.mode != DecodeMode::kBaseline;
  const bool grouped =
      config.mode == DecodeMode::kObjectAware || config.mode == DecodeMode::kFull;
  const std::vector<bool> empty_mask(s_count, false);

  SplitRng rng(config.seed);
  AnchorMask mask(s_count);
  DecodeResult result;
  std::vector<TokenId> history{vocab.bos()};

  for (std::size_t step = 1;; ++step) {
    if (result.tokens.size() >= config.max_len) {
      result.stop = StopReason::kMaxLen;
      break;
    }
    if (s_count + prompt.size() + history.size() > params.config.context) {
      result.stop = StopReason::kContext;
      break;
    }
    StepTrace trace;
    trace.step = step;

    ForwardPass full = forward_logits(params, {visual, prompt, history});
    const std::vector<double> z(full.logit_values().begin(), full.logit_values().end());
    trace.full = summarize_logits(z);
    trace.candidate = trace.full.argmax;
    const TokenGradients g_full = token_gradients(full, trace.candidate);
    trace.influence = summarize_influence(g_full, options, history, &vocab);
    trace.ratios = influence_ratios(trace.influence);
    trace.adjusted_ratios = trace.ratios;

    const std::optional<TokenId> previous =
        history.size() > 1 ? std::optional<TokenId>(history.back()) : std::nullopt;
    if (config.mode == DecodeMode::kFull &&
        should_early_stop(trace.ratios, previous, terminals, config.epsilon)) {
      trace.early_stop = true;
      trace.mask = mask.bits();
      result.stop_probe = std::move(trace);
      result.stop = StopReason::kEarlyStop;
      break;
    }

    trace.noun_candidate = vocab.is_noun(trace.candidate);
    const bool use_mask = grouped && trace.noun_candidate;
    trace.mask = use_mask ? mask.bits() : empty_mask;
    trace.split = partition(trace.influence.visual, trace.mask);

    std::vector<double> adjusted = z;
    if (adjust) {
      trace.has_negative = true;
      const Tensor neg_visual = negative_visual(visual, trace.split, config.negative);
      ForwardPass neg = forward_logits(params, {neg_visual, prompt, history});
      const std::vector<double> zo(neg.logit_values().begin(), neg.logit_values().end());
      trace.negative = summarize_logits(zo);
      const TokenGradients g_neg = token_gradients(neg, trace.candidate);
      trace.negative_influence = summarize_influence(g_neg, options, history, &vocab);

      double neg_object = 0.0;
      if (config.negative == NegativeBranch::kDrop) {
        neg_object = trace.negative_influence.visual_total;
      } else {
        for (std::size_t s : trace.split.object) neg_object += trace.negative_influence.visual[s];
      }
      const AlphaTerms terms{trace.influence.visual_total,
                             trace.influence.prompt_total,
                             trace.influence.history_total,
                             trace.split.object_influence,
                             neg_object,
                             trace.negative_influence.prompt_total,
                             trace.negative_influence.history_total};
      trace.alpha = clamp_alpha(compute_alpha(terms), terms, config.alpha_max);
      adjusted = adjust_logits(z, zo, trace.alpha.value);
      trace.kl = kl_divergence(adjusted, zo);
      if (trace.alpha.value != 0.0) {
        trace.adjusted_ratios = adjusted_ratios(g_full, g_neg, trace.split, config.negative,
                                                trace.alpha.value, options, history, vocab);
      }
    }

    const TokenId token =
        config.greedy ? argmax(adjusted) : sample(adjusted, config.temperature, rng);
    trace.token = token;
    trace.confidence = softmax(adjusted)[token];

    if (vocab.is_noun(token) && s_count > 0) {
      std::vector<double> anchor_influence;
      if (token == trace.candidate) {
        anchor_influence = trace.influence.visual;
      } else {
        anchor_influence = summarize_influence(token_gradients(full, token), options, history,
                                               &vocab)
                               .visual;
      }
      const auto added = mask.add(step, token, vocab.object_class(token), anchor_influence,
                                  config.anchor_top_k);
      result.anchors.insert(result.anchors.end(), added.begin(), added.end());
    }

    result.steps.push_back(std::move(trace));
    result.tokens.push_back(token);
    history.push_back(token);
    if (token == vocab.eos()) {
      result.stop = StopReason::kEos;
      break;
    }
  }
  return result;
}

DecodeResult decode(const ModelParams& params, const Vocab& vocab, const Tensor& features,
                    const std::vector<TokenId>& prompt, const DecoderConfig& config) {
  return decode_tokens(params, vocab, encode_scene(params, features), prompt, config);
}

}  // namespace gacd
