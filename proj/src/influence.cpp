// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "gacd/influence.hpp"

#include <algorithm>
#include <cmath>

#include "gacd/error.hpp"

namespace gacd {

std::string to_string(InfluenceNorm norm) {
  switch (norm) {
    case InfluenceNorm::kL1: return "l1";
    case InfluenceNorm::kL2: return "l2";
    case InfluenceNorm::kLinf: return "linf";
  }
  return "l1";
}

InfluenceNorm parse_norm(std::string_view text) {
  if (text == "l1" || text == "L1") return InfluenceNorm::kL1;
  if (text == "l2" || text == "L2") return InfluenceNorm::kL2;
  if (text == "linf" || text == "Linf" || text == "inf") return InfluenceNorm::kLinf;
  fail(ErrorCode::kInvalidArgument, "unknown norm '" + std::string(text) + "' (l1, l2, linf)");
}

double vector_norm(std::span<const double> v, InfluenceNorm norm) {
  double acc = 0.0;
  switch (norm) {
    case InfluenceNorm::kL1:
      for (double x : v) acc += std::abs(x);
      return acc;
    case InfluenceNorm::kL2:
      for (double x : v) acc += x * x;
      return std::sqrt(acc);
    case InfluenceNorm::kLinf:
      for (double x : v) acc = std::max(acc, std::abs(x));
      return acc;
  }
  return acc;
}

TokenGradients token_gradients(ForwardPass& pass, TokenId target) {
  const Tensor& logits = pass.tape.value(pass.logits);
  require(target < logits.size(), ErrorCode::kInvalidArgument,
          "influence target " + std::to_string(target) + " out of range");
  Var scalar = pass.tape.pick(pass.logits, 0, target);
  const GradientMap g = pass.tape.backward(scalar);
  TokenGradients out;
  out.target = target;
  for (Var v : pass.visual) out.visual.push_back(g.at(v));
  for (Var v : pass.prompt) out.prompt.push_back(g.at(v));
  for (Var v : pass.history) out.history.push_back(g.at(v));
  return out;
}

StepInfluence summarize_influence(const TokenGradients& grads, const InfluenceOptions& options,
                                  std::span<const TokenId> history_ids, const Vocab* vocab) {
  StepInfluence s;
  s.target = grads.target;
  for (const Tensor& g : grads.visual) {
    s.visual.push_back(vector_norm(g.data(), options.norm));
    s.visual_total += s.visual.back();
  }
  for (const Tensor& g : grads.prompt) {
    s.prompt.push_back(vector_norm(g.data(), options.norm));
    s.prompt_total += s.prompt.back();
  }
  const bool filter = options.exclude_special && vocab != nullptr;
  if (filter) {
    require(history_ids.size() == grads.history.size(), ErrorCode::kInvalidArgument,
            "summarize_influence: history ids do not match gradients");
  }
  for (std::size_t i = 0; i < grads.history.size(); ++i) {
    const bool skip = filter && vocab->is_special(history_ids[i]);
    s.history.push_back(skip ? 0.0 : vector_norm(grads.history[i].data(), options.norm));
    s.history_total += s.history.back();
  }
  return s;
}

StepInfluence token_influence(const ModelParams& params, const SequenceInput& input,
                              TokenId target, const InfluenceOptions& options,
                              const Vocab* vocab) {
  ForwardPass pass = forward_logits(params, input);
  return summarize_influence(token_gradients(pass, target), options, input.history, vocab);
}

InfluenceRatios influence_ratios(double visual, double prompt, double history) {
  InfluenceRatios r;
  const double total = visual + prompt + history;
  if (!(total > 0.0)) return r;
  r.defined = true;
  r.visual = visual / total;
  r.prompt = prompt / total;
  r.history = history / total;
  r.gap = std::max(std::max(r.prompt, r.history) - r.visual, 0.0);
  return r;
}

InfluenceRatios influence_ratios(const StepInfluence& step) {
  return influence_ratios(step.visual_total, step.prompt_total, step.history_total);
}

}  // namespace gacd
