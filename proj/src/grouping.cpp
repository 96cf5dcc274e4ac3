// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "gacd/grouping.hpp"

#include <algorithm>
#include <numeric>

#include "gacd/error.hpp"

namespace gacd {

std::vector<std::size_t> top_indices(std::span<const double> values, std::size_t k) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

std::vector<Anchor> AnchorMask::add(std::size_t step, TokenId noun, int object_class,
                                    std::span<const double> visual_influence,
                                    std::size_t top_k) {
  require(visual_influence.size() == mask_.size(), ErrorCode::kInvalidArgument,
          "anchor influence has " + std::to_string(visual_influence.size()) +
              " entries for a mask of " + std::to_string(mask_.size()));
  std::vector<Anchor> added;
  for (std::size_t s : top_indices(visual_influence, top_k)) {
    mask_[s] = true;
    added.push_back({step, noun, object_class, s, visual_influence[s]});
    anchors_.push_back(added.back());
  }
  return added;
}

std::size_t AnchorMask::set_count() const {
  return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), true));
}

std::vector<NounMention> detect_nouns(std::span<const TokenId> emitted, const Vocab& vocab) {
  std::vector<NounMention> out;
  for (std::size_t i = 0; i < emitted.size(); ++i) {
    if (vocab.is_noun(emitted[i])) {
      out.push_back({i + 1, emitted[i], vocab.object_class(emitted[i])});
    }
  }
  return out;
}

AnchorMask build_anchor_mask(const ModelParams& params, const Tensor& visual,
                             const std::vector<TokenId>& prompt,
                             const std::vector<TokenId>& history, const Vocab& vocab,
                             const InfluenceOptions& options, std::size_t top_k) {
  const std::size_t s = visual.size() == 0 ? 0 : visual.rows();
  AnchorMask mask(s);
  if (s == 0 || history.size() < 2) return mask;
  const std::span<const TokenId> emitted(history.data() + 1, history.size() - 1);
  for (const NounMention& n : detect_nouns(emitted, vocab)) {
    SequenceInput in;
    in.visual = visual;
    in.prompt = prompt;
    in.history.assign(history.begin(), history.begin() + static_cast<std::ptrdiff_t>(n.step));
    const StepInfluence inf = token_influence(params, in, n.token, options, &vocab);
    mask.add(n.step, n.token, n.object_class, inf.visual, top_k);
  }
  return mask;
}

ObjectPartition partition(std::span<const double> visual_influence,
                          const std::vector<bool>& mask) {
  require(visual_influence.size() == mask.size(), ErrorCode::kInvalidArgument,
          "partition: mask length " + std::to_string(mask.size()) + " does not match " +
              std::to_string(visual_influence.size()) + " visual tokens");
  ObjectPartition p;
  for (std::size_t s = 0; s < mask.size(); ++s) {
    if (mask[s]) {
      p.object.push_back(s);
      p.object_influence += visual_influence[s];
    } else {
      p.unrelated.push_back(s);
      p.unrelated_influence += visual_influence[s];
    }
  }
  return p;
}

Tensor negative_visual(const Tensor& visual, const ObjectPartition& split,
                       NegativeBranch mode) {
  const std::size_t d = visual.rank() == 2 ? visual.cols() : 0;
  if (mode == NegativeBranch::kZero) {
    Tensor out = visual;
    for (std::size_t s : split.unrelated) {
      for (double& v : out.row(s)) v = 0.0;
    }
    return out;
  }
  Tensor out({split.object.size(), d});
  for (std::size_t k = 0; k < split.object.size(); ++k) {
    auto src = visual.row(split.object[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

}  // namespace gacd
