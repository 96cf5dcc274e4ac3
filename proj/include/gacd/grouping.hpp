// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Object-aware grouping of visual tokens.
//
// Every noun already emitted is linked to the visual token that most
// influenced it (lowest index on ties). The cumulative mask over those
// tokens splits the visual prefix into object-related tokens and the rest.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gacd/influence.hpp"
#include "gacd/model.hpp"
#include "gacd/vocab.hpp"

namespace gacd {

struct NounMention {
  std::size_t step = 0;  // 1-based position in the emitted output
  TokenId token = 0;
  int object_class = -1;
};

struct Anchor {
  std::size_t step = 0;
  TokenId noun = 0;
  int object_class = -1;
  std::size_t visual_index = 0;
  double influence = 0.0;
};

class AnchorMask {
 public:
  AnchorMask() = default;
  explicit AnchorMask(std::size_t visual_count) : mask_(visual_count, false) {}

  /// Links a noun to its top-k visual tokens under `visual_influence` and
  /// ORs them into the mask. Returns the anchors added (none when S = 0).
  std::vector<Anchor> add(std::size_t step, TokenId noun, int object_class,
                          std::span<const double> visual_influence, std::size_t top_k = 1);

  const std::vector<bool>& bits() const noexcept { return mask_; }
  const std::vector<Anchor>& anchors() const noexcept { return anchors_; }
  std::size_t size() const noexcept { return mask_.size(); }
  std::size_t set_count() const;

 private:
  std::vector<bool> mask_;
  std::vector<Anchor> anchors_;
};

struct ObjectPartition {
  std::vector<std::size_t> object;     // t^o indices
  std::vector<std::size_t> unrelated;  // t^u indices
  double object_influence = 0.0;
  double unrelated_influence = 0.0;
};

/// How the negative branch treats unmasked visual tokens.
enum class NegativeBranch { kDrop, kZero };

std::vector<NounMention> detect_nouns(std::span<const TokenId> emitted, const Vocab& vocab);

/// Indices of the k largest entries, ties to the lowest index.
std::vector<std::size_t> top_indices(std::span<const double> values, std::size_t k);

/// Rebuilds the mask for the next step from scratch: one influence pass per
/// noun in `history` (BOS first), each targeting the noun itself.
AnchorMask build_anchor_mask(const ModelParams& params, const Tensor& visual,
                             const std::vector<TokenId>& prompt,
                             const std::vector<TokenId>& history, const Vocab& vocab,
                             const InfluenceOptions& options = {}, std::size_t top_k = 1);

ObjectPartition partition(std::span<const double> visual_influence,
                          const std::vector<bool>& mask);

/// Visual input of the negative branch: masked rows only (kDrop) or every row
/// with the unmasked ones zeroed (kZero).
Tensor negative_visual(const Tensor& visual, const ObjectPartition& split,
                       NegativeBranch mode);

}  // namespace gacd
