// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Caption hallucination metrics over synthetic scenes.
//
// A mention is one noun token in a caption; it is hallucinated when the
// scene does not contain the class it names. Percentages are in [0, 100].

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gacd/corpus.hpp"
#include "gacd/grouping.hpp"
#include "gacd/vocab.hpp"

namespace gacd {

using Caption = std::vector<TokenId>;

struct ChairMetrics {
  double sentence = 0.0;  // C_S
  double instance = 0.0;  // C_I
  double recall = 0.0;    // R
  double length = 0.0;    // Len
  std::size_t captions = 0;
  std::size_t hallucinated_captions = 0;
  std::size_t mentions = 0;
  std::size_t hallucinated_mentions = 0;
  std::size_t present = 0;   // distinct present classes, summed over scenes
  std::size_t recalled = 0;  // distinct correctly mentioned classes, summed
};

/// Captions are token ids without EOS, one per scene in the same order.
ChairMetrics chair_metrics(const std::vector<Caption>& captions,
                           const std::vector<SceneSpec>& scenes, const Vocab& vocab);

struct CogResult {
  std::optional<double> rate;  // empty without hallucinated mentions
  std::size_t hallucinated = 0;
  std::size_t cooccurring = 0;
};

/// Share of hallucinated mentions whose class follows some present class
/// with training probability P(hallucinated | present) above `threshold`.
CogResult cog_metric(const std::vector<Caption>& captions, const std::vector<SceneSpec>& scenes,
                     const Vocab& vocab, const CooccurrenceStats& train_stats,
                     double threshold = 0.5);

struct SameTopTokenResult {
  std::optional<double> rate;  // empty without hallucinated noun emissions
  std::size_t hallucinated = 0;
  std::size_t shared = 0;
};

/// Share of hallucinated noun emissions whose most influential visual token
/// is also the most influential one of an earlier, correctly emitted noun.
/// Reads the anchors recorded during decoding (the first anchor per step).
SameTopTokenResult same_top_token_diagnostic(const std::vector<std::vector<Anchor>>& anchors,
                                             const std::vector<SceneSpec>& scenes,
                                             const Vocab& vocab);

/// Percentage of scenes containing `source` but not `partner` whose caption
/// mentions `partner`; empty when no such scene exists.
std::optional<double> pair_hallucination_rate(const std::vector<Caption>& captions,
                                              const std::vector<SceneSpec>& scenes,
                                              const Vocab& vocab, const std::string& source,
                                              const std::string& partner);

struct MetricsReport {
  double C_S = 0.0;
  double C_I = 0.0;
  double R = 0.0;
  double Len = 0.0;
  std::optional<double> cog;
  std::map<std::string, std::optional<double>> pair_hallucination;  // "a->b"
  std::optional<double> same_top_token_rate;
  double es_rate = 0.0;
  std::optional<double> es_mean_delta_len;
  double mean_r_v = 0.0;
  double mean_gap = 0.0;
  double mean_confidence = 0.0;

  /// Undefined values are written as null.
  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Report field names in serialization order.
const std::vector<std::string>& report_fields();

}  // namespace gacd
