// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Evaluation harness: decodes a scene set under one decoder configuration,
// scores the captions, and sweeps configuration grids.

#pragma once

#include <string>
#include <vector>

#include "gacd/corpus.hpp"
#include "gacd/decoder.hpp"
#include "gacd/metrics.hpp"

namespace gacd {

struct EvalOptions {
  DecoderConfig decoder;
  /// Worker threads; 0 means one.
  std::size_t jobs = 1;
  double cog_threshold = 0.5;
  /// Pairs scored in both directions under pair_hallucination.
  std::vector<CooccurrencePair> pairs;
};

struct SceneResult {
  DecodeResult decode;
  Caption caption;
  /// Caption length of the VA+CR rerun on early-stopped scenes.
  std::optional<std::size_t> rerun_length;
};

struct Evaluation {
  MetricsReport report;
  std::vector<SceneResult> scenes;
};

/// Seed of the decoding stream for scene `index` under root `seed`.
std::uint64_t scene_seed(std::uint64_t seed, std::size_t index);

/// Decodes every scene (in parallel when jobs > 1) and merges results in
/// scene order, so the report does not depend on the job count.
Evaluation evaluate(const ModelParams& params, const Vocab& vocab,
                    const std::vector<SceneSpec>& scenes, const std::vector<TokenId>& prompt,
                    const CooccurrenceStats& train_stats, const EvalOptions& options);

MetricsReport summarize(const std::vector<SceneResult>& results,
                        const std::vector<SceneSpec>& scenes, const Vocab& vocab,
                        const CooccurrenceStats& train_stats, const EvalOptions& options);

struct AblationGrid {
  std::vector<DecodeMode> modes;
  std::vector<double> alpha_max;
  std::vector<double> epsilon;
  std::vector<InfluenceNorm> norms;

  void validate() const;
  std::size_t cells() const;
};

struct AblationCell {
  DecodeMode mode = DecodeMode::kBaseline;
  double alpha_max = 0.0;
  double epsilon = 0.0;
  InfluenceNorm norm = InfluenceNorm::kL1;
  MetricsReport report;
};

/// One evaluation per grid cell; the loops run mode, alpha_max, epsilon,
/// norm from outermost to innermost. Other decoder settings come from
/// `base`.
std::vector<AblationCell> run_ablation(const ModelParams& params, const Vocab& vocab,
                                       const std::vector<SceneSpec>& scenes,
                                       const std::vector<TokenId>& prompt,
                                       const CooccurrenceStats& train_stats,
                                       const EvalOptions& base, const AblationGrid& grid);

/// Header plus one row per cell; undefined values are empty fields.
std::string sweep_csv(const std::vector<AblationCell>& cells);

/// One JSON object per decoding step (early-stop probes included).
std::string trace_jsonl(const std::vector<SceneSpec>& scenes,
                        const std::vector<SceneResult>& results, const Vocab& vocab);

}  // namespace gacd
