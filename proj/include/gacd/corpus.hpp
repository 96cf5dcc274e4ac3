// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic scenes with controlled object co-occurrence.
//
// A scene is a shuffled bag of feature vectors: one per visible object
// (class prototype plus Gaussian noise) and a few pure-noise distractors.
// Training captions name every present object, including occluded ones that
// have no feature row.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gacd/model.hpp"
#include "gacd/rng.hpp"
#include "gacd/tensor.hpp"
#include "gacd/vocab.hpp"

namespace gacd {

struct CooccurrencePair {
  std::string source;
  std::string partner;
  double probability = 0.0;  // P(partner present | source present)
};

struct CorpusConfig {
  std::vector<std::string> classes = {"chair", "table", "dog", "cup",
                                      "car",   "book",  "tree", "lamp"};
  std::vector<CooccurrencePair> pairs = {{"chair", "table", 0.9}};
  std::vector<std::string> prompt = {"describe", "the", "scene", ":"};
  double base_rate = 0.2;
  std::size_t max_objects = 5;
  /// Probability that two consecutive objects share one sentence
  /// ("a X and a Y .") instead of getting one sentence each.
  double pair_rate = 0.5;
  std::size_t min_distractors = 0;
  std::size_t max_distractors = 3;
  std::size_t train_scenes = 2000;
  std::size_t test_scenes = 100;
  /// Per biased pair: this many source-only and this many partner-only
  /// held-out scenes.
  std::size_t test_single = 100;
  std::size_t d_visual = 16;
  double noise = 0.25;
  double prototype_norm = 2.0;
  /// Probability that a present object is left out of a training scene's
  /// features while its caption still names it.
  double occlusion = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SceneSpec {
  std::string id;
  std::vector<std::string> objects;  // present classes, sorted by class index
  Tensor features;                   // k x d_v, shuffled
  std::vector<std::string> caption;  // reference caption tokens
};

struct Corpus {
  std::vector<SceneSpec> train;
  std::vector<SceneSpec> test;
};

/// Empirical co-occurrence statistics of a scene set.
struct CooccurrenceStats {
  std::vector<std::string> classes;
  std::vector<std::size_t> count;               // scenes containing class a
  std::vector<std::vector<std::size_t>> joint;  // scenes containing a and b

  /// P(b | a); 0 when a never occurs.
  double conditional(std::size_t a, std::size_t b) const;
  double conditional(const std::string& a, const std::string& b) const;
  std::size_t index(const std::string& name) const;
};

Corpus generate_corpus(const CorpusConfig& config);

/// Class prototype vectors (one row per class) for a config's seed.
Tensor class_prototypes(const CorpusConfig& config);

/// Samples one scene's object set according to the co-occurrence model.
std::vector<std::string> sample_objects(const CorpusConfig& config, SplitRng& rng);

/// "a X and a Y . a Z ." style caption over objects in the given order.
std::vector<std::string> caption_for(const std::vector<std::string>& objects);
std::vector<std::string> caption_for(const std::vector<std::string>& objects, double pair_rate,
                                     SplitRng& rng);

CooccurrenceStats cooccurrence_stats(const std::vector<SceneSpec>& scenes,
                                     const std::vector<std::string>& classes);

/// Lexicon for the corpus: caption words, prompt words and one noun per class.
Vocab corpus_vocab(const CorpusConfig& config, std::size_t vocab_size);

/// BOS + caption + EOS with the corpus prompt, ready for training.
TrainExample training_example(const SceneSpec& scene, const Vocab& vocab,
                              const std::vector<std::string>& prompt);

std::string scenes_to_jsonl(const std::vector<SceneSpec>& scenes);
std::vector<SceneSpec> scenes_from_jsonl(const std::string& text);
void write_scenes(const std::string& path, const std::vector<SceneSpec>& scenes);
std::vector<SceneSpec> read_scenes(const std::string& path);

std::string stats_to_json(const CooccurrenceStats& stats);
CooccurrenceStats stats_from_json(const std::string& text);

}  // namespace gacd
