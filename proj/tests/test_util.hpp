// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "gacd/corpus.hpp"
#include "gacd/model.hpp"
#include "gacd/rng.hpp"
#include "gacd/tensor.hpp"
#include "gacd/vocab.hpp"

namespace gacd::testing {

inline Tensor random_tensor(std::size_t rows, std::size_t cols, SplitRng& rng,
                            double scale = 1.0) {
  Tensor t({rows, cols});
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

/// ||a - b||_2 / max(||b||_2, floor)
inline double relative_error(const Tensor& a, const Tensor& b, double floor = 1e-12) {
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    ref += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), floor);
}

using GraphBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Largest normwise relative error between reverse-mode and central
/// finite-difference gradients over all inputs of a scalar graph.
inline double gradient_check(const GraphBuilder& build, const std::vector<Tensor>& inputs,
                             double h = 1e-5) {
  Tape tape;
  std::vector<Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
  const Var out = build(tape, leaves);
  const GradientMap grads = tape.backward(out);
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto f = [&](const Tensor& x) {
      Tape t2;
      std::vector<Var> l2;
      for (std::size_t j = 0; j < inputs.size(); ++j) {
        l2.push_back(t2.leaf(j == i ? x : inputs[j]));
      }
      return t2.value(build(t2, l2))[0];
    };
    const Tensor fd = finite_difference_gradient(f, inputs[i], h);
    worst = std::max(worst, relative_error(grads.at(leaves[i]), fd));
  }
  return worst;
}

/// A small corpus and a briefly trained model shared by decoder, bench and
/// pipeline tests. Built once per process.
struct TinyLab {
  CorpusConfig corpus;
  Corpus data;
  Vocab vocab;
  ModelParams params;
  std::vector<TokenId> prompt;
  CooccurrenceStats stats;
};

inline const TinyLab& tiny_lab() {
  static const TinyLab lab = [] {
    TinyLab l;
    l.corpus.train_scenes = 300;
    l.corpus.test_scenes = 20;
    l.corpus.test_single = 15;
    l.corpus.seed = 5;
    l.data = generate_corpus(l.corpus);
    l.vocab = corpus_vocab(l.corpus, 64);
    ModelConfig mc;
    mc.vocab_size = 64;
    mc.d_model = 16;
    mc.context = 48;
    std::vector<TrainExample> examples;
    for (const SceneSpec& s : l.data.train) {
      examples.push_back(training_example(s, l.vocab, l.corpus.prompt));
    }
    TrainConfig tc;
    tc.epochs = 6;
    tc.seed = 5;
    l.params = train(ModelParams::init(mc, SplitRng(5)), examples, tc).params;
    l.prompt = l.vocab.encode(l.corpus.prompt);
    l.stats = cooccurrence_stats(l.data.train, l.corpus.classes);
    return l;
  }();
  return lab;
}

}  // namespace gacd::testing
