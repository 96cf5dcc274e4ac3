// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "gacd/error.hpp"
#include "gacd/model.hpp"
#include "test_util.hpp"

using namespace gacd;
using gacd::testing::gradient_check;
using gacd::testing::random_tensor;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.vocab_size = 24;
  c.d_model = 8;
  c.heads = 2;
  c.layers = 2;
  c.d_visual = 4;
  c.max_visual = 4;
  c.context = 24;
  return c;
}

ModelParams random_model(std::uint64_t seed, double scale = 0.3) {
  ModelConfig c = small_config();
  c.init_scale = scale;
  return ModelParams::init(c, SplitRng(seed));
}

}  // namespace

TEST_CASE("init is a pure function of config and seed") {
  CHECK(random_model(1) == random_model(1));
  CHECK_FALSE(random_model(1) == random_model(2));
}

TEST_CASE("model config validation") {
  ModelConfig c = small_config();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config();
  c.max_visual = c.context;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("text logits are causal") {
  const ModelParams p = random_model(3);
  SplitRng rng(4);
  const Tensor visual = random_tensor(3, 8, rng);
  std::vector<TokenId> text = {0, 5, 6, 7, 8, 9};
  const Tensor a = forward_text_logits(p, visual, text);
  text[4] = 11;
  text[5] = 12;
  const Tensor b = forward_text_logits(p, visual, text);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) CHECK(a.at(r, c) == b.at(r, c));
  }
  bool changed = false;
  for (std::size_t c = 0; c < a.cols(); ++c) changed |= a.at(4, c) != b.at(4, c);
  CHECK(changed);
}

TEST_CASE("visual tokens are an unordered set") {
  const ModelParams p = random_model(5);
  SplitRng rng(6);
  const Tensor visual = random_tensor(4, 8, rng);
  Tensor permuted({4, 8});
  const std::size_t order[] = {2, 0, 3, 1};
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 8; ++j) permuted.at(i, j) = visual.at(order[i], j);
  }
  const SequenceInput in{visual, {3, 4}, {0, 5}};
  const SequenceInput in2{permuted, {3, 4}, {0, 5}};
  const ForwardPass a = forward_logits(p, in);
  const ForwardPass b = forward_logits(p, in2);
  for (std::size_t k = 0; k < a.logit_values().size(); ++k) {
    CHECK(std::abs(a.logit_values()[k] - b.logit_values()[k]) < 1e-12);
  }
}

TEST_CASE("single-query and full-sequence forwards agree") {
  const ModelParams p = random_model(7);
  SplitRng rng(8);
  const Tensor visual = random_tensor(2, 8, rng);
  const SequenceInput in{visual, {3, 4, 5}, {0, 9, 10}};
  const ForwardPass fp = forward_logits(p, in);
  const Tensor all = forward_text_logits(p, visual, {3, 4, 5, 0, 9, 10});
  for (std::size_t k = 0; k < all.cols(); ++k) {
    CHECK(std::abs(fp.logit_values()[k] - all.at(5, k)) < 1e-12);
  }
}

TEST_CASE("sequence log-likelihood is the sum of per-step log-probabilities") {
  const ModelParams p = random_model(9);
  SplitRng rng(10);
  const Tensor visual = random_tensor(2, 8, rng);
  const SequenceInput in{visual, {3, 4}, {0}};
  const std::vector<TokenId> y = {7, 8, 1};
  double expected = 0.0;
  std::vector<TokenId> history = in.history;
  for (TokenId tok : y) {
    const ForwardPass fp = forward_logits(p, {visual, in.prompt, history});
    const auto z = fp.logit_values();
    expected += z[tok] - log_sum_exp(z);
    history.push_back(tok);
  }
  CHECK(std::abs(sequence_log_likelihood(p, in, y) - expected) < 1e-10);
}

TEST_CASE("input lengths and ids are checked") {
  const ModelParams p = random_model(11);
  SplitRng rng(12);
  CHECK_THROWS_AS(forward_logits(p, {random_tensor(5, 8, rng), {3}, {0}}), Error);
  CHECK_THROWS_AS(forward_logits(p, {random_tensor(2, 7, rng), {3}, {0}}), Error);
  CHECK_THROWS_AS(forward_logits(p, {Tensor(), {3}, {99}}), Error);
  std::vector<TokenId> long_history(30, 2);
  CHECK_THROWS_AS(forward_logits(p, {Tensor(), {3}, long_history}), Error);
}

TEST_CASE("checkpoint round trip is exact and corrupt bytes are rejected") {
  const ModelParams p = random_model(13);
  const std::string bytes = p.serialize();
  const ModelParams q = ModelParams::deserialize(bytes);
  CHECK(p == q);
  CHECK(q.config == p.config);
  SplitRng rng(14);
  const SequenceInput in{random_tensor(2, 8, rng), {3}, {0, 4}};
  const ForwardPass a = forward_logits(p, in);
  const ForwardPass b = forward_logits(q, in);
  for (std::size_t k = 0; k < a.logit_values().size(); ++k) {
    CHECK(a.logit_values()[k] == b.logit_values()[k]);
  }
  CHECK_THROWS_AS(ModelParams::deserialize(bytes.substr(0, bytes.size() / 2)), Error);
  CHECK_THROWS_AS(ModelParams::deserialize("not a checkpoint"), Error);
  CHECK_THROWS_AS(ModelParams::load("/nonexistent/dir/model.bin"), Error);
}

TEST_CASE("smoothed cross-entropy matches its closed form and finite differences") {
  SplitRng rng(15);
  const Tensor z = random_tensor(3, 6, rng);
  const std::vector<std::uint32_t> targets = {1, 4, 0};
  for (double s : {0.0, 0.1, 0.5}) {
    Tape t;
    const double got = t.value(t.cross_entropy(t.leaf(z), targets, s))[0];
    double expected = 0.0;
    for (std::size_t r = 0; r < 3; ++r) {
      const auto row = z.row(r);
      const double lse = log_sum_exp(row);
      double uniform = 0.0;
      for (double v : row) uniform += lse - v;
      expected += (1.0 - s) * (lse - row[targets[r]]) + s / 6.0 * uniform;
    }
    CHECK(std::abs(got - expected / 3.0) < 1e-12);
    const double err = gradient_check(
        [&](Tape& tp, const std::vector<Var>& in) {
          return tp.cross_entropy(in[0], targets, s);
        },
        {z});
    CHECK(err < 1e-7);
  }
  Tape t;
  CHECK_THROWS_AS(t.cross_entropy(t.leaf(z), targets, 1.0), Error);
}

TEST_CASE("training memorizes a handful of captions") {
  ModelConfig c = small_config();
  c.vocab_size = 16;
  c.d_model = 16;
  const ModelParams init = ModelParams::init(c, SplitRng(16));
  SplitRng rng(17);
  std::vector<TrainExample> data;
  for (std::size_t i = 0; i < 4; ++i) {
    TrainExample ex;
    ex.features = random_tensor(2, 4, rng);
    ex.prompt = {2, 3};
    ex.tokens = {0, static_cast<TokenId>(4 + i), static_cast<TokenId>(8 + i), 1};
    data.push_back(ex);
  }
  TrainConfig tc;
  tc.epochs = 150;
  tc.batch = 4;
  tc.lr = 1e-2;
  tc.text_only_fraction = 0.0;
  tc.label_smoothing = 0.0;
  const TrainResult r = train(init, data, tc);
  REQUIRE_FALSE(r.diverged);
  CHECK(r.loss_curve.size() == 150);
  CHECK(r.loss_curve.back() < 0.2 * r.loss_curve.front());
  CHECK(teacher_forced_accuracy(r.params, data) == doctest::Approx(1.0));
  CHECK(r.reached_plateau);

  const TrainResult again = train(init, data, tc);
  CHECK(again.params == r.params);
  CHECK(again.loss_curve == r.loss_curve);
}

TEST_CASE("training views draw text-only examples at the configured rate") {
  SplitRng rng(18);
  const Tensor f = random_tensor(3, 4, rng);
  TrainConfig tc;
  tc.text_only_fraction = 0.0;
  CHECK(training_view(f, tc, rng) == f);
  tc.text_only_fraction = 1.0;
  CHECK(training_view(f, tc, rng).size() == 0);
  tc.text_only_fraction = 0.25;
  int empty = 0;
  for (int i = 0; i < 4000; ++i) empty += training_view(f, tc, rng).size() == 0 ? 1 : 0;
  // Binomial(4000, 0.25): mean 1000, sd ~27.4.
  CHECK(std::abs(empty - 1000) < 110);
}
