// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "gacd/error.hpp"
#include "gacd/tensor.hpp"
#include "test_util.hpp"

using namespace gacd;
using gacd::testing::gradient_check;
using gacd::testing::random_tensor;

namespace {

// Reduces an arbitrary-shaped node to a scalar with fixed random weights so
// every output entry contributes to the gradient.
Var weighted_sum(Tape& t, Var x, std::uint64_t seed) {
  const Tensor& v = t.value(x);
  SplitRng rng(seed);
  Var w = t.constant(random_tensor(v.rows(), v.cols(), rng));
  return t.sum(t.mul(x, w));
}

}  // namespace

TEST_CASE("row_softmax matches closed forms") {
  Tape t;
  Var a = t.constant(Tensor::row_vector({0, 0, 0, 0}));
  const Tensor& u = t.value(t.row_softmax(a));
  for (double p : u.data()) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));

  Var b = t.constant(Tensor::row_vector({0, std::log(2.0)}));
  const Tensor& s = t.value(t.row_softmax(b));
  CHECK(std::abs(s[0] - 1.0 / 3.0) < 1e-15);
  CHECK(std::abs(s[1] - 2.0 / 3.0) < 1e-15);
}

TEST_CASE("matmul with identity returns the operand") {
  SplitRng rng(3);
  const Tensor a = random_tensor(3, 5, rng);
  Tape t;
  Var out = t.matmul(t.constant(Tensor::identity(3)), t.constant(a));
  CHECK(t.value(out) == a);
}

TEST_CASE("shape mismatches are rejected with a diagnostic") {
  Tape t;
  Var a = t.constant(Tensor::zeros(2, 3));
  Var b = t.constant(Tensor::zeros(2, 3));
  try {
    t.matmul(a, b);
    FAIL("expected shape error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kShapeMismatch);
    CHECK(std::string(e.what()).find("[2x3]") != std::string::npos);
  }
  CHECK_THROWS_AS(t.add(a, t.constant(Tensor::zeros(3, 2))), Error);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1.0}), Error);
}

TEST_CASE("backward of a dot product is the other operand") {
  Tape t;
  const Tensor w = Tensor::row_vector({1.5, -2.0, 0.25});
  Var x = t.leaf(Tensor::from_rows({{3.0}, {1.0}, {-4.0}}));
  Var out = t.matmul(t.constant(w), x);
  const GradientMap g = t.backward(out);
  const Tensor& gx = g.at(x);
  CHECK(gx[0] == 1.5);
  CHECK(gx[1] == -2.0);
  CHECK(gx[2] == 0.25);
}

TEST_CASE("disconnected leaf receives an exact zero gradient") {
  Tape t;
  Var x = t.leaf(Tensor::row_vector({1.0, 2.0}));
  Var unused = t.leaf(Tensor::row_vector({5.0, 6.0, 7.0}));
  Var out = t.sum(t.mul(x, x));
  const GradientMap g = t.backward(out);
  CHECK(g.at(unused) == Tensor({1, 3}));
  CHECK(g.at(x) == Tensor::row_vector({2.0, 4.0}));
}

TEST_CASE("backward rejects non-scalar targets") {
  Tape t;
  Var x = t.leaf(Tensor::row_vector({1.0, 2.0}));
  CHECK_THROWS_AS(t.backward(t.scale(x, 2.0)), Error);
}

TEST_CASE("finite differences: closed form and precondition") {
  auto f = [](const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v * v;
    return s;
  };
  const Tensor g = finite_difference_gradient(f, Tensor::row_vector({1.0, 2.0}), 1e-5);
  CHECK(std::abs(g[0] - 2.0) < 1e-8);
  CHECK(std::abs(g[1] - 4.0) < 1e-8);
  CHECK_THROWS_AS(finite_difference_gradient(f, Tensor::row_vector({1.0}), 0.0), Error);
}

TEST_CASE("log of softmax entry matches finite differences over 20 seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SplitRng rng(seed);
    const Tensor z = random_tensor(1, 7, rng);
    const std::size_t k = seed % 7;
    const double err = gradient_check(
        [k](Tape& t, const std::vector<Var>& in) {
          return t.log(t.pick(t.row_softmax(in[0]), 0, k));
        },
        {z});
    CHECK(err < 1e-5);
  }
}

TEST_CASE("every primitive agrees with finite differences at 20 random points") {
  struct Case {
    const char* name;
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    gacd::testing::GraphBuilder build;
    bool positive = false;
  };
  auto mask = std::make_shared<std::vector<std::uint8_t>>(
      std::vector<std::uint8_t>{1, 0, 0, 1, 1, 0, 1, 1, 1, 1, 1, 1});
  const std::vector<Case> cases = {
      {"matmul", {{3, 4}, {4, 2}}, [](Tape& t, const auto& v) { return weighted_sum(t, t.matmul(v[0], v[1]), 1); }},
      {"matmul_nt", {{3, 4}, {5, 4}}, [](Tape& t, const auto& v) { return weighted_sum(t, t.matmul_nt(v[0], v[1]), 2); }},
      {"add", {{2, 3}, {2, 3}}, [](Tape& t, const auto& v) { return weighted_sum(t, t.add(v[0], v[1]), 3); }},
      {"add_row", {{4, 3}, {1, 3}}, [](Tape& t, const auto& v) { return weighted_sum(t, t.add_row(v[0], v[1]), 4); }},
      {"mul", {{2, 3}, {2, 3}}, [](Tape& t, const auto& v) { return weighted_sum(t, t.mul(v[0], v[1]), 5); }},
      {"scale", {{2, 3}}, [](Tape& t, const auto& v) { return weighted_sum(t, t.scale(v[0], -1.7), 6); }},
      {"row_softmax", {{3, 5}}, [](Tape& t, const auto& v) { return weighted_sum(t, t.row_softmax(v[0]), 7); }},
      {"masked_softmax", {{4, 3}}, [mask](Tape& t, const auto& v) { return weighted_sum(t, t.row_softmax(v[0], mask), 8); }},
      {"layer_norm", {{3, 6}, {1, 6}, {1, 6}}, [](Tape& t, const auto& v) { return weighted_sum(t, t.layer_norm(v[0], v[1], v[2]), 9); }},
      {"gelu", {{3, 4}}, [](Tape& t, const auto& v) { return weighted_sum(t, t.gelu(v[0]), 10); }},
      {"log", {{2, 4}}, [](Tape& t, const auto& v) { return weighted_sum(t, t.log(v[0]), 11); }, true},
      {"embedding", {{5, 3}}, [](Tape& t, const auto& v) { return weighted_sum(t, t.embedding(v[0], {4, 0, 4, 2}), 12); }},
      {"concat_rows", {{2, 3}, {1, 3}}, [](Tape& t, const auto& v) { return weighted_sum(t, t.concat_rows({v[0], v[1], v[0]}), 13); }},
      {"concat_cols", {{2, 3}, {2, 1}}, [](Tape& t, const auto& v) { return weighted_sum(t, t.concat_cols({v[1], v[0]}), 14); }},
      {"slice_rows", {{5, 3}}, [](Tape& t, const auto& v) { return weighted_sum(t, t.slice_rows(v[0], 1, 4), 15); }},
      {"slice_cols", {{3, 5}}, [](Tape& t, const auto& v) { return weighted_sum(t, t.slice_cols(v[0], 2, 5), 16); }},
      {"pick", {{3, 3}}, [](Tape& t, const auto& v) { return t.pick(t.gelu(v[0]), 2, 1); }},
      {"cross_entropy", {{3, 6}}, [](Tape& t, const auto& v) { return t.cross_entropy(v[0], {1, 5, 0}); }},
  };
  for (const Case& c : cases) {
    CAPTURE(c.name);
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      SplitRng rng = SplitRng(seed).split(c.name);
      std::vector<Tensor> inputs;
      for (auto [r, k] : c.shapes) {
        Tensor x = random_tensor(r, k, rng);
        if (c.positive) {
          for (double& v : x.data()) v = 0.5 + std::abs(v);
        }
        inputs.push_back(std::move(x));
      }
      worst = std::max(worst, gradient_check(c.build, inputs));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("softmax is a shift-invariant probability vector") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SplitRng rng(seed);
    const Tensor z = random_tensor(1, 16, rng, 5.0);
    const double shift = 100.0 * rng.normal();
    Tensor shifted = z;
    for (double& v : shifted.data()) v += shift;
    const auto p = softmax(z.data());
    const auto q = softmax(shifted.data());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(p[i] >= 0.0);
      CHECK(std::abs(p[i] - q[i]) <= 1e-12);
      total += p[i];
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("replay with identical leaves is bit-exact, and tracks leaf edits") {
  SplitRng rng(11);
  const Tensor x0 = random_tensor(3, 4, rng);
  const Tensor w0 = random_tensor(4, 4, rng);
  Tape t;
  Var x = t.leaf(x0);
  Var w = t.leaf(w0);
  Var out = t.sum(t.gelu(t.row_softmax(t.matmul(x, w))));
  const Tensor first = t.value(out);
  const GradientMap g1 = t.backward(out);
  t.replay();
  CHECK(t.value(out) == first);
  const GradientMap g2 = t.backward(out);
  CHECK(g1.at(x) == g2.at(x));
  CHECK(g1.at(w) == g2.at(w));

  Tensor x1 = x0;
  x1[0] += 0.5;
  t.set_leaf(x, x1);
  t.replay();
  Tape fresh;
  Var out2 = fresh.sum(fresh.gelu(
      fresh.row_softmax(fresh.matmul(fresh.leaf(x1), fresh.leaf(w0)))));
  CHECK(t.value(out) == fresh.value(out2));
  CHECK_THROWS_AS(t.set_leaf(x, Tensor::zeros(1, 1)), Error);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Tensor p = Tensor::row_vector({1.0, -2.0, 3.0});
  const Tensor before = p;
  AdamState state;
  Tensor* ptrs[] = {&p};
  const Tensor grads[] = {Tensor({1, 3})};
  for (int i = 0; i < 5; ++i) adam_step(ptrs, grads, state, 0.1);
  CHECK(p == before);
}

TEST_CASE("adam: quadratic converges to its minimizer") {
  // f(w) = (w - 3)^2, minimizer 3
  Tensor w = Tensor::scalar(-1.0);
  AdamState state;
  Tensor* ptrs[] = {&w};
  int steps = 0;
  for (; steps < 2000; ++steps) {
    const Tensor g[] = {Tensor::scalar(2.0 * (w[0] - 3.0))};
    adam_step(ptrs, g, state, 0.05);
  }
  CHECK(std::abs(w[0] - 3.0) < 1e-3);
}

TEST_CASE("adam: deterministic and rejects non-finite gradients") {
  auto run = [] {
    SplitRng rng(5);
    Tensor w = random_tensor(2, 3, rng);
    AdamState state;
    Tensor* ptrs[] = {&w};
    for (int i = 0; i < 50; ++i) {
      Tensor g = random_tensor(2, 3, rng);
      const Tensor gs[] = {g};
      adam_step(ptrs, gs, state, 0.01);
    }
    return w;
  };
  CHECK(run() == run());

  Tensor w = Tensor::scalar(1.0);
  AdamState state;
  Tensor* ptrs[] = {&w};
  const Tensor bad[] = {Tensor::scalar(std::nan(""))};
  try {
    adam_step(ptrs, bad, state, 0.1);
    FAIL("expected divergence error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDiverged);
  }
  CHECK(w[0] == 1.0);
}
