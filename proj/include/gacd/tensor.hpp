// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Dense double-precision matrices and a define-by-run reverse-mode tape.
//
// Every tensor in this library is rank 2 (a vector is 1 x n, a scalar 1 x 1).
// A Tape records primitive ops as they execute; `backward` walks the records
// in reverse from a scalar node and returns gradients for every leaf created
// with `Tape::leaf`. Constants never receive gradients and nodes that do not
// depend on any leaf are skipped during the reverse pass.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gacd {

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::size_t rows, std::size_t cols) {
    return Tensor({rows, cols});
  }
  static Tensor scalar(double value) { return Tensor({1, 1}, {value}); }
  static Tensor row_vector(std::vector<double> values);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  bool all_finite() const noexcept;
  std::string shape_string() const;

  // Bitwise value equality (NaN payloads aside); used for determinism checks.
  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Softmax of a single row with max subtraction.
std::vector<double> softmax(std::span<const double> logits);
/// log(sum(exp(x))) with max subtraction.
double log_sum_exp(std::span<const double> logits);

/// Handle to a node recorded on a Tape. Only meaningful for the tape that
/// produced it.
struct Var {
  std::uint32_t id = 0;
};

/// Per-row attention mask: `allowed[r * cols + c] != 0` keeps entry (r, c).
using RowMask = std::shared_ptr<const std::vector<std::uint8_t>>;

class GradientMap {
 public:
  void set(Var leaf, Tensor grad);
  const Tensor& at(Var leaf) const;
  bool contains(Var leaf) const;
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::vector<std::pair<std::uint32_t, Tensor>> entries_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  Var leaf(Tensor value);
  Var constant(Tensor value);

  const Tensor& value(Var v) const;
  std::size_t node_count() const noexcept { return nodes_.size(); }
  const std::vector<Var>& leaves() const noexcept { return leaves_; }

  // Primitive ops. All operands must live on this tape.
  Var matmul(Var a, Var b);
  /// a * b^T
  Var matmul_nt(Var a, Var b);
  Var add(Var a, Var b);
  /// Adds a 1 x c row to every row of an r x c matrix.
  Var add_row(Var a, Var row);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var row_softmax(Var a, RowMask mask = nullptr);
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
  Var gelu(Var a);
  Var log(Var a);
  Var sum(Var a);
  Var embedding(Var table, std::vector<std::uint32_t> ids);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  Var slice_rows(Var a, std::size_t begin, std::size_t end);
  Var slice_cols(Var a, std::size_t begin, std::size_t end);
  /// Scalar a[r, c].
  Var pick(Var a, std::size_t r, std::size_t c);
  /// Mean over rows of -log softmax(logits[r])[targets[r]].
  Var cross_entropy(Var logits, std::vector<std::uint32_t> targets, double smoothing = 0.0);

  /// Reverse pass from a 1 x 1 node. Returns d(target)/d(leaf) for every leaf.
  GradientMap backward(Var target);

  /// Replaces a leaf's value; shape must not change. Call `replay` to
  /// recompute dependent nodes.
  void set_leaf(Var leaf, Tensor value);
  /// Recomputes every non-leaf node in recording order.
  void replay();

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool is_leaf = false;
    bool requires_grad = false;
    std::function<Tensor(const Tape&)> forward;
    std::function<void(Tape&, std::uint32_t)> backward;
  };

  Var record(std::vector<Var> parents,
             std::function<Tensor(const Tape&)> forward,
             std::function<void(Tape&, std::uint32_t)> backward);
  Node& node(Var v);
  const Node& node(Var v) const;
  /// Accumulates `g` into the gradient of `v` if it requires one.
  void accumulate(Var v, const Tensor& g);
  bool needs_grad(Var v) const { return node(v).requires_grad; }

  std::vector<Node> nodes_;
  std::vector<Var> leaves_;
};

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double h);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One Adam update of `params` in place. Throws Error(kDiverged) if any
/// gradient entry is not finite; params are left untouched in that case.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
               AdamState& state, double lr);

}  // namespace gacd
