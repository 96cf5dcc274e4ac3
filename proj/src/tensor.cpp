// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "gacd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "gacd/error.hpp"

namespace gacd {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void require_shape(bool ok, const std::string& op, const Tensor& a,
                   const Tensor& b) {
  if (!ok) {
    fail(ErrorCode::kShapeMismatch, op + ": incompatible shapes " +
                                        a.shape_string() + " and " +
                                        b.shape_string());
  }
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// C (r x c) += A (r x k) * B (k x c)
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t r = a.rows(), k = a.cols(), n = b.cols();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < r; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C (r x c) += A (r x k) * B^T, B is (c x k)
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t r = a.rows(), k = a.cols(), n = b.rows();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      pc[i * n + j] += acc;
    }
  }
}

// C (k x n) += A^T * B, A is (r x k), B is (r x n)
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t r = a.rows(), k = a.cols(), n = b.cols();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* brow = pb + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      double* crow = pc + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (product(shape_) != data_.size()) {
    fail(ErrorCode::kShapeMismatch,
         "tensor data length " + std::to_string(data_.size()) +
             " does not match shape " + shape_string());
  }
}

Tensor Tensor::row_vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::from_rows(
    std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) {
      fail(ErrorCode::kShapeMismatch, "from_rows: ragged rows");
    }
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) {
    fail(ErrorCode::kShapeMismatch, "expected rank-2 tensor, got " + shape_string());
  }
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) {
    fail(ErrorCode::kShapeMismatch, "expected rank-2 tensor, got " + shape_string());
  }
  return shape_[1];
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double x) { return std::isfinite(x); });
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

double log_sum_exp(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double x : logits) total += std::exp(x - mx);
  return mx + std::log(total);
}

// ---------------------------------------------------------------------------
// GradientMap

void GradientMap::set(Var leaf, Tensor grad) {
  for (auto& [id, g] : entries_) {
    if (id == leaf.id) {
      g = std::move(grad);
      return;
    }
  }
  entries_.emplace_back(leaf.id, std::move(grad));
}

const Tensor& GradientMap::at(Var leaf) const {
  for (const auto& [id, g] : entries_) {
    if (id == leaf.id) return g;
  }
  fail(ErrorCode::kInvalidArgument,
       "no gradient recorded for node " + std::to_string(leaf.id));
}

bool GradientMap::contains(Var leaf) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == leaf.id; });
}

// ---------------------------------------------------------------------------
// Tape bookkeeping

Tape::Node& Tape::node(Var v) {
  if (v.id >= nodes_.size()) {
    fail(ErrorCode::kInvalidArgument, "variable does not belong to this tape");
  }
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) {
    fail(ErrorCode::kInvalidArgument, "variable does not belong to this tape");
  }
  return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

Var Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.is_leaf = true;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  Var v{static_cast<std::uint32_t>(nodes_.size() - 1)};
  leaves_.push_back(v);
  return v;
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(std::vector<Var> parents,
                 std::function<Tensor(const Tape&)> forward,
                 std::function<void(Tape&, std::uint32_t)> backward) {
  Node n;
  n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                [&](Var p) { return node(p).requires_grad; });
  n.value = forward(*this);
  n.forward = std::move(forward);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::accumulate(Var v, const Tensor& g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (n.grad.empty() && !n.value.empty()) {
    n.grad = g;
    return;
  }
  auto dst = n.grad.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

GradientMap Tape::backward(Var target) {
  const Tensor& tv = value(target);
  if (tv.rank() != 2 || tv.rows() != 1 || tv.cols() != 1) {
    fail(ErrorCode::kShapeMismatch,
         "backward: target must be a scalar, got " + tv.shape_string());
  }
  for (Node& n : nodes_) n.grad = Tensor();
  if (node(target).requires_grad) node(target).grad = Tensor::scalar(1.0);
  for (std::uint32_t i = target.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.is_leaf || !n.requires_grad || n.grad.empty()) continue;
    n.backward(*this, i);
  }
  GradientMap out;
  for (Var l : leaves_) {
    const Node& n = nodes_[l.id];
    out.set(l, n.grad.empty() ? Tensor(n.value.shape()) : n.grad);
  }
  return out;
}

void Tape::set_leaf(Var leaf, Tensor value) {
  Node& n = node(leaf);
  require(n.is_leaf, ErrorCode::kInvalidArgument, "set_leaf: node is not a leaf");
  require(n.value.shape() == value.shape(), ErrorCode::kShapeMismatch,
          "set_leaf: shape changed from " + n.value.shape_string() + " to " +
              value.shape_string());
  n.value = std::move(value);
}

void Tape::replay() {
  for (Node& n : nodes_) {
    if (!n.is_leaf) n.value = n.forward(*this);
  }
}

// ---------------------------------------------------------------------------
// Primitive ops

Var Tape::matmul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_shape(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.rows(),
                "matmul", av, bv);
  return record(
      {a, b},
      [a, b](const Tape& t) {
        const Tensor& x = t.value(a);
        const Tensor& y = t.value(b);
        Tensor out({x.rows(), y.cols()});
        gemm_nn(x, y, out);
        return out;
      },
      [a, b](Tape& t, std::uint32_t self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.needs_grad(a)) {
          const Tensor& y = t.value(b);
          Tensor ga(t.value(a).shape());
          gemm_nt(g, y, ga);
          t.accumulate(a, ga);
        }
        if (t.needs_grad(b)) {
          const Tensor& x = t.value(a);
          Tensor gb(t.value(b).shape());
          gemm_tn(x, g, gb);
          t.accumulate(b, gb);
        }
      });
}

Var Tape::matmul_nt(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_shape(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.cols(),
                "matmul_nt", av, bv);
  return record(
      {a, b},
      [a, b](const Tape& t) {
        const Tensor& x = t.value(a);
        const Tensor& y = t.value(b);
        Tensor out({x.rows(), y.rows()});
        gemm_nt(x, y, out);
        return out;
      },
      [a, b](Tape& t, std::uint32_t self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.needs_grad(a)) {
          Tensor ga(t.value(a).shape());
          gemm_nn(g, t.value(b), ga);
          t.accumulate(a, ga);
        }
        if (t.needs_grad(b)) {
          Tensor gb(t.value(b).shape());
          gemm_tn(g, t.value(a), gb);
          t.accumulate(b, gb);
        }
      });
}

Var Tape::add(Var a, Var b) {
  require_shape(value(a).shape() == value(b).shape(), "add", value(a), value(b));
  return record(
      {a, b},
      [a, b](const Tape& t) {
        Tensor out = t.value(a);
        auto dst = out.data();
        auto src = t.value(b).data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        return out;
      },
      [a, b](Tape& t, std::uint32_t self) {
        const Tensor g = t.nodes_[self].grad;
        t.accumulate(a, g);
        t.accumulate(b, g);
      });
}

Var Tape::add_row(Var a, Var row) {
  const Tensor& av = value(a);
  const Tensor& rv = value(row);
  require_shape(av.rank() == 2 && rv.rank() == 2 && rv.rows() == 1 &&
                    rv.cols() == av.cols(),
                "add_row", av, rv);
  return record(
      {a, row},
      [a, row](const Tape& t) {
        Tensor out = t.value(a);
        const Tensor& r = t.value(row);
        for (std::size_t i = 0; i < out.rows(); ++i) {
          auto dst = out.row(i);
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += r[j];
        }
        return out;
      },
      [a, row](Tape& t, std::uint32_t self) {
        const Tensor g = t.nodes_[self].grad;
        t.accumulate(a, g);
        if (t.needs_grad(row)) {
          Tensor gr({1, g.cols()});
          for (std::size_t i = 0; i < g.rows(); ++i) {
            auto src = g.row(i);
            for (std::size_t j = 0; j < src.size(); ++j) gr[j] += src[j];
          }
          t.accumulate(row, gr);
        }
      });
}

Var Tape::mul(Var a, Var b) {
  require_shape(value(a).shape() == value(b).shape(), "mul", value(a), value(b));
  return record(
      {a, b},
      [a, b](const Tape& t) {
        Tensor out = t.value(a);
        auto dst = out.data();
        auto src = t.value(b).data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] *= src[i];
        return out;
      },
      [a, b](Tape& t, std::uint32_t self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.needs_grad(a)) {
          Tensor ga = g;
          auto src = t.value(b).data();
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= src[i];
          t.accumulate(a, ga);
        }
        if (t.needs_grad(b)) {
          Tensor gb = g;
          auto src = t.value(a).data();
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= src[i];
          t.accumulate(b, gb);
        }
      });
}

Var Tape::scale(Var a, double factor) {
  return record(
      {a},
      [a, factor](const Tape& t) {
        Tensor out = t.value(a);
        for (double& x : out.data()) x *= factor;
        return out;
      },
      [a, factor](Tape& t, std::uint32_t self) {
        Tensor g = t.nodes_[self].grad;
        for (double& x : g.data()) x *= factor;
        t.accumulate(a, g);
      });
}

Var Tape::row_softmax(Var a, RowMask mask) {
  const Tensor& av = value(a);
  require(av.rank() == 2, ErrorCode::kShapeMismatch,
          "row_softmax: expected rank-2 input, got " + av.shape_string());
  if (mask) {
    require(mask->size() == av.size(), ErrorCode::kShapeMismatch,
            "row_softmax: mask size does not match input " + av.shape_string());
  }
  return record(
      {a},
      [a, mask](const Tape& t) {
        const Tensor& x = t.value(a);
        Tensor out(x.shape());
        const std::size_t c = x.cols();
        for (std::size_t i = 0; i < x.rows(); ++i) {
          auto in = x.row(i);
          auto dst = out.row(i);
          const std::uint8_t* allow = mask ? mask->data() + i * c : nullptr;
          double mx = -std::numeric_limits<double>::infinity();
          for (std::size_t j = 0; j < c; ++j) {
            if (!allow || allow[j]) mx = std::max(mx, in[j]);
          }
          double total = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            dst[j] = (!allow || allow[j]) ? std::exp(in[j] - mx) : 0.0;
            total += dst[j];
          }
          if (total > 0.0) {
            for (double& p : dst) p /= total;
          }
        }
        return out;
      },
      [a](Tape& t, std::uint32_t self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].value;
        Tensor gx(y.shape());
        for (std::size_t i = 0; i < y.rows(); ++i) {
          auto yr = y.row(i);
          auto gr = g.row(i);
          double dot = 0.0;
          for (std::size_t j = 0; j < yr.size(); ++j) dot += yr[j] * gr[j];
          auto dst = gx.row(i);
          for (std::size_t j = 0; j < yr.size(); ++j) dst[j] = yr[j] * (gr[j] - dot);
        }
        t.accumulate(a, gx);
      });
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = value(x);
  require_shape(xv.rank() == 2 && value(gain).shape() == std::vector<std::size_t>{1, xv.cols()} &&
                    value(bias).shape() == value(gain).shape(),
                "layer_norm", xv, value(gain));
  return record(
      {x, gain, bias},
      [x, gain, bias, eps](const Tape& t) {
        const Tensor& in = t.value(x);
        const Tensor& g = t.value(gain);
        const Tensor& b = t.value(bias);
        Tensor out(in.shape());
        const std::size_t c = in.cols();
        for (std::size_t i = 0; i < in.rows(); ++i) {
          auto r = in.row(i);
          double mean = 0.0;
          for (double v : r) mean += v;
          mean /= static_cast<double>(c);
          double var = 0.0;
          for (double v : r) var += (v - mean) * (v - mean);
          var /= static_cast<double>(c);
          const double inv = 1.0 / std::sqrt(var + eps);
          auto dst = out.row(i);
          for (std::size_t j = 0; j < c; ++j) dst[j] = (r[j] - mean) * inv * g[j] + b[j];
        }
        return out;
      },
      [x, gain, bias, eps](Tape& t, std::uint32_t self) {
        const Tensor& gout = t.nodes_[self].grad;
        const Tensor& in = t.value(x);
        const Tensor& g = t.value(gain);
        const std::size_t c = in.cols();
        Tensor gx(in.shape());
        Tensor gg({1, c});
        Tensor gb({1, c});
        std::vector<double> xhat(c), dxhat(c);
        for (std::size_t i = 0; i < in.rows(); ++i) {
          auto r = in.row(i);
          auto go = gout.row(i);
          double mean = 0.0;
          for (double v : r) mean += v;
          mean /= static_cast<double>(c);
          double var = 0.0;
          for (double v : r) var += (v - mean) * (v - mean);
          var /= static_cast<double>(c);
          const double inv = 1.0 / std::sqrt(var + eps);
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            xhat[j] = (r[j] - mean) * inv;
            dxhat[j] = go[j] * g[j];
            sum_d += dxhat[j];
            sum_dx += dxhat[j] * xhat[j];
            gg[j] += go[j] * xhat[j];
            gb[j] += go[j];
          }
          const double n = static_cast<double>(c);
          auto dst = gx.row(i);
          for (std::size_t j = 0; j < c; ++j) {
            dst[j] = inv * (dxhat[j] - sum_d / n - xhat[j] * sum_dx / n);
          }
        }
        t.accumulate(x, gx);
        t.accumulate(gain, gg);
        t.accumulate(bias, gb);
      });
}

Var Tape::gelu(Var a) {
  return record(
      {a},
      [a](const Tape& t) {
        Tensor out = t.value(a);
        for (double& v : out.data()) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
        return out;
      },
      [a](Tape& t, std::uint32_t self) {
        Tensor g = t.nodes_[self].grad;
        auto x = t.value(a).data();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
          const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
          g[i] *= cdf + x[i] * pdf;
        }
        t.accumulate(a, g);
      });
}

Var Tape::log(Var a) {
  return record(
      {a},
      [a](const Tape& t) {
        Tensor out = t.value(a);
        for (double& v : out.data()) v = std::log(v);
        return out;
      },
      [a](Tape& t, std::uint32_t self) {
        Tensor g = t.nodes_[self].grad;
        auto x = t.value(a).data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] /= x[i];
        t.accumulate(a, g);
      });
}

Var Tape::sum(Var a) {
  return record(
      {a},
      [a](const Tape& t) {
        double total = 0.0;
        for (double v : t.value(a).data()) total += v;
        return Tensor::scalar(total);
      },
      [a](Tape& t, std::uint32_t self) {
        const double g = t.nodes_[self].grad[0];
        t.accumulate(a, Tensor(t.value(a).shape(), g));
      });
}

Var Tape::embedding(Var table, std::vector<std::uint32_t> ids) {
  const Tensor& tv = value(table);
  require(tv.rank() == 2, ErrorCode::kShapeMismatch,
          "embedding: table must be rank 2, got " + tv.shape_string());
  for (auto id : ids) {
    require(id < tv.rows(), ErrorCode::kInvalidArgument,
            "embedding: id " + std::to_string(id) + " out of range for table " +
                tv.shape_string());
  }
  auto shared = std::make_shared<const std::vector<std::uint32_t>>(std::move(ids));
  return record(
      {table},
      [table, shared](const Tape& t) {
        const Tensor& tab = t.value(table);
        Tensor out({shared->size(), tab.cols()});
        for (std::size_t i = 0; i < shared->size(); ++i) {
          auto src = tab.row((*shared)[i]);
          std::copy(src.begin(), src.end(), out.row(i).begin());
        }
        return out;
      },
      [table, shared](Tape& t, std::uint32_t self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor gt(t.value(table).shape());
        for (std::size_t i = 0; i < shared->size(); ++i) {
          auto src = g.row(i);
          auto dst = gt.row((*shared)[i]);
          for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
        }
        t.accumulate(table, gt);
      });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorCode::kInvalidArgument, "concat_rows: no inputs");
  const std::size_t c = value(parts.front()).cols();
  for (Var p : parts) {
    require_shape(value(p).rank() == 2 && value(p).cols() == c, "concat_rows",
                  value(parts.front()), value(p));
  }
  return record(
      parts,
      [parts, c](const Tape& t) {
        std::size_t r = 0;
        for (Var p : parts) r += t.value(p).rows();
        std::vector<double> data;
        data.reserve(r * c);
        for (Var p : parts) {
          auto d = t.value(p).data();
          data.insert(data.end(), d.begin(), d.end());
        }
        return Tensor({r, c}, std::move(data));
      },
      [parts, c](Tape& t, std::uint32_t self) {
        const Tensor& g = t.nodes_[self].grad;
        std::size_t offset = 0;
        for (Var p : parts) {
          const std::size_t r = t.value(p).rows();
          if (t.needs_grad(p)) {
            auto src = g.data().subspan(offset * c, r * c);
            t.accumulate(p, Tensor({r, c}, std::vector<double>(src.begin(), src.end())));
          }
          offset += r;
        }
      });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorCode::kInvalidArgument, "concat_cols: no inputs");
  const std::size_t r = value(parts.front()).rows();
  for (Var p : parts) {
    require_shape(value(p).rank() == 2 && value(p).rows() == r, "concat_cols",
                  value(parts.front()), value(p));
  }
  return record(
      parts,
      [parts, r](const Tape& t) {
        std::size_t c = 0;
        for (Var p : parts) c += t.value(p).cols();
        Tensor out({r, c});
        std::size_t offset = 0;
        for (Var p : parts) {
          const Tensor& v = t.value(p);
          for (std::size_t i = 0; i < r; ++i) {
            auto src = v.row(i);
            std::copy(src.begin(), src.end(), out.row(i).begin() + offset);
          }
          offset += v.cols();
        }
        return out;
      },
      [parts, r](Tape& t, std::uint32_t self) {
        const Tensor& g = t.nodes_[self].grad;
        std::size_t offset = 0;
        for (Var p : parts) {
          const std::size_t c = t.value(p).cols();
          if (t.needs_grad(p)) {
            Tensor gp({r, c});
            for (std::size_t i = 0; i < r; ++i) {
              auto src = g.row(i).subspan(offset, c);
              std::copy(src.begin(), src.end(), gp.row(i).begin());
            }
            t.accumulate(p, gp);
          }
          offset += c;
        }
      });
}

Var Tape::slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = value(a);
  require(av.rank() == 2 && begin <= end && end <= av.rows(),
          ErrorCode::kShapeMismatch,
          "slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
              ") invalid for " + av.shape_string());
  return record(
      {a},
      [a, begin, end](const Tape& t) {
        const Tensor& x = t.value(a);
        const std::size_t c = x.cols();
        auto src = x.data().subspan(begin * c, (end - begin) * c);
        return Tensor({end - begin, c}, std::vector<double>(src.begin(), src.end()));
      },
      [a, begin](Tape& t, std::uint32_t self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor ga(t.value(a).shape());
        const std::size_t c = ga.cols();
        std::copy(g.data().begin(), g.data().end(), ga.data().begin() + begin * c);
        t.accumulate(a, ga);
      });
}

Var Tape::slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = value(a);
  require(av.rank() == 2 && begin <= end && end <= av.cols(),
          ErrorCode::kShapeMismatch,
          "slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
              ") invalid for " + av.shape_string());
  return record(
      {a},
      [a, begin, end](const Tape& t) {
        const Tensor& x = t.value(a);
        Tensor out({x.rows(), end - begin});
        for (std::size_t i = 0; i < x.rows(); ++i) {
          auto src = x.row(i).subspan(begin, end - begin);
          std::copy(src.begin(), src.end(), out.row(i).begin());
        }
        return out;
      },
      [a, begin, end](Tape& t, std::uint32_t self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor ga(t.value(a).shape());
        for (std::size_t i = 0; i < g.rows(); ++i) {
          auto src = g.row(i);
          std::copy(src.begin(), src.end(), ga.row(i).begin() + begin);
        }
        (void)end;
        t.accumulate(a, ga);
      });
}

Var Tape::pick(Var a, std::size_t r, std::size_t c) {
  const Tensor& av = value(a);
  require(av.rank() == 2 && r < av.rows() && c < av.cols(),
          ErrorCode::kShapeMismatch,
          "pick: index (" + std::to_string(r) + ", " + std::to_string(c) +
              ") out of range for " + av.shape_string());
  return record(
      {a},
      [a, r, c](const Tape& t) { return Tensor::scalar(t.value(a).at(r, c)); },
      [a, r, c](Tape& t, std::uint32_t self) {
        Tensor ga(t.value(a).shape());
        ga.at(r, c) = t.nodes_[self].grad[0];
        t.accumulate(a, ga);
      });
}

Var Tape::cross_entropy(Var logits, std::vector<std::uint32_t> targets, double smoothing) {
  const Tensor& lv = value(logits);
  require(smoothing >= 0.0 && smoothing < 1.0, ErrorCode::kInvalidArgument,
          "cross_entropy: smoothing must lie in [0, 1)");
  require(lv.rank() == 2 && lv.rows() == targets.size() && !targets.empty(),
          ErrorCode::kShapeMismatch,
          "cross_entropy: " + std::to_string(targets.size()) +
              " targets for logits " + lv.shape_string());
  for (auto y : targets) {
    require(y < lv.cols(), ErrorCode::kInvalidArgument,
            "cross_entropy: target " + std::to_string(y) + " out of range");
  }
  auto shared = std::make_shared<const std::vector<std::uint32_t>>(std::move(targets));
  return record(
      {logits},
      [logits, shared, smoothing](const Tape& t) {
        const Tensor& z = t.value(logits);
        const double uniform = smoothing / static_cast<double>(z.cols());
        double total = 0.0;
        for (std::size_t i = 0; i < z.rows(); ++i) {
          const double lse = log_sum_exp(z.row(i));
          total += (1.0 - smoothing) * (lse - z.at(i, (*shared)[i]));
          if (smoothing > 0.0) {
            for (double v : z.row(i)) total += uniform * (lse - v);
          }
        }
        return Tensor::scalar(total / static_cast<double>(z.rows()));
      },
      [logits, shared, smoothing](Tape& t, std::uint32_t self) {
        const double g = t.nodes_[self].grad[0];
        const Tensor& z = t.value(logits);
        const double w = g / static_cast<double>(z.rows());
        const double uniform = smoothing / static_cast<double>(z.cols());
        Tensor gz(z.shape());
        for (std::size_t i = 0; i < z.rows(); ++i) {
          const auto p = softmax(z.row(i));
          auto dst = gz.row(i);
          for (std::size_t j = 0; j < p.size(); ++j) dst[j] = w * (p[j] - uniform);
          dst[(*shared)[i]] -= w * (1.0 - smoothing);
        }
        t.accumulate(logits, gz);
      });
}

// ---------------------------------------------------------------------------

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double h) {
  require(h > 0.0, ErrorCode::kInvalidArgument,
          "finite_difference_gradient: step h must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
               AdamState& state, double lr) {
  require(params.size() == grads.size(), ErrorCode::kInvalidArgument,
          "adam_step: " + std::to_string(params.size()) + " params but " +
              std::to_string(grads.size()) + " gradients");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    require(grads[i].shape() == params[i]->shape(), ErrorCode::kShapeMismatch,
            "adam_step: gradient " + std::to_string(i) + " has shape " +
                grads[i].shape_string() + ", parameter has " +
                params[i]->shape_string());
    if (!grads[i].all_finite()) {
      fail(ErrorCode::kDiverged, "adam_step: non-finite gradient in parameter " +
                                     std::to_string(i) + " at step " +
                                     std::to_string(state.step + 1));
    }
  }
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (Tensor* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i]->data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace gacd
