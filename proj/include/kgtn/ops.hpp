/**
 * Copyright 2026 The kgtn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "kgtn/tensor.hpp"

// Differentiable primitives. Every op takes the Tape first; the output is
// tracked (and a backward closure recorded) only when the tape is
// recording and at least one operand requires a gradient.

namespace kgtn::ops {

using Index = std::vector<std::uint32_t>;

namespace detail {

inline bool tracks(const Tape& tape, std::initializer_list<const Tensor*> in) {
  if (!tape.recording()) return false;
  for (auto* t : in)
    if (t->requires_grad()) return true;
  return false;
}

inline Tensor make_out(Tape& tape, const char* op, Shape shape, std::vector<double> values,
                       std::initializer_list<const Tensor*> in) {
  tape.count(op);
  auto out = Tensor::from(std::move(shape), std::move(values));
  out.set_requires_grad(tracks(tape, in));
  return out;
}

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.dim() != 2)
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

inline void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace detail

inline Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  std::vector<double> c(m * n, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* crow = &c[i * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  auto out = detail::make_out(tape, "matmul", {m, n}, std::move(c), {&a, &b});
  if (out.requires_grad())
    tape.record("matmul", [a, b, out, m, k, n]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        auto bv = b.values();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
            ga[i * k + p] += s;
          }
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        auto av = a.values();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
          }
      }
    });
  return out;
}

inline Tensor transpose(Tape& tape, const Tensor& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> v(m * n);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) v[j * m + i] = av[i * n + j];
  auto out = detail::make_out(tape, "transpose", {n, m}, std::move(v), {&a});
  if (out.requires_grad())
    tape.record("transpose", [a, out, m, n]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto ga = a.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
  return out;
}

namespace detail {
// Elementwise binary op with same-shape operands; df returns (d/da, d/db).
template <class F, class DF>
Tensor binary(Tape& tape, const char* op, const Tensor& a, const Tensor& b, F f, DF df) {
  require_same(a, b, op);
  const std::size_t n = a.numel();
  std::vector<double> v(n);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) v[i] = f(av[i], bv[i]);
  auto out = make_out(tape, op, a.shape(), std::move(v), {&a, &b});
  if (out.requires_grad())
    tape.record(op, [a, b, out, n, df]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto av = a.values();
      auto bv = b.values();
      const bool ga_on = a.requires_grad(), gb_on = b.requires_grad();
      std::span<double> ga, gb;
      if (ga_on) ga = a.grad();
      if (gb_on) gb = b.grad();
      for (std::size_t i = 0; i < n; ++i) {
        auto [da, db] = df(av[i], bv[i]);
        if (ga_on) ga[i] += g[i] * da;
        if (gb_on) gb[i] += g[i] * db;
      }
    });
  return out;
}

// Elementwise unary op; df receives (x, y) and returns dy/dx.
template <class F, class DF>
Tensor unary(Tape& tape, const char* op, const Tensor& a, F f, DF df) {
  const std::size_t n = a.numel();
  std::vector<double> v(n);
  auto av = a.values();
  for (std::size_t i = 0; i < n; ++i) v[i] = f(av[i]);
  auto out = make_out(tape, op, a.shape(), std::move(v), {&a});
  if (out.requires_grad())
    tape.record(op, [a, out, n, df]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto ga = a.grad();
      auto av = a.values();
      auto yv = out.values();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * df(av[i], yv[i]);
    });
  return out;
}
}  // namespace detail

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return detail::binary(
      tape, "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return std::pair{1.0, 1.0}; });
}

inline Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return detail::binary(
      tape, "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return std::pair{1.0, -1.0}; });
}

inline Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b) {
  return detail::binary(
      tape, "hadamard", a, b, [](double x, double y) { return x * y; },
      [](double x, double y) { return std::pair{y, x}; });
}

inline Tensor scale(Tape& tape, const Tensor& a, double c) {
  return detail::unary(
      tape, "scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(Tape& tape, const Tensor& a, double c) {
  return detail::unary(
      tape, "add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline Tensor exp(Tape& tape, const Tensor& a) {
  return detail::unary(
      tape, "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log(Tape& tape, const Tensor& a) {
  for (double x : a.values())
    if (!(x > 0.0)) throw DomainError("log: non-positive argument " + std::to_string(x));
  return detail::unary(
      tape, "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

inline Tensor sigmoid(Tape& tape, const Tensor& a) {
  return detail::unary(
      tape, "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

/// log(1 + e^x), evaluated without overflow.
inline Tensor softplus(Tape& tape, const Tensor& a) {
  return detail::unary(
      tape, "softplus", a,
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

inline Tensor sum(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  auto out = detail::make_out(tape, "sum", {}, {s}, {&a});
  if (out.requires_grad())
    tape.record("sum", [a, out]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      for (double& x : a.grad()) x += g;
    });
  return out;
}

inline Tensor mean(Tape& tape, const Tensor& a) {
  if (a.numel() == 0) throw DomainError("mean of empty tensor");
  return scale(tape, sum(tape, a), 1.0 / static_cast<double>(a.numel()));
}

/// Rows of x selected by idx (embedding lookup). Repeated indices accumulate
/// in backward.
inline Tensor gather_rows(Tape& tape, const Tensor& x, const Index& idx) {
  detail::require_matrix(x, "gather_rows");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  std::vector<double> v(idx.size() * d);
  auto xv = x.values();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= n)
      throw DimensionError("gather_rows: index " + std::to_string(idx[r]) + " out of range for " +
                           shape_str(x.shape()));
    std::copy_n(&xv[idx[r] * d], d, &v[r * d]);
  }
  auto out = detail::make_out(tape, "gather_rows", {idx.size(), d}, std::move(v), {&x});
  if (out.requires_grad())
    tape.record("gather_rows", [x, out, idx, d]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < d; ++c) gx[idx[r] * d + c] += g[r * d + c];
    });
  return out;
}

/// out[idx[r]] += x[r]; rows never targeted stay zero.
inline Tensor scatter_add_rows(Tape& tape, const Tensor& x, const Index& idx, std::size_t n_out) {
  detail::require_matrix(x, "scatter_add_rows");
  if (idx.size() != x.shape()[0])
    throw DimensionError("scatter_add_rows: " + std::to_string(idx.size()) + " indices for " +
                         shape_str(x.shape()));
  const std::size_t d = x.shape()[1];
  std::vector<double> v(n_out * d, 0.0);
  auto xv = x.values();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= n_out) throw DimensionError("scatter_add_rows: index out of range");
    for (std::size_t c = 0; c < d; ++c) v[idx[r] * d + c] += xv[r * d + c];
  }
  auto out = detail::make_out(tape, "scatter_add_rows", {n_out, d}, std::move(v), {&x});
  if (out.requires_grad())
    tape.record("scatter_add_rows", [x, out, idx, d]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += g[idx[r] * d + c];
    });
  return out;
}

inline Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end) {
  detail::require_matrix(x, "slice_rows");
  if (begin > end || end > x.shape()[0]) throw DimensionError("slice_rows: bad range");
  const std::size_t d = x.shape()[1];
  std::vector<double> v(x.values().begin() + begin * d, x.values().begin() + end * d);
  auto out = detail::make_out(tape, "slice_rows", {end - begin, d}, std::move(v), {&x});
  if (out.requires_grad())
    tape.record("slice_rows", [x, out, begin, d]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[begin * d + i] += g[i];
    });
  return out;
}

/// Stacks matrices with equal column counts vertically.
inline Tensor concat_rows(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "concat_rows");
  detail::require_matrix(b, "concat_rows");
  if (a.shape()[1] != b.shape()[1])
    throw DimensionError("concat_rows: column mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::vector<double> v(a.values().begin(), a.values().end());
  v.insert(v.end(), b.values().begin(), b.values().end());
  auto out = detail::make_out(tape, "concat_rows", {a.shape()[0] + b.shape()[0], a.shape()[1]},
                              std::move(v), {&a, &b});
  if (out.requires_grad())
    tape.record("concat_rows", [a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      const std::size_t na = a.numel();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
      }
    });
  return out;
}

/// Horizontal concatenation of matrices with equal row counts.
inline Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require_matrix(p, "concat_cols");
    if (p.shape()[0] != m) throw DimensionError("concat_cols: row mismatch");
    total += p.shape()[1];
  }
  std::vector<double> v(m * total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[1];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) v[i * total + off + j] = p.at(i, j);
    off += w;
  }
  tape.count("concat_cols");
  auto out = Tensor::from({m, total}, std::move(v));
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  out.set_requires_grad(tape.recording() && any);
  if (out.requires_grad())
    tape.record("concat_cols", [parts, out, m, total]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      std::size_t off = 0;
      for (auto& p : parts) {
        const std::size_t w = p.shape()[1];
        if (p.requires_grad()) {
          auto gp = p.grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * total + off + j];
        }
        off += w;
      }
    });
  return out;
}

/// Per-row inner products of two same-shape matrices -> [n].
inline Tensor row_dot(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "row_dot");
  detail::require_same(a, b, "row_dot");
  const std::size_t n = a.shape()[0], d = a.shape()[1];
  std::vector<double> v(n, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) v[i] += av[i * d + c] * bv[i * d + c];
  auto out = detail::make_out(tape, "row_dot", {n}, std::move(v), {&a, &b});
  if (out.requires_grad())
    tape.record("row_dot", [a, b, out, n, d]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto av = a.values();
      auto bv = b.values();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < d; ++c) ga[i * d + c] += g[i] * bv[i * d + c];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < d; ++c) gb[i * d + c] += g[i] * av[i * d + c];
      }
    });
  return out;
}

/// Row sums of a matrix -> [n].
inline Tensor row_sum(Tape& tape, const Tensor& a) {
  detail::require_matrix(a, "row_sum");
  const std::size_t n = a.shape()[0], d = a.shape()[1];
  std::vector<double> v(n, 0.0);
  auto av = a.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) v[i] += av[i * d + c];
  auto out = detail::make_out(tape, "row_sum", {n}, std::move(v), {&a});
  if (out.requires_grad())
    tape.record("row_sum", [a, out, n, d]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto ga = a.grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) ga[i * d + c] += g[i];
    });
  return out;
}

/// Multiplies row i of x by w[i].
inline Tensor row_scale(Tape& tape, const Tensor& x, const Tensor& w) {
  detail::require_matrix(x, "row_scale");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  if (w.numel() != n)
    throw DimensionError("row_scale: " + shape_str(w.shape()) + " weights for " +
                         shape_str(x.shape()));
  std::vector<double> v(n * d);
  auto xv = x.values();
  auto wv = w.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) v[i * d + c] = xv[i * d + c] * wv[i];
  auto out = detail::make_out(tape, "row_scale", {n, d}, std::move(v), {&x, &w});
  if (out.requires_grad())
    tape.record("row_scale", [x, w, out, n, d]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto xv = x.values();
      auto wv = w.values();
      if (x.requires_grad()) {
        auto gx = x.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < d; ++c) gx[i * d + c] += g[i * d + c] * wv[i];
      }
      if (w.requires_grad()) {
        auto gw = w.grad();
        for (std::size_t i = 0; i < n; ++i) {
          double s = 0.0;
          for (std::size_t c = 0; c < d; ++c) s += g[i * d + c] * xv[i * d + c];
          gw[i] += s;
        }
      }
    });
  return out;
}

/// Splits the d columns of a and b into `blocks` equal groups and returns
/// the per-group inner products of matching rows -> [n x blocks].
inline Tensor block_dot(Tape& tape, const Tensor& a, const Tensor& b, std::size_t blocks) {
  detail::require_matrix(a, "block_dot");
  detail::require_same(a, b, "block_dot");
  const std::size_t n = a.shape()[0], d = a.shape()[1];
  if (blocks == 0 || d % blocks != 0)
    throw DimensionError("block_dot: " + std::to_string(blocks) + " blocks do not divide " +
                         std::to_string(d));
  const std::size_t w = d / blocks;
  std::vector<double> v(n * blocks, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t h = 0; h < blocks; ++h) {
      double s = 0.0;
      for (std::size_t c = h * w; c < (h + 1) * w; ++c) s += av[i * d + c] * bv[i * d + c];
      v[i * blocks + h] = s;
    }
  auto out = detail::make_out(tape, "block_dot", {n, blocks}, std::move(v), {&a, &b});
  if (out.requires_grad())
    tape.record("block_dot", [a, b, out, n, d, w, blocks]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto av = a.values();
      auto bv = b.values();
      const bool ga_on = a.requires_grad(), gb_on = b.requires_grad();
      std::span<double> ga, gb;
      if (ga_on) ga = a.grad();
      if (gb_on) gb = b.grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) {
          const double gi = g[i * blocks + c / w];
          if (ga_on) ga[i * d + c] += gi * bv[i * d + c];
          if (gb_on) gb[i * d + c] += gi * av[i * d + c];
        }
    });
  return out;
}

/// Scales column group h of row i of x by w[i, h]; w is [n x blocks].
inline Tensor block_scale(Tape& tape, const Tensor& x, const Tensor& w) {
  detail::require_matrix(x, "block_scale");
  detail::require_matrix(w, "block_scale");
  const std::size_t n = x.shape()[0], d = x.shape()[1], blocks = w.shape()[1];
  if (w.shape()[0] != n || blocks == 0 || d % blocks != 0)
    throw DimensionError("block_scale: " + shape_str(w.shape()) + " weights for " +
                         shape_str(x.shape()));
  const std::size_t bw = d / blocks;
  std::vector<double> v(n * d);
  auto xv = x.values();
  auto wv = w.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) v[i * d + c] = xv[i * d + c] * wv[i * blocks + c / bw];
  auto out = detail::make_out(tape, "block_scale", {n, d}, std::move(v), {&x, &w});
  if (out.requires_grad())
    tape.record("block_scale", [x, w, out, n, d, bw, blocks]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto xv = x.values();
      auto wv = w.values();
      if (x.requires_grad()) {
        auto gx = x.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < d; ++c)
            gx[i * d + c] += g[i * d + c] * wv[i * blocks + c / bw];
      }
      if (w.requires_grad()) {
        auto gw = w.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < d; ++c)
            gw[i * blocks + c / bw] += g[i * d + c] * xv[i * d + c];
      }
    });
  return out;
}

/// Softmax over consecutive row segments [offsets[s], offsets[s+1]),
/// independently for every column. Empty segments are allowed.
inline Tensor segment_softmax(Tape& tape, const Tensor& v, std::span<const std::uint32_t> offsets) {
  const std::size_t n = v.rows(), c = v.cols();
  if (offsets.empty() || offsets.back() != n)
    throw DimensionError("segment_softmax: offsets do not cover " + shape_str(v.shape()));
  std::vector<double> y(n * c);
  auto xv = v.values();
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const std::size_t b = offsets[s], e = offsets[s + 1];
    if (b == e) continue;
    for (std::size_t k = 0; k < c; ++k) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = b; i < e; ++i) mx = std::max(mx, xv[i * c + k]);
      double z = 0.0;
      for (std::size_t i = b; i < e; ++i) z += (y[i * c + k] = std::exp(xv[i * c + k] - mx));
      for (std::size_t i = b; i < e; ++i) y[i * c + k] /= z;
    }
  }
  auto out = detail::make_out(tape, "segment_softmax", v.shape(), std::move(y), {&v});
  if (out.requires_grad()) {
    std::vector<std::uint32_t> offs(offsets.begin(), offsets.end());
    tape.record("segment_softmax", [v, out, offs = std::move(offs), c]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto yv = out.values();
      auto gv = v.grad();
      for (std::size_t s = 0; s + 1 < offs.size(); ++s) {
        const std::size_t b = offs[s], e = offs[s + 1];
        for (std::size_t k = 0; k < c; ++k) {
          double dot = 0.0;
          for (std::size_t i = b; i < e; ++i) dot += yv[i * c + k] * g[i * c + k];
          for (std::size_t i = b; i < e; ++i) gv[i * c + k] += yv[i * c + k] * (g[i * c + k] - dot);
        }
      }
    });
  }
  return out;
}

/// Softmax of a 1-D tensor, max-subtracted.
inline Tensor softmax(Tape& tape, const Tensor& v) {
  if (v.numel() == 0) throw DomainError("softmax of empty input");
  if (v.dim() != 1) throw DimensionError("softmax: expected a vector, got " + shape_str(v.shape()));
  const std::uint32_t offs[2] = {0, static_cast<std::uint32_t>(v.numel())};
  return segment_softmax(tape, v, offs);
}

/// Row-wise softmax of a matrix.
inline Tensor softmax_rows(Tape& tape, const Tensor& x) {
  detail::require_matrix(x, "softmax_rows");
  const std::size_t n = x.shape()[0], k = x.shape()[1];
  if (k == 0) throw DomainError("softmax_rows: zero columns");
  std::vector<double> y(n * k);
  auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, xv[i * k + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (y[i * k + j] = std::exp(xv[i * k + j] - mx));
    for (std::size_t j = 0; j < k; ++j) y[i * k + j] /= z;
  }
  auto out = detail::make_out(tape, "softmax_rows", {n, k}, std::move(y), {&x});
  if (out.requires_grad())
    tape.record("softmax_rows", [x, out, n, k]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto yv = out.values();
      auto gx = x.grad();
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < k; ++j) dot += yv[i * k + j] * g[i * k + j];
        for (std::size_t j = 0; j < k; ++j) gx[i * k + j] += yv[i * k + j] * (g[i * k + j] - dot);
      }
    });
  return out;
}

/// Scales each row to unit L2 norm; a zero row is a domain error.
inline Tensor normalize_rows(Tape& tape, const Tensor& x) {
  detail::require_matrix(x, "normalize_rows");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  std::vector<double> y(n * d), norms(n);
  auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += xv[i * d + c] * xv[i * d + c];
    norms[i] = std::sqrt(s);
    if (!std::isfinite(norms[i]))
      throw DomainError("normalize_rows: row " + std::to_string(i) + " is not finite");
    if (!(norms[i] > 0.0))
      throw DomainError("normalize_rows: row " + std::to_string(i) + " has zero norm");
    for (std::size_t c = 0; c < d; ++c) y[i * d + c] = xv[i * d + c] / norms[i];
  }
  auto out = detail::make_out(tape, "normalize_rows", {n, d}, std::move(y), {&x});
  if (out.requires_grad())
    tape.record("normalize_rows", [x, out, norms = std::move(norms), n, d]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto yv = out.values();
      auto gx = x.grad();
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += yv[i * d + c] * g[i * d + c];
        for (std::size_t c = 0; c < d; ++c)
          gx[i * d + c] += (g[i * d + c] - yv[i * d + c] * dot) / norms[i];
      }
    });
  return out;
}

/// Cosine similarity of two vectors -> scalar.
inline Tensor cosine(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_same(a, b, "cosine");
  const std::size_t d = a.numel();
  auto av = a.values();
  auto bv = b.values();
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    ab += av[i] * bv[i];
    aa += av[i] * av[i];
    bb += bv[i] * bv[i];
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  if (!(na > 0.0) || !(nb > 0.0)) throw DomainError("cosine: zero-norm operand");
  const double cs = std::clamp(ab / (na * nb), -1.0, 1.0);
  auto out = detail::make_out(tape, "cosine", {}, {cs}, {&a, &b});
  if (out.requires_grad())
    tape.record("cosine", [a, b, out, d, na, nb, ab]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      const double c = ab / (na * nb);
      auto av = a.values();
      auto bv = b.values();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < d; ++i) ga[i] += g * (bv[i] / (na * nb) - c * av[i] / (na * na));
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < d; ++i) gb[i] += g * (av[i] / (na * nb) - c * bv[i] / (nb * nb));
      }
    });
  return out;
}

}  // namespace kgtn::ops
