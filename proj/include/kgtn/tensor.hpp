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

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kgtn {

using Shape = std::vector<std::size_t>;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {
struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major float64 array with an optional gradient accumulator.
///
/// A Tensor is a cheap handle; copies share storage. Ops never write into
/// their operands' values, only into their grad buffers during backward.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.d_ = std::make_shared<detail::TensorData>();
    t.d_->values.assign(shape_numel(shape), 0.0);
    t.d_->shape = std::move(shape);
    return t;
  }

  static Tensor from(Shape shape, std::vector<double> values) {
    if (shape_numel(shape) != values.size())
      throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                           std::to_string(values.size()) + " values");
    Tensor t;
    t.d_ = std::make_shared<detail::TensorData>();
    t.d_->shape = std::move(shape);
    t.d_->values = std::move(values);
    return t;
  }

  static Tensor scalar(double v) { return from({}, {v}); }

  /// Leaf tensor whose gradient is tracked.
  static Tensor parameter(Shape shape, std::vector<double> values) {
    auto t = from(std::move(shape), std::move(values));
    t.d_->requires_grad = true;
    return t;
  }

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  std::size_t numel() const { return d_->values.size(); }
  std::size_t dim() const { return d_->shape.size(); }
  std::size_t rows() const { return d_->shape.empty() ? 1 : d_->shape[0]; }
  std::size_t cols() const {
    return d_->shape.size() < 2 ? 1 : d_->values.size() / std::max<std::size_t>(1, d_->shape[0]);
  }

  std::span<const double> values() const { return d_->values; }
  std::span<double> mutable_values() { return d_->values; }
  double item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return d_->values[0];
  }
  double at(std::size_t i) const { return d_->values[i]; }
  double at(std::size_t r, std::size_t c) const { return d_->values[r * cols() + c]; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(d_->values).subspan(r * cols(), cols());
  }

  bool requires_grad() const { return d_ && d_->requires_grad; }
  void set_requires_grad(bool on) { d_->requires_grad = on; }

  bool has_grad() const { return !d_->grad.empty(); }
  /// Gradient buffer, materialized as zeros on first access.
  std::span<double> grad() const {
    if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
    return d_->grad;
  }
  std::vector<double> grad_copy() const {
    return d_->grad.empty() ? std::vector<double>(d_->values.size(), 0.0) : d_->grad;
  }
  void zero_grad() const { d_->grad.clear(); }

  /// Fresh storage holding the same values, detached from any tape.
  Tensor detach() const { return from(shape(), d_->values); }

  bool same_storage(const Tensor& o) const { return d_ == o.d_; }

 private:
  std::shared_ptr<detail::TensorData> d_;
};

/// Record-on-execute tape. Each op appends a closure that pushes its
/// output gradient into its inputs; backward replays them in reverse.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  void count(const char* op) { ++op_counts_[op]; }
  std::size_t op_count(const std::string& op) const {
    auto it = op_counts_.find(op);
    return it == op_counts_.end() ? 0 : it->second;
  }
  const std::map<std::string, std::size_t>& op_counts() const { return op_counts_; }

  std::size_t size() const { return entries_.size(); }

  void record(const char* op, std::function<void()> backward_fn) {
    entries_.push_back({op, std::move(backward_fn)});
  }

  /// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse.
  void backward(Tensor& loss) {
    if (loss.numel() != 1)
      throw ContractError("backward requires a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;
    loss.grad()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward_fn();
  }

  void clear() {
    entries_.clear();
    op_counts_.clear();
  }

 private:
  struct Entry {
    const char* op;
    std::function<void()> backward_fn;
  };
  bool recording_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> op_counts_;
};

}  // namespace kgtn
