// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense n-dimensional tensors with a per-thread tape for reverse-mode
// differentiation. Tensors are shared handles: copying a Tensor aliases the
// same storage, the way parameters are shared between a model and its
// optimizer. Use clone()/detach() for value copies.

#pragma once

#include <concepts>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mcf {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

template <std::floating_point T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until the first accumulation or zero_grad()
  bool requires_grad = false;
  bool is_leaf = true;
};

template <std::floating_point T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor from(Shape shape, std::vector<T> values);
  static Tensor scalar(T value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t ndim() const { return impl_->shape.size(); }
  std::size_t dim(std::ptrdiff_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T item() const;
  T operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  bool is_leaf() const { return impl_->is_leaf; }
  /// Only leaves may toggle the flag; intermediate results inherit it.
  Tensor& set_requires_grad(bool flag);

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad();
  void zero_grad();

  /// Value copy detached from any graph, requires_grad=false.
  Tensor detach() const;
  /// Value copy that keeps the requires_grad flag (as a fresh leaf).
  Tensor clone() const;

  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

template <std::floating_point T>
struct Node {
  std::string_view op;
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  std::shared_ptr<TensorImpl<T>> output;
  std::function<void(const Node&)> backward;
};

/// Execution-ordered record of primitives, one per thread and element type.
template <std::floating_point T>
class Graph {
 public:
  static Graph& local();

  void record(Node<T> node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  std::span<const Node<T>> nodes() const { return nodes_; }
  /// Drops recorded nodes and releases intermediate gradient buffers.
  void clear();

 private:
  std::vector<Node<T>> nodes_;
};

/// Thread-local switch controlling whether primitives record on the tape.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Turns recording back on inside a NoGradGuard scope, for routines that
/// train something internally.
class EnableGradGuard {
 public:
  EnableGradGuard();
  ~EnableGradGuard();
  EnableGradGuard(const EnableGradGuard&) = delete;
  EnableGradGuard& operator=(const EnableGradGuard&) = delete;

 private:
  bool previous_;
};

/// When on, every primitive rejects non-finite inputs.
void set_strict_finite(bool on);
bool strict_finite();

/// Propagates d(loss)/d(leaf) into every requires_grad leaf reachable from
/// `loss`, accumulating into existing gradients. Consumes the local tape.
template <std::floating_point T>
void backward(const Tensor<T>& loss);

template <std::floating_point T>
void accumulate_grad(TensorImpl<T>& target, std::span<const T> g);

namespace testing {
/// Scales the gradient produced by the named primitive's backward rule by
/// (1 + factor). Empty name disables the fault. Exists for fault-injection
/// tests of the gradient checker.
void set_backward_fault(std::string op, double factor = 0.01);
const std::string& backward_fault_op();
double backward_fault_factor();
}  // namespace testing

}  // namespace mcf
