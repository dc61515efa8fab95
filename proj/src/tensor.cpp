// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcf/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace mcf {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <std::floating_point T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->data.assign(mcf::numel(shape), value);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

template <std::floating_point T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  return full(std::move(shape), T(0));
}

template <std::floating_point T>
Tensor<T> Tensor<T>::ones(Shape shape) {
  return full(std::move(shape), T(1));
}

template <std::floating_point T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values) {
  if (mcf::numel(shape) != values.size()) {
    throw ShapeError("Tensor::from: shape " + to_string(shape) + " needs " +
                     std::to_string(mcf::numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

template <std::floating_point T>
Tensor<T> Tensor<T>::scalar(T value) {
  return full({}, value);
}

template <std::floating_point T>
std::size_t Tensor<T>::dim(std::ptrdiff_t axis) const {
  const auto n = static_cast<std::ptrdiff_t>(ndim());
  if (axis < 0) axis += n;
  if (axis < 0 || axis >= n) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     to_string(shape()));
  }
  return impl_->shape[static_cast<std::size_t>(axis)];
}

template <std::floating_point T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + to_string(shape()));
  }
  return impl_->data[0];
}

template <std::floating_point T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
  if (!impl_->is_leaf) {
    throw std::logic_error("set_requires_grad on a non-leaf tensor");
  }
  impl_->requires_grad = flag;
  if (!flag) impl_->grad.clear();
  return *this;
}

template <std::floating_point T>
std::span<T> Tensor<T>::mutable_grad() {
  if (!impl_->requires_grad) {
    throw std::logic_error("mutable_grad on a tensor that does not require grad");
  }
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  return impl_->grad;
}

template <std::floating_point T>
void Tensor<T>::zero_grad() {
  if (!impl_->requires_grad) return;
  impl_->grad.assign(impl_->data.size(), T(0));
}

template <std::floating_point T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor::from(impl_->shape, impl_->data);
}

template <std::floating_point T>
Tensor<T> Tensor<T>::clone() const {
  auto out = detach();
  out.impl_->requires_grad = impl_->requires_grad;
  return out;
}

template <std::floating_point T>
Graph<T>& Graph<T>::local() {
  thread_local Graph<T> graph;
  return graph;
}

template <std::floating_point T>
void Graph<T>::clear() {
  for (auto& node : nodes_) {
    if (node.output && !node.output->is_leaf) {
      node.output->grad.clear();
      node.output->grad.shrink_to_fit();
    }
  }
  nodes_.clear();
}

namespace {
thread_local bool g_grad_enabled = true;
thread_local bool g_strict_finite = false;
std::string g_fault_op;
double g_fault_factor = 0.0;
}  // namespace

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
EnableGradGuard::EnableGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = true; }
EnableGradGuard::~EnableGradGuard() { g_grad_enabled = previous_; }

void set_strict_finite(bool on) { g_strict_finite = on; }
bool strict_finite() { return g_strict_finite; }

namespace testing {
void set_backward_fault(std::string op, double factor) {
  g_fault_op = std::move(op);
  g_fault_factor = factor;
}
const std::string& backward_fault_op() { return g_fault_op; }
double backward_fault_factor() { return g_fault_factor; }
}  // namespace testing

template <std::floating_point T>
void accumulate_grad(TensorImpl<T>& target, std::span<const T> g) {
  if (!target.requires_grad) return;
  if (target.grad.empty()) {
    target.grad.assign(g.begin(), g.end());
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) target.grad[i] += g[i];
}

template <std::floating_point T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  auto& graph = Graph<T>::local();
  if (graph.empty()) {
    throw std::logic_error("backward: the graph is empty (loss does not depend on any tensor requiring grad)");
  }
  if (!loss.requires_grad()) {
    throw std::logic_error("backward: loss does not require grad");
  }
  auto& root = *loss.impl();
  const T one = T(1);
  accumulate_grad(root, std::span<const T>(&one, 1));

  auto nodes = graph.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward(*it);
  }
  if (!root.is_leaf) root.grad.clear();
  graph.clear();
}

template class Tensor<float>;
template class Tensor<double>;
template class Graph<float>;
template class Graph<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);
template void accumulate_grad<float>(TensorImpl<float>&, std::span<const float>);
template void accumulate_grad<double>(TensorImpl<double>&, std::span<const double>);

}  // namespace mcf
