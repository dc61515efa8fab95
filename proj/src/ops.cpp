// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcf/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace mcf {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

[[noreturn]] void shape_mismatch(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " +
                   to_string(b));
}

template <typename T>
void check_finite(std::string_view op, std::initializer_list<const Tensor<T>*> inputs) {
  if (!strict_finite()) return;
  for (const auto* t : inputs) {
    if (t == nullptr || !t->defined()) continue;
    for (T v : t->data()) {
      if (!std::isfinite(v)) {
        throw NonFiniteError(std::string(op) + ": non-finite input of shape " +
                             to_string(t->shape()));
      }
    }
  }
}

/// Gradient buffer of an input, allocated on demand; null when the input
/// does not take gradient.
template <typename T>
T* grad_of(const ImplPtr<T>& t) {
  if (!t || !t->requires_grad) return nullptr;
  if (t->grad.empty()) t->grad.assign(t->data.size(), T(0));
  return t->grad.data();
}

template <typename T>
Tensor<T> make(Shape shape, std::vector<T> data) {
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor<T>(std::move(impl));
}

template <typename T, typename Fn>
Tensor<T> record(std::string_view op, Tensor<T> out, std::vector<ImplPtr<T>> inputs, Fn&& fn) {
  if (!GradMode::enabled()) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const ImplPtr<T>& p) { return p && p->requires_grad; });
  if (!any) return out;
  out.impl()->requires_grad = true;
  out.impl()->is_leaf = false;
  std::function<void(const Node<T>&)> backward_fn = std::forward<Fn>(fn);
  if (!testing::backward_fault_op().empty() && testing::backward_fault_op() == op) {
    const T scale = T(1) + T(testing::backward_fault_factor());
    backward_fn = [inner = std::move(backward_fn), scale](const Node<T>& node) {
      auto saved = node.output->grad;
      for (auto& g : node.output->grad) g *= scale;
      inner(node);
      node.output->grad = std::move(saved);
    };
  }
  Graph<T>::local().record(Node<T>{op, std::move(inputs), out.impl(), std::move(backward_fn)});
  return out;
}

std::size_t normalize_axis(std::ptrdiff_t axis, std::size_t ndim, std::string_view op) {
  const auto n = static_cast<std::ptrdiff_t>(ndim);
  if (axis < 0) axis += n;
  if (axis < 0 || axis >= n) {
    throw ShapeError(std::string(op) + ": axis out of range for rank " + std::to_string(ndim));
  }
  return static_cast<std::size_t>(axis);
}

// ---------------------------------------------------------------------------
// Broadcasting

struct Broadcast {
  enum class Kind { Same, BRepeats, ARepeats, General };
  Kind kind = Kind::General;
  Shape out;
  std::vector<std::size_t> a_stride;  // per output dim, 0 on broadcast dims
  std::vector<std::size_t> b_stride;
  std::size_t na = 0, nb = 0;
};

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
}

Broadcast broadcast(std::string_view op, const Shape& a, const Shape& b) {
  Broadcast bc;
  bc.na = numel(a);
  bc.nb = numel(b);
  if (a == b) {
    bc.kind = Broadcast::Kind::Same;
    bc.out = a;
    return bc;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  bc.out.assign(rank, 1);
  bc.a_stride.assign(rank, 0);
  bc.b_stride.assign(rank, 0);
  std::size_t sa = 1, sb = 1;
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t i = rank - 1 - k;
    const std::size_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) shape_mismatch(op, a, b);
    bc.out[i] = std::max(da, db);
    if (da == 0 || db == 0) bc.out[i] = 0;
    bc.a_stride[i] = (da == 1) ? 0 : sa;
    bc.b_stride[i] = (db == 1) ? 0 : sb;
    sa *= da;
    sb *= db;
  }
  if (bc.out == a && is_suffix(b, a)) {
    bc.kind = Broadcast::Kind::BRepeats;
  } else if (bc.out == b && is_suffix(a, b)) {
    bc.kind = Broadcast::Kind::ARepeats;
  }
  return bc;
}

/// Calls fn(out_index, a_index, b_index) for every output element in order.
template <typename Fn>
void for_each_broadcast(const Broadcast& bc, Fn&& fn) {
  const std::size_t n = numel(bc.out);
  switch (bc.kind) {
    case Broadcast::Kind::Same:
      for (std::size_t i = 0; i < n; ++i) fn(i, i, i);
      return;
    case Broadcast::Kind::BRepeats:
      if (bc.nb == 0) return;
      for (std::size_t i = 0; i < n; ++i) fn(i, i, i % bc.nb);
      return;
    case Broadcast::Kind::ARepeats:
      if (bc.na == 0) return;
      for (std::size_t i = 0; i < n; ++i) fn(i, i % bc.na, i);
      return;
    case Broadcast::Kind::General:
      break;
  }
  const std::size_t rank = bc.out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    fn(i, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += bc.a_stride[d];
      ib += bc.b_stride[d];
      if (idx[d] < bc.out[d]) break;
      ia -= bc.a_stride[d] * idx[d];
      ib -= bc.b_stride[d] * idx[d];
      idx[d] = 0;
    }
  }
}

template <typename T, typename Forward, typename GradA, typename GradB>
Tensor<T> binary(std::string_view op, const Tensor<T>& a, const Tensor<T>& b, Forward f, GradA ga_fn,
                 GradB gb_fn) {
  check_finite<T>(op, {&a, &b});
  auto bc = broadcast(op, a.shape(), b.shape());
  std::vector<T> out(numel(bc.out));
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = f(pa[ia], pb[ib]); });
  return record(op, make(bc.out, std::move(out)), {a.impl(), b.impl()},
                [bc, ga_fn, gb_fn](const Node<T>& node) {
                  const T* g = node.output->grad.data();
                  const T* xa = node.inputs[0]->data.data();
                  const T* xb = node.inputs[1]->data.data();
                  T* gpa = grad_of(node.inputs[0]);
                  T* gpb = grad_of(node.inputs[1]);
                  for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
                    if (gpa) gpa[ia] += ga_fn(g[i], xa[ia], xb[ib]);
                    if (gpb) gpb[ib] += gb_fn(g[i], xa[ia], xb[ib]);
                  });
                });
}

template <typename T, typename Forward, typename Deriv>
Tensor<T> unary(std::string_view op, const Tensor<T>& x, Forward f, Deriv d) {
  check_finite<T>(op, {&x});
  std::vector<T> out(x.numel());
  const T* px = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(px[i]);
  return record(op, make(x.shape(), std::move(out)), {x.impl()}, [d](const Node<T>& node) {
    T* gx = grad_of(node.inputs[0]);
    if (!gx) return;
    const T* g = node.output->grad.data();
    const T* xv = node.inputs[0]->data.data();
    const T* yv = node.output->data.data();
    const std::size_t n = node.output->data.size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * d(xv[i], yv[i]);
  });
}

/// Copies src (shape in_shape) into dst permuted by `order`; when `inverse`
/// is set, accumulates from the permuted layout back into the original one.
template <typename T>
void permute_apply(const T* src, T* dst, const Shape& in_shape, const std::vector<std::size_t>& order,
                   bool inverse) {
  const std::size_t rank = in_shape.size();
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t d = rank; d-- > 1;) in_stride[d - 1] = in_stride[d] * in_shape[d];
  Shape out_shape(rank);
  std::vector<std::size_t> step(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    out_shape[d] = in_shape[order[d]];
    step[d] = in_stride[order[d]];
  }
  const std::size_t n = numel(in_shape);
  if (n == 0) return;
  if (rank <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      if (inverse) dst[i] += src[i]; else dst[i] = src[i];
    }
    return;
  }
  // Innermost output axis is iterated in a tight loop.
  const std::size_t inner = rank ? out_shape[rank - 1] : 1;
  const std::size_t inner_step = rank ? step[rank - 1] : 0;
  std::vector<std::size_t> idx(rank, 0);
  std::size_t offset = 0;
  for (std::size_t o = 0; o < n; o += inner) {
    if (!inverse) {
      for (std::size_t k = 0; k < inner; ++k) dst[o + k] = src[offset + k * inner_step];
    } else {
      for (std::size_t k = 0; k < inner; ++k) dst[offset + k * inner_step] += src[o + k];
    }
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++idx[d];
      offset += step[d];
      if (idx[d] < out_shape[d]) break;
      offset -= step[d] * idx[d];
      idx[d] = 0;
    }
  }
}

struct RowView {
  std::size_t rows;
  std::size_t width;
};

template <typename T>
RowView rows_of(const Tensor<T>& x, std::string_view op) {
  if (x.ndim() == 0) throw ShapeError(std::string(op) + ": needs at least one dimension");
  const std::size_t w = x.shape().back();
  return {w == 0 ? 0 : x.numel() / w, w};
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

template <std::floating_point T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T g, T, T) { return g; }, [](T g, T, T) { return g; });
}

template <std::floating_point T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T g, T, T) { return g; }, [](T g, T, T) { return -g; });
}

template <std::floating_point T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T g, T, T y) { return g * y; },
      [](T g, T x, T) { return g * x; });
}

template <std::floating_point T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "div", a, b, [](T x, T y) { return x / y; }, [](T g, T, T y) { return g / y; },
      [](T g, T x, T y) { return -g * x / (y * y); });
}

template <std::floating_point T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return unary<T>(
      "add_scalar", x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <std::floating_point T>
Tensor<T> mul_scalar(const Tensor<T>& x, T s) {
  return unary<T>(
      "mul_scalar", x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <std::floating_point T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary<T>(
      "exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <std::floating_point T>
Tensor<T> log(const Tensor<T>& x) {
  return unary<T>(
      "log", x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <std::floating_point T>
Tensor<T> sin(const Tensor<T>& x) {
  return unary<T>(
      "sin", x, [](T v) { return std::sin(v); }, [](T v, T) { return std::cos(v); });
}

template <std::floating_point T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  constexpr T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
  return unary<T>(
      "gelu", x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [](T v, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
        return cdf + v * pdf;
      });
}

// ---------------------------------------------------------------------------
// Contractions and layout

template <std::floating_point T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check_finite<T>("matmul", {&a, &b});
  if (a.ndim() < 2 || b.ndim() < 2) shape_mismatch("matmul", a.shape(), b.shape());
  const std::size_t m = a.shape()[a.ndim() - 2];
  const std::size_t k = a.shape().back();
  const std::size_t k2 = b.shape()[b.ndim() - 2];
  const std::size_t n = b.shape().back();
  if (k != k2) shape_mismatch("matmul", a.shape(), b.shape());

  const auto ei = [](std::size_t v) { return static_cast<Eigen::Index>(v); };

  if (b.ndim() == 2) {
    const std::size_t rows = a.numel() / std::max<std::size_t>(k, 1);
    Shape out_shape = a.shape();
    out_shape.back() = n;
    std::vector<T> out(rows * n);
    if (k == 0) {
      std::fill(out.begin(), out.end(), T(0));
    } else {
      MatMap<T>(out.data(), ei(rows), ei(n)).noalias() =
          ConstMatMap<T>(a.data().data(), ei(rows), ei(k)) * ConstMatMap<T>(b.data().data(), ei(k), ei(n));
    }
    return record("matmul", make(std::move(out_shape), std::move(out)), {a.impl(), b.impl()},
                  [rows, k, n, ei](const Node<T>& node) {
                    ConstMatMap<T> g(node.output->grad.data(), ei(rows), ei(n));
                    if (T* ga = grad_of(node.inputs[0])) {
                      MatMap<T>(ga, ei(rows), ei(k)).noalias() +=
                          g * ConstMatMap<T>(node.inputs[1]->data.data(), ei(k), ei(n)).transpose();
                    }
                    if (T* gb = grad_of(node.inputs[1])) {
                      MatMap<T>(gb, ei(k), ei(n)).noalias() +=
                          ConstMatMap<T>(node.inputs[0]->data.data(), ei(rows), ei(k)).transpose() * g;
                    }
                  });
  }

  if (a.ndim() != b.ndim() ||
      !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
    shape_mismatch("matmul", a.shape(), b.shape());
  }
  const std::size_t batch = numel(Shape(a.shape().begin(), a.shape().end() - 2));
  Shape out_shape = a.shape();
  out_shape.back() = n;
  std::vector<T> out(batch * m * n, T(0));
  const T* pa = a.data().data();
  const T* pb = b.data().data();
#pragma omp parallel for schedule(static) if (batch * m * n * k > (1u << 16))
  for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(batch); ++s) {
    const auto i = static_cast<std::size_t>(s);
    MatMap<T>(out.data() + i * m * n, ei(m), ei(n)).noalias() =
        ConstMatMap<T>(pa + i * m * k, ei(m), ei(k)) * ConstMatMap<T>(pb + i * k * n, ei(k), ei(n));
  }
  return record("matmul", make(std::move(out_shape), std::move(out)), {a.impl(), b.impl()},
                [batch, m, k, n, ei](const Node<T>& node) {
                  T* ga = grad_of(node.inputs[0]);
                  T* gb = grad_of(node.inputs[1]);
                  const T* g = node.output->grad.data();
                  const T* xa = node.inputs[0]->data.data();
                  const T* xb = node.inputs[1]->data.data();
#pragma omp parallel for schedule(static) if (batch * m * n * k > (1u << 16))
                  for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(batch); ++s) {
                    const auto i = static_cast<std::size_t>(s);
                    ConstMatMap<T> gi(g + i * m * n, ei(m), ei(n));
                    if (ga) {
                      MatMap<T>(ga + i * m * k, ei(m), ei(k)).noalias() +=
                          gi * ConstMatMap<T>(xb + i * k * n, ei(k), ei(n)).transpose();
                    }
                    if (gb) {
                      MatMap<T>(gb + i * k * n, ei(k), ei(n)).noalias() +=
                          ConstMatMap<T>(xa + i * m * k, ei(m), ei(k)).transpose() * gi;
                    }
                  }
                });
}

template <std::floating_point T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& order) {
  check_finite<T>("permute", {&x});
  const std::size_t rank = x.ndim();
  if (order.size() != rank) {
    throw ShapeError("permute: order of length " + std::to_string(order.size()) + " for shape " +
                     to_string(x.shape()));
  }
  std::vector<bool> seen(rank, false);
  for (auto o : order) {
    if (o >= rank || seen[o]) throw ShapeError("permute: invalid axis order for shape " + to_string(x.shape()));
    seen[o] = true;
  }
  Shape out_shape(rank);
  for (std::size_t d = 0; d < rank; ++d) out_shape[d] = x.shape()[order[d]];
  std::vector<T> out(x.numel());
  permute_apply(x.data().data(), out.data(), x.shape(), order, false);
  return record("permute", make(std::move(out_shape), std::move(out)), {x.impl()},
                [order](const Node<T>& node) {
                  T* gx = grad_of(node.inputs[0]);
                  if (!gx) return;
                  permute_apply(node.output->grad.data(), gx, node.inputs[0]->shape, order, true);
                });
}

template <std::floating_point T>
Tensor<T> transpose(const Tensor<T>& x, std::ptrdiff_t axis0, std::ptrdiff_t axis1) {
  std::vector<std::size_t> order(x.ndim());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::swap(order[normalize_axis(axis0, x.ndim(), "transpose")], order[normalize_axis(axis1, x.ndim(), "transpose")]);
  return permute(x, order);
}

template <std::floating_point T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  check_finite<T>("reshape", {&x});
  if (numel(shape) != x.numel()) shape_mismatch("reshape", x.shape(), shape);
  std::vector<T> out(x.data().begin(), x.data().end());
  return record("reshape", make(std::move(shape), std::move(out)), {x.impl()}, [](const Node<T>& node) {
    T* gx = grad_of(node.inputs[0]);
    if (!gx) return;
    const auto& g = node.output->grad;
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <std::floating_point T>
Tensor<T> index_rows(const Tensor<T>& table, std::span<const std::size_t> index) {
  check_finite<T>("index_rows", {&table});
  if (table.ndim() != 2) throw ShapeError("index_rows: table must be 2-D, got " + to_string(table.shape()));
  const std::size_t rows = table.shape()[0];
  const std::size_t width = table.shape()[1];
  std::vector<T> out(index.size() * width);
  for (std::size_t j = 0; j < index.size(); ++j) {
    if (index[j] >= rows) {
      throw ShapeError("index_rows: index " + std::to_string(index[j]) + " out of range for " +
                       to_string(table.shape()));
    }
    std::copy_n(table.data().data() + index[j] * width, width, out.data() + j * width);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return record("index_rows", make({index.size(), width}, std::move(out)), {table.impl()},
                [idx = std::move(idx), width](const Node<T>& node) {
                  T* gt = grad_of(node.inputs[0]);
                  if (!gt) return;
                  const T* g = node.output->grad.data();
                  for (std::size_t j = 0; j < idx.size(); ++j) {
                    for (std::size_t c = 0; c < width; ++c) gt[idx[j] * width + c] += g[j * width + c];
                  }
                });
}

template <std::floating_point T>
Tensor<T> scatter_rows(const Tensor<T>& src, std::span<const std::size_t> index, std::size_t rows) {
  check_finite<T>("scatter_rows", {&src});
  if (src.ndim() != 2 || src.shape()[0] != index.size()) {
    throw ShapeError("scatter_rows: source " + to_string(src.shape()) + " with " +
                     std::to_string(index.size()) + " indices");
  }
  const std::size_t width = src.shape()[1];
  std::vector<T> out(rows * width, T(0));
  for (std::size_t j = 0; j < index.size(); ++j) {
    if (index[j] >= rows) {
      throw ShapeError("scatter_rows: index " + std::to_string(index[j]) + " out of range for " +
                       std::to_string(rows) + " rows");
    }
    for (std::size_t c = 0; c < width; ++c) out[index[j] * width + c] += src.data()[j * width + c];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return record("scatter_rows", make({rows, width}, std::move(out)), {src.impl()},
                [idx = std::move(idx), width](const Node<T>& node) {
                  T* gs = grad_of(node.inputs[0]);
                  if (!gs) return;
                  const T* g = node.output->grad.data();
                  for (std::size_t j = 0; j < idx.size(); ++j) {
                    for (std::size_t c = 0; c < width; ++c) gs[j * width + c] += g[idx[j] * width + c];
                  }
                });
}

template <std::floating_point T>
Tensor<T> take_lastdim(const Tensor<T>& x, std::span<const std::size_t> index) {
  check_finite<T>("take_lastdim", {&x});
  const auto [rows, width] = rows_of(x, "take_lastdim");
  if (index.size() != rows) {
    throw ShapeError("take_lastdim: " + std::to_string(index.size()) + " indices for shape " + to_string(x.shape()));
  }
  std::vector<T> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (index[r] >= width) throw ShapeError("take_lastdim: index out of range for shape " + to_string(x.shape()));
    out[r] = x.data()[r * width + index[r]];
  }
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  std::vector<std::size_t> idx(index.begin(), index.end());
  return record("take_lastdim", make(std::move(out_shape), std::move(out)), {x.impl()},
                [idx = std::move(idx), w = width](const Node<T>& node) {
                  T* gx = grad_of(node.inputs[0]);
                  if (!gx) return;
                  const T* g = node.output->grad.data();
                  for (std::size_t r = 0; r < idx.size(); ++r) gx[r * w + idx[r]] += g[r];
                });
}

// ---------------------------------------------------------------------------
// Row-wise normalizations

template <std::floating_point T>
Tensor<T> softmax(const Tensor<T>& x) {
  check_finite<T>("softmax", {&x});
  const auto [rows, w] = rows_of(x, "softmax");
  std::vector<T> out(x.numel());
  const T* px = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = px + r * w;
    T* y = out.data() + r * w;
    const T mx = *std::max_element(row, row + w);
    T total = 0;
    for (std::size_t c = 0; c < w; ++c) total += (y[c] = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < w; ++c) y[c] /= total;
  }
  return record("softmax", make(x.shape(), std::move(out)), {x.impl()}, [rows, w](const Node<T>& node) {
    T* gx = grad_of(node.inputs[0]);
    if (!gx) return;
    const T* g = node.output->grad.data();
    const T* y = node.output->data.data();
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < w; ++c) dot += g[r * w + c] * y[r * w + c];
      for (std::size_t c = 0; c < w; ++c) gx[r * w + c] += y[r * w + c] * (g[r * w + c] - dot);
    }
  });
}

template <std::floating_point T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  check_finite<T>("log_softmax", {&x});
  const auto [rows, w] = rows_of(x, "log_softmax");
  std::vector<T> out(x.numel());
  const T* px = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = px + r * w;
    const T mx = *std::max_element(row, row + w);
    T total = 0;
    for (std::size_t c = 0; c < w; ++c) total += std::exp(row[c] - mx);
    const T lse = mx + std::log(total);
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = row[c] - lse;
  }
  return record("log_softmax", make(x.shape(), std::move(out)), {x.impl()}, [rows, w](const Node<T>& node) {
    T* gx = grad_of(node.inputs[0]);
    if (!gx) return;
    const T* g = node.output->grad.data();
    const T* y = node.output->data.data();
    for (std::size_t r = 0; r < rows; ++r) {
      T total = 0;
      for (std::size_t c = 0; c < w; ++c) total += g[r * w + c];
      for (std::size_t c = 0; c < w; ++c) gx[r * w + c] += g[r * w + c] - std::exp(y[r * w + c]) * total;
    }
  });
}

template <std::floating_point T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
  check_finite<T>("layer_norm", {&x, &gamma, &beta});
  const auto [rows, w] = rows_of(x, "layer_norm");
  const bool affine = gamma.defined();
  if (affine && (gamma.numel() != w || !beta.defined() || beta.numel() != w)) {
    shape_mismatch("layer_norm", x.shape(), gamma.shape());
  }
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> rstd(rows);
  const T* px = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = px + r * w;
    T mu = 0;
    for (std::size_t c = 0; c < w; ++c) mu += row[c];
    mu /= T(w);
    T var = 0;
    for (std::size_t c = 0; c < w; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= T(w);
    rstd[r] = T(1) / std::sqrt(var + T(eps));
    for (std::size_t c = 0; c < w; ++c) {
      const T h = (row[c] - mu) * rstd[r];
      xhat[r * w + c] = h;
      out[r * w + c] = affine ? h * gamma.data()[c] + beta.data()[c] : h;
    }
  }
  std::vector<ImplPtr<T>> inputs{x.impl()};
  if (affine) {
    inputs.push_back(gamma.impl());
    inputs.push_back(beta.impl());
  }
  return record("layer_norm", make(x.shape(), std::move(out)), std::move(inputs),
                [rows, w, affine, xhat = std::move(xhat), rstd = std::move(rstd)](const Node<T>& node) {
                  const T* g = node.output->grad.data();
                  T* gx = grad_of(node.inputs[0]);
                  T* gg = affine ? grad_of(node.inputs[1]) : nullptr;
                  T* gb = affine ? grad_of(node.inputs[2]) : nullptr;
                  const T* gam = affine ? node.inputs[1]->data.data() : nullptr;
                  std::vector<T> dxhat(w);
                  for (std::size_t r = 0; r < rows; ++r) {
                    const T* gr = g + r * w;
                    const T* hr = xhat.data() + r * w;
                    T m1 = 0, m2 = 0;
                    for (std::size_t c = 0; c < w; ++c) {
                      dxhat[c] = affine ? gr[c] * gam[c] : gr[c];
                      m1 += dxhat[c];
                      m2 += dxhat[c] * hr[c];
                      if (gg) gg[c] += gr[c] * hr[c];
                      if (gb) gb[c] += gr[c];
                    }
                    if (!gx) continue;
                    m1 /= T(w);
                    m2 /= T(w);
                    for (std::size_t c = 0; c < w; ++c) gx[r * w + c] += rstd[r] * (dxhat[c] - m1 - hr[c] * m2);
                  }
                });
}

// ---------------------------------------------------------------------------
// Reductions

template <std::floating_point T>
Tensor<T> sum(const Tensor<T>& x) {
  check_finite<T>("sum", {&x});
  T total = 0;
  for (T v : x.data()) total += v;
  return record("sum", make({}, std::vector<T>{total}), {x.impl()}, [](const Node<T>& node) {
    T* gx = grad_of(node.inputs[0]);
    if (!gx) return;
    const T g = node.output->grad[0];
    for (std::size_t i = 0; i < node.inputs[0]->data.size(); ++i) gx[i] += g;
  });
}

template <std::floating_point T>
Tensor<T> mean(const Tensor<T>& x) {
  check_finite<T>("mean", {&x});
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  T total = 0;
  for (T v : x.data()) total += v;
  const T n = T(x.numel());
  return record("mean", make({}, std::vector<T>{total / n}), {x.impl()}, [n](const Node<T>& node) {
    T* gx = grad_of(node.inputs[0]);
    if (!gx) return;
    const T g = node.output->grad[0] / n;
    for (std::size_t i = 0; i < node.inputs[0]->data.size(); ++i) gx[i] += g;
  });
}

template <std::floating_point T>
Tensor<T> sum_axis(const Tensor<T>& x, std::ptrdiff_t axis, bool keepdim) {
  check_finite<T>("sum_axis", {&x});
  const std::size_t ax = normalize_axis(axis, x.ndim(), "sum_axis");
  const auto& s = x.shape();
  const std::size_t outer = numel(Shape(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(ax)));
  const std::size_t len = s[ax];
  const std::size_t inner = numel(Shape(s.begin() + static_cast<std::ptrdiff_t>(ax) + 1, s.end()));
  std::vector<T> out(outer * inner, T(0));
  const T* px = x.data().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += px[(o * len + l) * inner + i];
  Shape out_shape = s;
  if (keepdim) {
    out_shape[ax] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  }
  return record("sum_axis", make(std::move(out_shape), std::move(out)), {x.impl()},
                [outer, len, inner](const Node<T>& node) {
                  T* gx = grad_of(node.inputs[0]);
                  if (!gx) return;
                  const T* g = node.output->grad.data();
                  for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t l = 0; l < len; ++l)
                      for (std::size_t i = 0; i < inner; ++i) gx[(o * len + l) * inner + i] += g[o * inner + i];
                });
}

template <std::floating_point T>
Tensor<T> mean_axis(const Tensor<T>& x, std::ptrdiff_t axis, bool keepdim) {
  const std::size_t len = x.dim(axis);
  if (len == 0) throw ShapeError("mean_axis over an empty axis");
  return mul_scalar(sum_axis(x, axis, keepdim), T(1) / T(len));
}

template <std::floating_point T>
Tensor<T> l2_norm(const Tensor<T>& x) {
  check_finite<T>("l2_norm", {&x});
  const auto [rows, w] = rows_of(x, "l2_norm");
  std::vector<T> out(rows);
  const T* px = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    T ss = 0;
    for (std::size_t c = 0; c < w; ++c) ss += px[r * w + c] * px[r * w + c];
    out[r] = std::sqrt(ss);
  }
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  return record("l2_norm", make(std::move(out_shape), std::move(out)), {x.impl()}, [rows, w](const Node<T>& node) {
    T* gx = grad_of(node.inputs[0]);
    if (!gx) return;
    const T* g = node.output->grad.data();
    const T* n = node.output->data.data();
    const T* xv = node.inputs[0]->data.data();
    for (std::size_t r = 0; r < rows; ++r) {
      if (n[r] == T(0)) continue;
      for (std::size_t c = 0; c < w; ++c) gx[r * w + c] += g[r] * xv[r * w + c] / n[r];
    }
  });
}

template <std::floating_point T>
Tensor<T> l2_normalize(const Tensor<T>& x, double eps) {
  check_finite<T>("l2_normalize", {&x});
  const auto [rows, w] = rows_of(x, "l2_normalize");
  std::vector<T> out(x.numel());
  std::vector<T> denom(rows);
  std::vector<bool> clamped(rows);
  const T* px = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    T ss = 0;
    for (std::size_t c = 0; c < w; ++c) ss += px[r * w + c] * px[r * w + c];
    const T n = std::sqrt(ss);
    clamped[r] = n < T(eps);
    denom[r] = clamped[r] ? T(eps) : n;
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = px[r * w + c] / denom[r];
  }
  return record("l2_normalize", make(x.shape(), std::move(out)), {x.impl()},
                [rows, w, denom = std::move(denom), clamped = std::move(clamped)](const Node<T>& node) {
                  T* gx = grad_of(node.inputs[0]);
                  if (!gx) return;
                  const T* g = node.output->grad.data();
                  const T* y = node.output->data.data();
                  for (std::size_t r = 0; r < rows; ++r) {
                    T dot = 0;
                    if (!clamped[r]) {
                      for (std::size_t c = 0; c < w; ++c) dot += g[r * w + c] * y[r * w + c];
                    }
                    for (std::size_t c = 0; c < w; ++c) gx[r * w + c] += (g[r * w + c] - y[r * w + c] * dot) / denom[r];
                  }
                });
}

// ---------------------------------------------------------------------------
// Assembly

template <std::floating_point T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::ptrdiff_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& ref = parts.front().shape();
  const std::size_t ax = normalize_axis(axis, ref.size(), "concat");
  std::size_t total = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    check_finite<T>("concat", {&p});
    if (p.ndim() != ref.size()) shape_mismatch("concat", ref, p.shape());
    for (std::size_t d = 0; d < ref.size(); ++d) {
      if (d != ax && p.shape()[d] != ref[d]) shape_mismatch("concat", ref, p.shape());
    }
    lens.push_back(p.shape()[ax]);
    total += p.shape()[ax];
  }
  const std::size_t outer = numel(Shape(ref.begin(), ref.begin() + static_cast<std::ptrdiff_t>(ax)));
  const std::size_t inner = numel(Shape(ref.begin() + static_cast<std::ptrdiff_t>(ax) + 1, ref.end()));
  Shape out_shape = ref;
  out_shape[ax] = total;
  std::vector<T> out(outer * total * inner);
  std::size_t offset = 0;
  std::vector<ImplPtr<T>> inputs;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const T* src = parts[p].data().data();
    const std::size_t chunk = lens[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src + o * chunk, chunk, out.data() + (o * total + offset) * inner);
    }
    offset += lens[p];
    inputs.push_back(parts[p].impl());
  }
  return record("concat", make(std::move(out_shape), std::move(out)), std::move(inputs),
                [outer, inner, total, lens = std::move(lens)](const Node<T>& node) {
                  const T* g = node.output->grad.data();
                  std::size_t off = 0;
                  for (std::size_t p = 0; p < lens.size(); ++p) {
                    const std::size_t chunk = lens[p] * inner;
                    if (T* gp = grad_of(node.inputs[p])) {
                      for (std::size_t o = 0; o < outer; ++o) {
                        const T* gs = g + (o * total + off) * inner;
                        for (std::size_t i = 0; i < chunk; ++i) gp[o * chunk + i] += gs[i];
                      }
                    }
                    off += lens[p];
                  }
                });
}

template <std::floating_point T>
Tensor<T> slice(const Tensor<T>& x, std::ptrdiff_t axis, std::size_t start, std::size_t length) {
  check_finite<T>("slice", {&x});
  const std::size_t ax = normalize_axis(axis, x.ndim(), "slice");
  const auto& s = x.shape();
  if (start + length > s[ax]) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") exceeds axis of length " + std::to_string(s[ax]) + " in " + to_string(s));
  }
  const std::size_t outer = numel(Shape(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(ax)));
  const std::size_t inner = numel(Shape(s.begin() + static_cast<std::ptrdiff_t>(ax) + 1, s.end()));
  const std::size_t len = s[ax];
  Shape out_shape = s;
  out_shape[ax] = length;
  std::vector<T> out(outer * length * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.data().data() + (o * len + start) * inner, length * inner, out.data() + o * length * inner);
  }
  return record("slice", make(std::move(out_shape), std::move(out)), {x.impl()},
                [outer, inner, len, start, length](const Node<T>& node) {
                  T* gx = grad_of(node.inputs[0]);
                  if (!gx) return;
                  const T* g = node.output->grad.data();
                  for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t i = 0; i < length * inner; ++i)
                      gx[(o * len + start) * inner + i] += g[o * length * inner + i];
                });
}

namespace {
struct Tap {
  std::size_t i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}
}  // namespace

template <std::floating_point T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  check_finite<T>("upsample_bilinear", {&x});
  if (x.ndim() != 4 || x.shape()[1] == 0 || x.shape()[2] == 0) {
    throw ShapeError("upsample_bilinear: expects [B, h, w, C], got " + to_string(x.shape()));
  }
  const std::size_t b = x.shape()[0], h = x.shape()[1], w = x.shape()[2], c = x.shape()[3];
  auto ty = bilinear_taps(h, out_h);
  auto tx = bilinear_taps(w, out_w);
  std::vector<T> out(b * out_h * out_w * c, T(0));
  const T* px = x.data().data();
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t oy = 0; oy < out_h; ++oy)
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto& [y0, y1, wy] = ty[oy];
        const auto& [x0, x1, wx] = tx[ox];
        const T w00 = T((1 - wy) * (1 - wx)), w01 = T((1 - wy) * wx), w10 = T(wy * (1 - wx)), w11 = T(wy * wx);
        T* dst = out.data() + ((n * out_h + oy) * out_w + ox) * c;
        const T* s00 = px + ((n * h + y0) * w + x0) * c;
        const T* s01 = px + ((n * h + y0) * w + x1) * c;
        const T* s10 = px + ((n * h + y1) * w + x0) * c;
        const T* s11 = px + ((n * h + y1) * w + x1) * c;
        for (std::size_t k = 0; k < c; ++k) dst[k] = w00 * s00[k] + w01 * s01[k] + w10 * s10[k] + w11 * s11[k];
      }
  return record("upsample_bilinear", make({b, out_h, out_w, c}, std::move(out)), {x.impl()},
                [b, h, w, c, out_h, out_w, ty = std::move(ty), tx = std::move(tx)](const Node<T>& node) {
                  T* gx = grad_of(node.inputs[0]);
                  if (!gx) return;
                  const T* g = node.output->grad.data();
                  for (std::size_t n = 0; n < b; ++n)
                    for (std::size_t oy = 0; oy < out_h; ++oy)
                      for (std::size_t ox = 0; ox < out_w; ++ox) {
                        const auto& [y0, y1, wy] = ty[oy];
                        const auto& [x0, x1, wx] = tx[ox];
                        const T w00 = T((1 - wy) * (1 - wx)), w01 = T((1 - wy) * wx), w10 = T(wy * (1 - wx)),
                                w11 = T(wy * wx);
                        const T* src = g + ((n * out_h + oy) * out_w + ox) * c;
                        T* d00 = gx + ((n * h + y0) * w + x0) * c;
                        T* d01 = gx + ((n * h + y0) * w + x1) * c;
                        T* d10 = gx + ((n * h + y1) * w + x0) * c;
                        T* d11 = gx + ((n * h + y1) * w + x1) * c;
                        for (std::size_t k = 0; k < c; ++k) {
                          d00[k] += w00 * src[k];
                          d01[k] += w01 * src[k];
                          d10[k] += w10 * src[k];
                          d11[k] += w11 * src[k];
                        }
                      }
                });
}

#define MCF_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                            \
  template Tensor<T> mul_scalar(const Tensor<T>&, T);                                            \
  template Tensor<T> exp(const Tensor<T>&);                                                      \
  template Tensor<T> log(const Tensor<T>&);                                                      \
  template Tensor<T> sin(const Tensor<T>&);                                                      \
  template Tensor<T> gelu(const Tensor<T>&);                                                     \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                 \
  template Tensor<T> transpose(const Tensor<T>&, std::ptrdiff_t, std::ptrdiff_t);                \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                           \
  template Tensor<T> index_rows(const Tensor<T>&, std::span<const std::size_t>);                 \
  template Tensor<T> scatter_rows(const Tensor<T>&, std::span<const std::size_t>, std::size_t);  \
  template Tensor<T> take_lastdim(const Tensor<T>&, std::span<const std::size_t>);               \
  template Tensor<T> softmax(const Tensor<T>&);                                                  \
  template Tensor<T> log_softmax(const Tensor<T>&);                                              \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);   \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> mean(const Tensor<T>&);                                                     \
  template Tensor<T> sum_axis(const Tensor<T>&, std::ptrdiff_t, bool);                           \
  template Tensor<T> mean_axis(const Tensor<T>&, std::ptrdiff_t, bool);                          \
  template Tensor<T> l2_norm(const Tensor<T>&);                                                  \
  template Tensor<T> l2_normalize(const Tensor<T>&, double);                                     \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::ptrdiff_t);                      \
  template Tensor<T> slice(const Tensor<T>&, std::ptrdiff_t, std::size_t, std::size_t);          \
  template Tensor<T> upsample_bilinear(const Tensor<T>&, std::size_t, std::size_t);

MCF_INSTANTIATE_OPS(float)
MCF_INSTANTIATE_OPS(double)

#undef MCF_INSTANTIATE_OPS

}  // namespace mcf
