// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable primitives. Every function records a node on the local
// Graph when grad mode is on and at least one input requires grad.
// Binary elementwise ops broadcast with trailing-dimension alignment.
// "Last dim" ops (softmax, layer_norm, l2_*) act on rows of the innermost axis.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mcf/tensor.hpp"

namespace mcf {

template <std::floating_point T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <std::floating_point T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <std::floating_point T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <std::floating_point T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <std::floating_point T> Tensor<T> add_scalar(const Tensor<T>& x, T s);
template <std::floating_point T> Tensor<T> mul_scalar(const Tensor<T>& x, T s);

template <std::floating_point T> Tensor<T> exp(const Tensor<T>& x);
template <std::floating_point T> Tensor<T> log(const Tensor<T>& x);
template <std::floating_point T> Tensor<T> sin(const Tensor<T>& x);
/// Exact (erf-based) GELU.
template <std::floating_point T> Tensor<T> gelu(const Tensor<T>& x);

/// [..., M, K] x [K, N] or [B..., M, K] x [B..., K, N] with equal batch dims.
template <std::floating_point T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <std::floating_point T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& order);
template <std::floating_point T>
Tensor<T> transpose(const Tensor<T>& x, std::ptrdiff_t axis0, std::ptrdiff_t axis1);
template <std::floating_point T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Row gather from a 2-D table: out[j] = table[index[j]].
template <std::floating_point T>
Tensor<T> index_rows(const Tensor<T>& table, std::span<const std::size_t> index);
/// Row scatter into a zero [rows, D] table: out[index[j]] += src[j].
template <std::floating_point T>
Tensor<T> scatter_rows(const Tensor<T>& src, std::span<const std::size_t> index, std::size_t rows);
/// out[r] = x[r, index[r]] over the flattened leading dims.
template <std::floating_point T>
Tensor<T> take_lastdim(const Tensor<T>& x, std::span<const std::size_t> index);

template <std::floating_point T> Tensor<T> softmax(const Tensor<T>& x);
template <std::floating_point T> Tensor<T> log_softmax(const Tensor<T>& x);

inline constexpr double kLayerNormEps = 1e-6;

/// Normalizes the last dim; gamma/beta may be undefined for the bare normalization.
template <std::floating_point T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps = kLayerNormEps);

template <std::floating_point T> Tensor<T> sum(const Tensor<T>& x);
template <std::floating_point T> Tensor<T> mean(const Tensor<T>& x);
template <std::floating_point T>
Tensor<T> sum_axis(const Tensor<T>& x, std::ptrdiff_t axis, bool keepdim = false);
template <std::floating_point T>
Tensor<T> mean_axis(const Tensor<T>& x, std::ptrdiff_t axis, bool keepdim = false);

template <std::floating_point T> Tensor<T> l2_norm(const Tensor<T>& x);
template <std::floating_point T> Tensor<T> l2_normalize(const Tensor<T>& x, double eps = 1e-12);

template <std::floating_point T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::ptrdiff_t axis);
template <std::floating_point T>
Tensor<T> slice(const Tensor<T>& x, std::ptrdiff_t axis, std::size_t start, std::size_t length);

/// [B, h, w, C] -> [B, H, W, C], half-pixel centers (align_corners = false).
template <std::floating_point T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, std::size_t out_h, std::size_t out_w);

template <std::floating_point T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <std::floating_point T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <std::floating_point T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <std::floating_point T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }

/// Mean of squared differences.
template <std::floating_point T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  auto d = sub(a, b);
  return mean(mul(d, d));
}

}  // namespace mcf
