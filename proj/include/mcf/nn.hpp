// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Parameter containers shared by the encoder, decoder and heads.

#pragma once

#include <string>
#include <vector>

#include "mcf/ops.hpp"
#include "mcf/rng.hpp"

namespace mcf {

template <std::floating_point T>
struct Param {
  std::string name;
  Tensor<T> tensor;
  bool decay = true;  // weight decay applies
};

template <std::floating_point T>
using ParamList = std::vector<Param<T>>;

/// Weight init used throughout: truncated normal (2 sigma), std 0.02.
inline constexpr double kInitStd = 0.02;

template <std::floating_point T>
Tensor<T> trunc_normal(Shape shape, Rng& rng, double stddev = kInitStd);

template <std::floating_point T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]

  static Linear init(std::size_t in, std::size_t out, Rng& rng, double stddev = kInitStd);
  Tensor<T> operator()(const Tensor<T>& x) const { return add(matmul(x, weight), bias); }
  void collect(const std::string& prefix, ParamList<T>& out) const;
  std::size_t in_features() const { return weight.shape()[0]; }
  std::size_t out_features() const { return weight.shape()[1]; }
};

template <std::floating_point T>
struct LayerNorm {
  Tensor<T> gamma;
  Tensor<T> beta;

  static LayerNorm init(std::size_t width);
  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// Two linear layers with a GELU in between. Weights start at std
/// 1/sqrt(fan_in) so that outputs have unit scale before L2 normalization.
template <std::floating_point T>
struct MlpHead {
  Linear<T> fc1;
  Linear<T> fc2;

  static MlpHead init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const { return fc2(gelu(fc1(x))); }
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

template <std::floating_point T>
void set_requires_grad(const ParamList<T>& params, bool flag);
template <std::floating_point T>
void zero_grad(const ParamList<T>& params);
template <std::floating_point T>
std::size_t count_elements(const ParamList<T>& params);

/// Elementwise value copy between identically named/shaped lists.
template <std::floating_point T>
void copy_values(const ParamList<T>& from, const ParamList<T>& to);

}  // namespace mcf
