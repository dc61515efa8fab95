// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcf/nn.hpp"

#include <algorithm>
#include <cmath>

namespace mcf {

template <std::floating_point T>
Tensor<T> trunc_normal(Shape shape, Rng& rng, double stddev) {
  auto t = Tensor<T>::zeros(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.truncated_normal(stddev));
  return t;
}

template <std::floating_point T>
Linear<T> Linear<T>::init(std::size_t in, std::size_t out, Rng& rng, double stddev) {
  Linear l{trunc_normal<T>({in, out}, rng, stddev), Tensor<T>::zeros({out})};
  l.weight.set_requires_grad(true);
  l.bias.set_requires_grad(true);
  return l;
}

template <std::floating_point T>
void Linear<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".weight", weight, true});
  out.push_back({prefix + ".bias", bias, false});
}

template <std::floating_point T>
LayerNorm<T> LayerNorm<T>::init(std::size_t width) {
  LayerNorm n{Tensor<T>::ones({width}), Tensor<T>::zeros({width})};
  n.gamma.set_requires_grad(true);
  n.beta.set_requires_grad(true);
  return n;
}

template <std::floating_point T>
void LayerNorm<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".gamma", gamma, false});
  out.push_back({prefix + ".beta", beta, false});
}

template <std::floating_point T>
MlpHead<T> MlpHead<T>::init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  auto fc1 = Linear<T>::init(in, hidden, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  auto fc2 = Linear<T>::init(hidden, out, rng, 1.0 / std::sqrt(static_cast<double>(hidden)));
  return {std::move(fc1), std::move(fc2)};
}

template <std::floating_point T>
void MlpHead<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

template <std::floating_point T>
void set_requires_grad(const ParamList<T>& params, bool flag) {
  for (auto p : params) p.tensor.set_requires_grad(flag);
}

template <std::floating_point T>
void zero_grad(const ParamList<T>& params) {
  for (auto p : params) p.tensor.zero_grad();
}

template <std::floating_point T>
std::size_t count_elements(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

template <std::floating_point T>
void copy_values(const ParamList<T>& from, const ParamList<T>& to) {
  if (from.size() != to.size()) throw ShapeError("copy_values: parameter count mismatch");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].tensor.shape() != to[i].tensor.shape()) {
      throw ShapeError("copy_values: " + from[i].name + " " + to_string(from[i].tensor.shape()) + " vs " +
                       to[i].name + " " + to_string(to[i].tensor.shape()));
    }
    auto dst = to[i].tensor;
    std::copy(from[i].tensor.data().begin(), from[i].tensor.data().end(), dst.data().begin());
  }
}

#define MCF_INSTANTIATE_NN(T)                                                  \
  template Tensor<T> trunc_normal<T>(Shape, Rng&, double);                     \
  template struct Linear<T>;                                                   \
  template struct LayerNorm<T>;                                                \
  template struct MlpHead<T>;                                                  \
  template void set_requires_grad<T>(const ParamList<T>&, bool);               \
  template void zero_grad<T>(const ParamList<T>&);                             \
  template std::size_t count_elements<T>(const ParamList<T>&);                 \
  template void copy_values<T>(const ParamList<T>&, const ParamList<T>&);

MCF_INSTANTIATE_NN(float)
MCF_INSTANTIATE_NN(double)

}  // namespace mcf
