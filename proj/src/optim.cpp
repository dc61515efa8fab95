// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcf/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mcf {

template <std::floating_point T>
AdamW<T>::AdamW(ParamList<T> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.beta1 >= 0 && cfg_.beta1 < 1) || !(cfg_.beta2 >= 0 && cfg_.beta2 < 1)) {
    throw std::invalid_argument("AdamW: betas must lie in [0, 1)");
  }
  if (!(cfg_.eps > 0)) throw std::invalid_argument("AdamW: eps must be positive");
  if (!(cfg_.weight_decay >= 0)) throw std::invalid_argument("AdamW: weight_decay must be non-negative");
  for (const auto& p : params_) {
    m_.push_back(Tensor<T>::zeros(p.tensor.shape()));
    v_.push_back(Tensor<T>::zeros(p.tensor.shape()));
  }
}

template <std::floating_point T>
void AdamW<T>::step(double lr) {
  if (!(lr >= 0)) throw std::invalid_argument("AdamW: learning rate must be non-negative");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
  const T step_size = static_cast<T>(lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg_.eps);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto p = params_[i].tensor;
    if (m_[i].shape() != p.shape()) {
      throw ShapeError("AdamW: moment shape " + to_string(m_[i].shape()) + " differs from " + params_[i].name + " " +
                       to_string(p.shape()));
    }
    auto w = p.data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    const auto g = p.grad();
    if (!g.empty() && g.size() != w.size()) throw ShapeError("AdamW: gradient size differs for " + params_[i].name);
    const T decay = params_[i].decay ? static_cast<T>(1.0 - lr * cfg_.weight_decay) : T(1);
    for (std::size_t j = 0; j < w.size(); ++j) {
      const T gj = g.empty() ? T(0) : g[j];
      m[j] = b1 * m[j] + (1 - b1) * gj;
      v[j] = b2 * v[j] + (1 - b2) * gj * gj;
      w[j] = w[j] * decay - step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
    }
  }
}

double lr_at(std::size_t step, const LrSchedule& s) {
  if (s.total_steps == 0) throw std::invalid_argument("lr_at: total_steps must be positive");
  if (s.warmup_steps > s.total_steps) throw std::invalid_argument("lr_at: warmup longer than training");
  if (step < s.warmup_steps) {
    return s.peak_lr * static_cast<double>(step + 1) / static_cast<double>(s.warmup_steps);
  }
  const std::size_t anchor = s.warmup_steps == 0 ? 0 : s.warmup_steps - 1;
  if (s.total_steps - 1 <= anchor) return 0.0;
  const double span = static_cast<double>(s.total_steps - 1 - anchor);
  const double t = std::min(1.0, static_cast<double>(step - anchor) / span);
  return s.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace mcf
