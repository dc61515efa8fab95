// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "mcf/nn.hpp"

namespace mcf {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// AdamW with decoupled weight decay and bias-corrected moments. Decay is
/// applied only to parameters flagged `decay`.
template <std::floating_point T>
class AdamW {
 public:
  AdamW(ParamList<T> params, AdamWConfig cfg);

  /// One update from the gradients currently held by the parameters; a
  /// parameter without a gradient buffer is treated as having zero gradient.
  void step(double lr);

  const ParamList<T>& params() const { return params_; }
  const AdamWConfig& config() const { return cfg_; }
  std::size_t step_count() const { return t_; }
  void set_step_count(std::size_t t) { t_ = t; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }

 private:
  ParamList<T> params_;
  AdamWConfig cfg_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  std::size_t t_ = 0;
};

struct LrSchedule {
  double peak_lr = 0.016;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;
};

/// Linear warmup reaching the peak on the last warmup step, then cosine decay
/// from that step down to exactly zero on step total_steps - 1.
double lr_at(std::size_t step, const LrSchedule& schedule);

}  // namespace mcf
