// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite differences as an oracle for backward().

#pragma once

#include <functional>
#include <string>

#include "mcf/nn.hpp"

namespace mcf {

/// Relative error with a denominator floor so that gradients near zero are
/// compared on an absolute scale.
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// (f(x + h e_i) - f(x - h e_i)) / 2h for every element of x. f must return
/// a scalar and be deterministic; x is restored after each probe.
template <std::floating_point T>
Tensor<T> finite_difference_grad(const std::function<Tensor<T>(const Tensor<T>&)>& f, const Tensor<T>& x,
                                 double h);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;

  bool passed(double tolerance) const { return max_rel_error <= tolerance; }
};

struct GradCheckOptions {
  double step = 1e-5;
  double floor = 1e-6;
  /// 0 checks every element; otherwise a seeded random subset per tensor.
  std::size_t max_per_param = 0;
  std::uint64_t seed = 0;
};

/// Runs `loss_fn` once with backward() to get analytic gradients of
/// `params`, then compares against central differences of `loss_fn`.
template <std::floating_point T>
GradCheckReport check_gradients(const std::function<Tensor<T>()>& loss_fn, const ParamList<T>& params,
                                const GradCheckOptions& options = {});

}  // namespace mcf
