// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcf/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mcf {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

template <std::floating_point T>
Tensor<T> finite_difference_grad(const std::function<Tensor<T>(const Tensor<T>&)>& f, const Tensor<T>& x,
                                 double h) {
  if (!(h > 0)) throw std::invalid_argument("finite_difference_grad: step must be positive");
  NoGradGuard no_grad;
  Tensor<T> probe = x.detach();
  auto out = Tensor<T>::zeros(x.shape());
  auto values = probe.data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const T saved = values[i];
    values[i] = saved + T(h);
    const Tensor<T> up = f(probe);
    values[i] = saved - T(h);
    const Tensor<T> down = f(probe);
    values[i] = saved;
    if (up.numel() != 1 || down.numel() != 1) {
      throw ShapeError("finite_difference_grad: f must return a scalar, got " + to_string(up.shape()));
    }
    out.data()[i] = static_cast<T>((static_cast<double>(up.item()) - static_cast<double>(down.item())) / (2 * h));
  }
  return out;
}

template <std::floating_point T>
GradCheckReport check_gradients(const std::function<Tensor<T>()>& loss_fn, const ParamList<T>& params,
                                const GradCheckOptions& options) {
  Graph<T>::local().clear();
  zero_grad(params);
  {
    auto loss = loss_fn();
    if (loss.numel() != 1) throw ShapeError("check_gradients: loss must be a scalar");
    backward(loss);
  }
  GradCheckReport report;
  Rng rng(options.seed);
  NoGradGuard no_grad;
  for (const auto& p : params) {
    auto tensor = p.tensor;
    if (!tensor.requires_grad()) continue;
    std::vector<T> analytic(tensor.grad().begin(), tensor.grad().end());
    if (analytic.empty()) analytic.assign(tensor.numel(), T(0));
    std::vector<std::size_t> order(tensor.numel());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (options.max_per_param && order.size() > options.max_per_param) {
      rng.shuffle(order.begin(), order.end());
      order.resize(options.max_per_param);
      std::sort(order.begin(), order.end());
    }
    auto values = tensor.data();
    for (auto i : order) {
      const T saved = values[i];
      values[i] = saved + T(options.step);
      const double up = static_cast<double>(loss_fn().item());
      values[i] = saved - T(options.step);
      const double down = static_cast<double>(loss_fn().item());
      values[i] = saved;
      const double numeric = (up - down) / (2 * options.step);
      const double err = relative_error(static_cast<double>(analytic[i]), numeric, options.floor);
      ++report.checked;
      if (err > report.max_rel_error || report.checked == 1) {
        report.max_rel_error = err;
        report.worst_param = p.name;
        report.worst_index = i;
        report.worst_analytic = static_cast<double>(analytic[i]);
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

template Tensor<float> finite_difference_grad<float>(const std::function<Tensor<float>(const Tensor<float>&)>&,
                                                     const Tensor<float>&, double);
template Tensor<double> finite_difference_grad<double>(
    const std::function<Tensor<double>(const Tensor<double>&)>&, const Tensor<double>&, double);
template GradCheckReport check_gradients<float>(const std::function<Tensor<float>()>&, const ParamList<float>&,
                                                const GradCheckOptions&);
template GradCheckReport check_gradients<double>(const std::function<Tensor<double>()>&, const ParamList<double>&,
                                                 const GradCheckOptions&);

}  // namespace mcf
