// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <functional>

#include "mcf/gradcheck.hpp"
#include "mcf/objectives.hpp"

namespace mcf {

namespace {

using D = double;

Tensor<D> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = true) {
  auto t = Tensor<D>::zeros(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  t.set_requires_grad(grad);
  return t;
}

Shape random_shape(Rng& rng) {
  return {1 + rng.uniform_index(4), 1 + rng.uniform_index(8), 1 + rng.uniform_index(8)};
}

// Weighted mean so every output element carries a distinct upstream
// gradient while the loss stays O(1), keeping finite-difference roundoff
// well below the error floor.
Tensor<D> probe_loss(const Tensor<D>& out, const Tensor<D>& weights) {
  return mean(mul(out, weights));
}

StructureCheck run_check(const std::string& name, const std::function<Tensor<D>()>& fn, const ParamList<D>& params,
                         double tolerance, std::size_t max_per_param = 0, std::uint64_t seed = 0) {
  GradCheckOptions opts;
  opts.max_per_param = max_per_param;
  opts.seed = seed;
  const auto report = check_gradients<D>(fn, params, opts);
  StructureCheck c;
  c.name = name;
  c.description = "worst " + report.worst_param + "[" + std::to_string(report.worst_index) + "] over " +
                  std::to_string(report.checked) + " elements";
  c.value = report.max_rel_error;
  c.threshold = tolerance;
  c.passed = report.checked > 0 && report.passed(tolerance);
  return c;
}

std::vector<D> flat_grads(const ParamList<D>& params) {
  std::vector<D> out;
  for (const auto& p : params) {
    if (p.tensor.has_grad()) {
      out.insert(out.end(), p.tensor.grad().begin(), p.tensor.grad().end());
    } else {
      out.insert(out.end(), p.tensor.numel(), 0.0);
    }
  }
  return out;
}

std::vector<D> gradients_of(const std::function<Tensor<D>()>& fn, const ParamList<D>& params) {
  Graph<D>::local().clear();
  zero_grad(params);
  backward(fn());
  return flat_grads(params);
}

double norm2(std::span<const D> v) {
  double s = 0;
  for (auto x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

bool GradientStructureReport::passed() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

McfConfig tiny_structure_config() {
  McfConfig cfg;
  cfg.encoder = {8, 4, 3, 1, 8, 2, 2.0};
  cfg.m1 = {8, 4, 3, 1, 8, 2, 2.0};
  cfg.decoder = {1, 8, 2, 2.0};
  cfg.mode = {LossVariant::FeaturePlusConCls, 0.7, 1.3};
  cfg.mask_ratio = 0.5;
  cfg.head_hidden = 8;
  cfg.head_dim = 8;
  return cfg;
}

GradientStructureReport verify_gradient_structure(const McfConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  auto model = McfModel<D>::init(cfg, rng);
  const std::size_t batch = 2;
  auto images = random_tensor({batch, cfg.encoder.image_size, cfg.encoder.image_size, cfg.encoder.channels}, rng,
                              0.0, 1.0, false);
  auto [mb, mo] = draw_masks(rng, batch, cfg);
  const auto encoder_params = model.student.params("student");
  GradientStructureReport report;

  auto mim = [&]() { return mim_loss<D>(images, mb, model); };
  {
    auto c = run_check("a", mim, encoder_params, 1e-4);
    c.description = "encoder gradient through frozen M1 vs finite differences, " + c.description;
    report.checks.push_back(c);
  }
  {
    const auto g1 = gradients_of(mim, encoder_params);
    Rng other(seed ^ 0x9e3779b97f4a7c15ULL);
    const auto saved = model.m1;
    model.set_m1(ViTParams<D>::init(cfg.m1, other));
    const auto g2 = gradients_of(mim, encoder_params);
    model.m1 = saved;
    std::vector<D> diff(g1.size());
    for (std::size_t i = 0; i < g1.size(); ++i) diff[i] = g1[i] - g2[i];
    StructureCheck c;
    c.name = "b";
    c.description = "norm of encoder gradient change when M1 is replaced by another frozen network";
    c.value = norm2(diff);
    c.threshold = 1e-6;
    c.passed = c.value > c.threshold;
    report.checks.push_back(c);
  }
  {
    auto contrastive_model = model;
    contrastive_model.cfg.mode.variant = LossVariant::FeaturePlusConCls;
    const double mw = cfg.mode.mim_weight, cw = cfg.mode.con_weight;
    const auto params = contrastive_model.trainable();
    const auto total = gradients_of([&] { return total_loss<D>(images, mb, mo, contrastive_model).total; }, params);
    const auto g_mim = gradients_of([&] { return total_loss<D>(images, mb, mo, contrastive_model).mim; }, params);
    const auto g_con = gradients_of([&] { return total_loss<D>(images, mb, mo, contrastive_model).con; }, params);
    std::vector<D> diff(total.size());
    for (std::size_t i = 0; i < total.size(); ++i) diff[i] = total[i] - (mw * g_mim[i] + cw * g_con[i]);
    StructureCheck c;
    c.name = "c";
    c.description = "relative deviation of total gradient from the weighted sum of branch gradients";
    c.value = norm2(diff) / std::max(norm2(total), 1e-300);
    c.threshold = 1e-10;
    c.passed = c.value <= c.threshold;
    report.checks.push_back(c);
  }
  zero_grad(model.trainable());
  return report;
}

std::vector<StructureCheck> primitive_gradchecks(std::uint64_t seed, double tolerance) {
  Rng rng(seed);
  std::vector<StructureCheck> out;
  auto unary = [&](const std::string& name, const std::function<Tensor<D>(const Tensor<D>&)>& op, double lo,
                   double hi) {
    auto x = random_tensor(random_shape(rng), rng, lo, hi);
    auto w = random_tensor(op(x.detach()).shape(), rng, -1, 1, false);
    out.push_back(run_check(name, [&] { return probe_loss(op(x), w); }, {{"x", x}}, tolerance));
  };
  auto binary = [&](const std::string& name, const std::function<Tensor<D>(const Tensor<D>&, const Tensor<D>&)>& op,
                    double lo_b, double hi_b) {
    const Shape s = random_shape(rng);
    auto a = random_tensor(s, rng);
    auto b_same = random_tensor(s, rng, lo_b, hi_b);
    auto b_bcast = random_tensor({s[2]}, rng, lo_b, hi_b);
    for (const auto& [tag, b] : {std::pair{"", b_same}, std::pair{"_broadcast", b_bcast}}) {
      auto w = random_tensor(s, rng, -1, 1, false);
      out.push_back(run_check(name + tag, [&] { return probe_loss(op(a, b), w); }, {{"a", a}, {"b", b}}, tolerance));
    }
  };

  binary("add", [](const auto& a, const auto& b) { return add(a, b); }, -1, 1);
  binary("sub", [](const auto& a, const auto& b) { return sub(a, b); }, -1, 1);
  binary("mul", [](const auto& a, const auto& b) { return mul(a, b); }, -1, 1);
  binary("div", [](const auto& a, const auto& b) { return div(a, b); }, 0.5, 2.0);
  unary("add_scalar", [](const auto& x) { return add_scalar(x, 0.3); }, -1, 1);
  unary("mul_scalar", [](const auto& x) { return mul_scalar(x, -1.7); }, -1, 1);
  unary("exp", [](const auto& x) { return exp(x); }, -1, 1);
  unary("log", [](const auto& x) { return log(x); }, 0.5, 2.0);
  unary("sin", [](const auto& x) { return sin(x); }, -2, 2);
  unary("gelu", [](const auto& x) { return gelu(x); }, -2, 2);
  unary("softmax", [](const auto& x) { return softmax(x); }, -2, 2);
  unary("log_softmax", [](const auto& x) { return log_softmax(x); }, -2, 2);
  unary("layer_norm_bare", [](const auto& x) { return layer_norm(x, Tensor<D>{}, Tensor<D>{}); }, -2, 2);
  unary("sum", [](const auto& x) { return sum(x); }, -1, 1);
  unary("mean", [](const auto& x) { return mean(x); }, -1, 1);
  unary("sum_axis", [](const auto& x) { return sum_axis(x, 1); }, -1, 1);
  unary("mean_axis", [](const auto& x) { return mean_axis(x, -1, true); }, -1, 1);
  unary("l2_norm", [](const auto& x) { return l2_norm(x); }, 0.2, 1);
  unary("l2_normalize", [](const auto& x) { return l2_normalize(x); }, 0.2, 1);
  unary("transpose", [](const auto& x) { return transpose(x, 0, 2); }, -1, 1);
  unary("permute", [](const auto& x) { return permute(x, {1, 2, 0}); }, -1, 1);
  unary("reshape", [](const auto& x) { return reshape(x, {x.numel()}); }, -1, 1);
  unary("slice", [](const auto& x) { return slice(x, 2, x.shape()[2] / 2, x.shape()[2] - x.shape()[2] / 2); }, -1, 1);
  unary("concat", [](const auto& x) { return concat<D>({x, mul_scalar(x, 2.0)}, 1); }, -1, 1);
  {
    auto x = random_tensor(random_shape(rng), rng);
    const Shape s = x.shape();
    auto gamma = random_tensor({s[2]}, rng, 0.5, 1.5);
    auto beta = random_tensor({s[2]}, rng);
    auto w = random_tensor(s, rng, -1, 1, false);
    out.push_back(run_check("layer_norm", [&] { return probe_loss(layer_norm(x, gamma, beta), w); },
                            {{"x", x}, {"gamma", gamma}, {"beta", beta}}, tolerance));
  }
  {
    const Shape s = random_shape(rng);
    const std::size_t n = 1 + rng.uniform_index(8);
    auto a = random_tensor(s, rng);
    auto b2 = random_tensor({s[2], n}, rng);
    auto b3 = random_tensor({s[0], s[2], n}, rng);
    auto w = random_tensor({s[0], s[1], n}, rng, -1, 1, false);
    out.push_back(run_check("matmul", [&] { return probe_loss(matmul(a, b2), w); }, {{"a", a}, {"b", b2}}, tolerance));
    out.push_back(
        run_check("matmul_batched", [&] { return probe_loss(matmul(a, b3), w); }, {{"a", a}, {"b", b3}}, tolerance));
  }
  {
    const std::size_t rows = 2 + rng.uniform_index(7), width = 1 + rng.uniform_index(8);
    auto table = random_tensor({rows, width}, rng);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < 2 * rows; ++i) idx.push_back(rng.uniform_index(rows));
    auto w = random_tensor({idx.size(), width}, rng, -1, 1, false);
    out.push_back(
        run_check("index_rows", [&] { return probe_loss(index_rows(table, idx), w); }, {{"table", table}}, tolerance));
    auto src = random_tensor({idx.size(), width}, rng);
    auto ws = random_tensor({rows, width}, rng, -1, 1, false);
    out.push_back(run_check("scatter_rows", [&] { return probe_loss(scatter_rows(src, idx, rows), ws); },
                            {{"src", src}}, tolerance));
  }
  {
    auto x = random_tensor(random_shape(rng), rng);
    const std::size_t rows = x.numel() / x.shape()[2];
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < rows; ++i) idx.push_back(rng.uniform_index(x.shape()[2]));
    auto w = random_tensor({x.shape()[0], x.shape()[1]}, rng, -1, 1, false);
    out.push_back(
        run_check("take_lastdim", [&] { return probe_loss(take_lastdim(x, idx), w); }, {{"x", x}}, tolerance));
  }
  {
    const std::size_t b = 1 + rng.uniform_index(2), h = 1 + rng.uniform_index(4), c = 1 + rng.uniform_index(3);
    auto x = random_tensor({b, h, h + 1, c}, rng);
    auto w = random_tensor({b, 2 * h + 1, 3 * h, c}, rng, -1, 1, false);
    out.push_back(run_check("upsample_bilinear",
                            [&] { return probe_loss(upsample_bilinear(x, 2 * h + 1, 3 * h), w); }, {{"x", x}},
                            tolerance));
  }
  return out;
}

std::vector<StructureCheck> composite_gradchecks(std::uint64_t seed, double tolerance) {
  Rng rng(seed);
  std::vector<StructureCheck> out;
  {
    const ViTConfig cfg{16, 8, 3, 2, 16, 2, 2.0};
    auto vit = ViTParams<D>::init(cfg, rng);
    auto images = random_tensor({2, 16, 16, 3}, rng, 0, 1, false);
    auto w = random_tensor({2, cfg.num_patches() + 1, cfg.dim}, rng, -1, 1, false);
    out.push_back(run_check("tiny_vit", [&] { return probe_loss(encode_images(images, vit).tokens, w); },
                            vit.params("vit"), tolerance, 24, seed));
  }
  for (auto variant : {LossVariant::PixelL2, LossVariant::PixelPlusFeature, LossVariant::FeatureOnly,
                       LossVariant::FeaturePlusConCls, LossVariant::FeaturePlusConPatch}) {
    auto cfg = tiny_structure_config();
    cfg.mode.variant = variant;
    auto model = McfModel<D>::init(cfg, rng);
    auto images = random_tensor({3, 8, 8, 3}, rng, 0, 1, false);
    auto [mb, mo] = draw_masks(rng, 3, cfg);
    out.push_back(run_check("total_loss_" + std::string(to_string(variant)),
                            [&] { return total_loss<D>(images, mb, mo, model).total; }, model.trainable(), tolerance,
                            12, seed));
  }
  return out;
}

}  // namespace mcf
