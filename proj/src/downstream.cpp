// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcf/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mcf {

namespace {

template <std::floating_point T>
Tensor<T> rows_of(const Tensor<T>& x, std::span<const std::size_t> rows) {
  Shape tail(x.shape().begin() + 1, x.shape().end());
  const std::size_t per = numel(tail);
  auto flat = reshape(x, {x.shape()[0], per});
  Shape out{rows.size()};
  out.insert(out.end(), tail.begin(), tail.end());
  return reshape(index_rows(flat, rows), out);
}

template <std::floating_point T>
PyramidFeatures<T> pyramid_rows(const PyramidFeatures<T>& pyr, std::span<const std::size_t> rows) {
  PyramidFeatures<T> out;
  out.grid = pyr.grid;
  for (const auto& l : pyr.levels) out.levels.push_back(rows_of(l, rows));
  return out;
}

// Frozen pyramid over a whole image set, computed in chunks without gradient.
template <std::floating_point T>
PyramidFeatures<T> frozen_pyramid(const Tensor<T>& images, const ViTParams<T>& encoder,
                                  std::span<const std::size_t> taps, std::size_t chunk = 32) {
  NoGradGuard no_grad;
  const std::size_t n = images.shape()[0];
  std::vector<std::vector<Tensor<T>>> parts(taps.size());
  std::size_t grid = 0;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t len = std::min(chunk, n - start);
    auto pyr = extract_pyramid(slice(images, 0, start, len), encoder, taps);
    grid = pyr.grid;
    for (std::size_t l = 0; l < taps.size(); ++l) parts[l].push_back(pyr.levels[l]);
  }
  PyramidFeatures<T> out;
  out.grid = grid;
  for (auto& p : parts) out.levels.push_back(p.size() == 1 ? p.front() : concat(p, 0));
  return out;
}

}  // namespace

std::vector<std::size_t> pyramid_taps(std::size_t depth) {
  if (depth == 0) throw std::invalid_argument("pyramid_taps: encoder has no blocks");
  std::vector<std::size_t> taps;
  for (auto [num, den] : {std::pair{1, 6}, std::pair{1, 3}, std::pair{2, 3}, std::pair{1, 1}}) {
    const std::size_t t = (depth * static_cast<std::size_t>(num) + static_cast<std::size_t>(den) - 1) /
                          static_cast<std::size_t>(den);
    taps.push_back(std::max<std::size_t>(1, t));
  }
  return taps;
}

template <std::floating_point T>
PyramidFeatures<T> extract_pyramid(const Tensor<T>& images, const ViTParams<T>& encoder,
                                   std::span<const std::size_t> taps) {
  auto enc = encode(embed(patchify(images, encoder.cfg), encoder), encoder, taps);
  PyramidFeatures<T> out;
  out.grid = encoder.cfg.grid();
  const std::size_t b = images.shape()[0], g = out.grid, d = encoder.cfg.dim;
  for (const auto& t : enc.taps) out.levels.push_back(reshape(t.patch_tokens(), {b, g, g, d}));
  return out;
}

template <std::floating_point T>
DenseHead<T> DenseHead<T>::init(std::size_t levels, std::size_t dim, std::size_t width, std::size_t hidden,
                                std::size_t classes, std::size_t upscale, Rng& rng) {
  if (classes == 0) throw std::invalid_argument("DenseHead: classes must be at least 1");
  if (upscale == 0) throw std::invalid_argument("DenseHead: upscale must be at least 1");
  DenseHead h;
  h.upscale = upscale;
  for (std::size_t l = 0; l < levels; ++l) {
    h.norms.push_back(LayerNorm<T>::init(dim));
    h.lateral.push_back(Linear<T>::init(dim, width, rng, 1.0 / std::sqrt(static_cast<double>(dim))));
  }
  h.fc1 = Linear<T>::init(width, hidden, rng, 1.0 / std::sqrt(static_cast<double>(width)));
  h.subpixel = Linear<T>::init(width, upscale * upscale * hidden, rng, 1.0 / std::sqrt(static_cast<double>(width)));
  h.fc2 = Linear<T>::init(hidden, classes, rng, 1.0 / std::sqrt(static_cast<double>(hidden)));
  return h;
}

template <std::floating_point T>
Tensor<T> DenseHead<T>::operator()(const PyramidFeatures<T>& pyr, std::size_t out_h, std::size_t out_w) const {
  if (pyr.levels.size() != lateral.size()) {
    throw ShapeError("DenseHead: " + std::to_string(pyr.levels.size()) + " pyramid levels for a head built for " +
                     std::to_string(lateral.size()));
  }
  Tensor<T> fused;
  for (std::size_t l = 0; l < lateral.size(); ++l) {
    auto x = lateral[l](norms[l](pyr.levels[l]));
    fused = fused.defined() ? add(fused, x) : x;
  }
  const std::size_t b = fused.shape()[0], g = pyr.grid, side = g * upscale, hidden = fc1.bias.numel();
  auto cells = reshape(subpixel(fused), {b, g, g, upscale, upscale, hidden});
  auto sub = reshape(permute(cells, {0, 1, 3, 2, 4, 5}), {b, side, side, hidden});
  auto logits = fc2(gelu(add(upsample_bilinear(fc1(fused), side, side), sub)));
  return side == out_h && side == out_w ? logits : upsample_bilinear(logits, out_h, out_w);
}

template <std::floating_point T>
ParamList<T> DenseHead<T>::params() const {
  ParamList<T> out;
  for (std::size_t l = 0; l < lateral.size(); ++l) {
    norms[l].collect("head.norm." + std::to_string(l), out);
    lateral[l].collect("head.lateral." + std::to_string(l), out);
  }
  fc1.collect("head.fc1", out);
  subpixel.collect("head.subpixel", out);
  fc2.collect("head.fc2", out);
  return out;
}

template <std::floating_point T>
std::vector<Point> decode_landmarks(const Tensor<T>& logits, double temperature) {
  if (logits.ndim() != 3) throw ShapeError("decode_landmarks: expects [H, W, K] logits");
  const std::size_t h = logits.shape()[0], w = logits.shape()[1], k = logits.shape()[2];
  std::vector<Point> out;
  std::vector<double> channel(h * w);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < h * w; ++i) channel[i] = static_cast<double>(logits.data()[i * k + c]);
    out.push_back(soft_argmax(channel, h, w, temperature));
  }
  return out;
}

template <std::floating_point T>
Tensor<T> pixel_cross_entropy(const Tensor<T>& logits, std::span<const std::uint8_t> labels) {
  const std::size_t classes = logits.shape().back();
  if (logits.numel() / classes != labels.size()) {
    throw ShapeError("pixel_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     to_string(logits.shape()));
  }
  std::vector<std::size_t> idx(labels.begin(), labels.end());
  for (auto i : idx) {
    if (i >= classes) throw std::invalid_argument("pixel_cross_entropy: label out of range");
  }
  return mul_scalar(mean(take_lastdim(log_softmax(logits), idx)), T(-1));
}

template <std::floating_point T>
std::vector<std::uint8_t> predict_labels(const Tensor<T>& logits) {
  const std::size_t classes = logits.shape().back(), n = logits.numel() / classes;
  std::vector<std::uint8_t> out(n);
  const auto d = logits.data();
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = d.subspan(i * classes, classes);
    out[i] = static_cast<std::uint8_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

template <std::floating_point T>
Tensor<T> extract_cls(const Tensor<T>& images, const ViTParams<T>& encoder, std::size_t chunk) {
  NoGradGuard no_grad;
  const std::size_t n = images.shape()[0], d = encoder.cfg.dim;
  auto out = Tensor<T>::zeros({n, d});
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t len = std::min(chunk, n - start);
    const auto cls = encode_images(slice(images, 0, start, len), encoder).cls();
    std::copy(cls.data().begin(), cls.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(start * d));
  }
  return out;
}

ProbeResult linear_probe(const Tensor<double>& train_x, std::span<const int> train_y, const Tensor<double>& test_x,
                         std::span<const int> test_y, const ProbeConfig& cfg) {
  if (train_x.ndim() != 2 || test_x.ndim() != 2 || train_x.shape()[1] != test_x.shape()[1]) {
    throw ShapeError("linear_probe: features must be [N, D] with matching D");
  }
  if (train_y.size() != train_x.shape()[0] || test_y.size() != test_x.shape()[0]) {
    throw std::invalid_argument("linear_probe: label counts differ from feature rows");
  }
  if (train_y.empty()) throw std::invalid_argument("linear_probe: empty training split");
  int max_label = 0;
  for (int y : train_y) {
    if (y < 0) throw std::invalid_argument("linear_probe: negative label");
    max_label = std::max(max_label, y);
  }
  for (int y : test_y) max_label = std::max(max_label, y);
  const std::size_t classes = static_cast<std::size_t>(max_label) + 1;
  const std::size_t n = train_x.shape()[0], d = train_x.shape()[1];

  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) mu[j] += train_x[i * d + j] / static_cast<double>(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) sd[j] += std::pow(train_x[i * d + j] - mu[j], 2) / static_cast<double>(n);
  }
  for (auto& s : sd) s = std::sqrt(s) + 1e-8;
  auto standardize = [&](const Tensor<double>& x) {
    auto out = x.detach();
    for (std::size_t i = 0; i < x.shape()[0]; ++i) {
      for (std::size_t j = 0; j < d; ++j) out.data()[i * d + j] = (x[i * d + j] - mu[j]) / sd[j];
    }
    return out;
  };
  const auto xs = standardize(train_x), xt = standardize(test_x);

  EnableGradGuard grad;
  Linear<double> clf{Tensor<double>::zeros({d, classes}), Tensor<double>::zeros({classes})};
  clf.weight.set_requires_grad(true);
  clf.bias.set_requires_grad(true);
  ParamList<double> params;
  clf.collect("probe", params);
  AdamW<double> opt(params, {0.9, 0.999, 1e-8, cfg.weight_decay});
  std::vector<std::size_t> idx(train_y.begin(), train_y.end());
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    Graph<double>::local().clear();
    zero_grad(params);
    backward(mul_scalar(mean(take_lastdim(log_softmax(clf(xs)), idx)), -1.0));
    opt.step(cfg.lr);
  }
  auto accuracy = [&](const Tensor<double>& x, std::span<const int> y) {
    if (y.empty()) return 0.0;
    NoGradGuard no_grad;
    const auto pred = predict_labels(clf(x));
    std::size_t hit = 0;
    for (std::size_t i = 0; i < y.size(); ++i) hit += pred[i] == static_cast<std::uint8_t>(y[i]);
    return 100.0 * static_cast<double>(hit) / static_cast<double>(y.size());
  };
  return {accuracy(xs, train_y), accuracy(xt, test_y), classes};
}

SegProbeResult segmentation_probe(const ViTParams<float>& encoder, const Tensor<float>& train_images,
                                  std::span<const std::uint8_t> train_labels, const Tensor<float>& test_images,
                                  std::span<const std::uint8_t> test_labels, std::size_t classes,
                                  const SegProbeConfig& cfg) {
  const std::size_t n = train_images.shape()[0], h = train_images.shape()[1], w = train_images.shape()[2];
  if (train_labels.size() != n * h * w || test_labels.size() != test_images.shape()[0] * h * w) {
    throw ShapeError("segmentation_probe: label maps do not match the images");
  }
  const auto taps = pyramid_taps(encoder.cfg.depth);
  const auto train_pyr = frozen_pyramid(train_images, encoder, taps);
  EnableGradGuard grad;
  Rng rng(cfg.seed);
  auto head = DenseHead<float>::init(taps.size(), encoder.cfg.dim, cfg.width, cfg.hidden, classes,
                                     std::max<std::size_t>(1, h / encoder.cfg.grid()), rng);
  const auto params = head.params();
  AdamW<float> opt(params, {0.9, 0.999, 1e-8, 0.0});
  const std::size_t batch = std::min(cfg.batch, n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::size_t cursor = n;
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    std::vector<std::size_t> rows(batch);
    std::vector<std::uint8_t> labels(batch * h * w);
    for (std::size_t k = 0; k < batch; ++k) {
      if (cursor == n) {
        rng.shuffle(order.begin(), order.end());
        cursor = 0;
      }
      rows[k] = order[cursor++];
      std::copy_n(train_labels.begin() + static_cast<std::ptrdiff_t>(rows[k] * h * w), h * w,
                  labels.begin() + static_cast<std::ptrdiff_t>(k * h * w));
    }
    Graph<float>::local().clear();
    zero_grad(params);
    backward(pixel_cross_entropy(head(pyramid_rows(train_pyr, rows), h, w), labels));
    // Cosine decay keeps late steps from undoing the fit.
    opt.step(cfg.lr * 0.5 * (1 + std::cos(3.141592653589793 * static_cast<double>(s) / static_cast<double>(cfg.steps))));
  }

  auto predict_all = [&](const PyramidFeatures<float>& pyr, std::size_t count) {
    NoGradGuard no_grad;
    std::vector<std::uint8_t> out;
    for (std::size_t start = 0; start < count; start += 32) {
      std::vector<std::size_t> rows;
      for (std::size_t i = start; i < std::min(count, start + 32); ++i) rows.push_back(i);
      const auto pred = predict_labels(head(pyramid_rows(pyr, rows), h, w));
      out.insert(out.end(), pred.begin(), pred.end());
    }
    return out;
  };
  SegProbeResult r;
  const auto train_pred = predict_all(train_pyr, n);
  r.train_mean_f1 = f1_scores(train_pred, train_labels, classes).mean_foreground;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < train_pred.size(); ++i) hit += train_pred[i] == train_labels[i];
  r.train_pixel_accuracy = 100.0 * static_cast<double>(hit) / static_cast<double>(train_pred.size());
  if (test_images.shape()[0] > 0) {
    const auto test_pred = predict_all(frozen_pyramid(test_images, encoder, taps), test_images.shape()[0]);
    r.test_f1 = f1_scores(test_pred, test_labels, classes);
    r.test_mean_f1 = r.test_f1.mean_foreground;
  }
  return r;
}

#define MCF_INSTANTIATE_DOWNSTREAM(T)                                                                        \
  template PyramidFeatures<T> extract_pyramid<T>(const Tensor<T>&, const ViTParams<T>&,                      \
                                                 std::span<const std::size_t>);                              \
  template struct DenseHead<T>;                                                                              \
  template std::vector<Point> decode_landmarks<T>(const Tensor<T>&, double);                                 \
  template Tensor<T> pixel_cross_entropy<T>(const Tensor<T>&, std::span<const std::uint8_t>);                \
  template std::vector<std::uint8_t> predict_labels<T>(const Tensor<T>&);                                    \
  template Tensor<T> extract_cls<T>(const Tensor<T>&, const ViTParams<T>&, std::size_t);

MCF_INSTANTIATE_DOWNSTREAM(float)
MCF_INSTANTIATE_DOWNSTREAM(double)

}  // namespace mcf
