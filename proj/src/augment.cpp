// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcf/augment.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace mcf {

void AugmentConfig::validate() const {
  if (!(flip >= 0 && flip <= 1)) throw std::invalid_argument("augment.flip must lie in [0, 1]");
  for (double v : {brightness, contrast, channel}) {
    if (!(v >= 0 && v < 1)) throw std::invalid_argument("augment strengths must lie in [0, 1)");
  }
}

template <std::floating_point T>
Tensor<T> augment_views(const Tensor<T>& images, const AugmentConfig& cfg, Rng& rng) {
  if (images.ndim() != 4) throw ShapeError("augment_views: expects [B, H, W, C], got " + to_string(images.shape()));
  auto out = images.detach();
  if (!cfg.enabled) return out;
  cfg.validate();
  const std::size_t b = images.shape()[0], h = images.shape()[1], w = images.shape()[2], c = images.shape()[3];
  const std::size_t per = h * w * c;
  const auto src = images.data();
  auto dst = out.data();
  std::vector<double> gain(c);
  for (std::size_t n = 0; n < b; ++n) {
    const bool mirror = rng.uniform() < cfg.flip;
    const double bright = rng.uniform(1 - cfg.brightness, 1 + cfg.brightness);
    const double contrast = rng.uniform(1 - cfg.contrast, 1 + cfg.contrast);
    for (auto& g : gain) g = rng.uniform(1 - cfg.channel, 1 + cfg.channel);
    const auto img = src.subspan(n * per, per);
    double mean = 0;
    for (T v : img) mean += static_cast<double>(v);
    mean /= static_cast<double>(per);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t sx = mirror ? w - 1 - x : x;
        for (std::size_t k = 0; k < c; ++k) {
          const double v = static_cast<double>(img[(y * w + sx) * c + k]);
          const double a = (mean + (v - mean) * contrast) * bright * gain[k];
          dst[n * per + (y * w + x) * c + k] = static_cast<T>(std::clamp(a, 0.0, 1.0));
        }
      }
    }
  }
  return out;
}

template Tensor<float> augment_views<float>(const Tensor<float>&, const AugmentConfig&, Rng&);
template Tensor<double> augment_views<double>(const Tensor<double>&, const AugmentConfig&, Rng&);

}  // namespace mcf
