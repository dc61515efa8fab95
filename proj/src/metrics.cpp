// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mcf {

F1Result f1_scores(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth, std::size_t classes) {
  if (pred.size() != truth.size()) {
    throw std::invalid_argument("f1_scores: " + std::to_string(pred.size()) + " predictions vs " +
                                std::to_string(truth.size()) + " labels");
  }
  std::vector<std::size_t> tp(classes), fp(classes), fn(classes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= classes || truth[i] >= classes) throw std::invalid_argument("f1_scores: label out of range");
    if (pred[i] == truth[i]) {
      ++tp[pred[i]];
    } else {
      ++fp[pred[i]];
      ++fn[truth[i]];
    }
  }
  F1Result r;
  r.per_class.resize(classes);
  double total = 0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    const double denom = 2.0 * static_cast<double>(tp[c]) + static_cast<double>(fp[c] + fn[c]);
    if (denom == 0) {
      r.excluded.push_back(c);
      continue;
    }
    r.per_class[c] = 100.0 * 2.0 * static_cast<double>(tp[c]) / denom;
    if (c > 0) {
      total += *r.per_class[c];
      ++counted;
    }
  }
  r.mean_foreground = counted ? total / static_cast<double>(counted) : 0.0;
  return r;
}

double nme_normalizer(std::span<const Point> truth, NmeNorm norm, std::optional<std::array<double, 4>> box,
                      std::size_t left_eye, std::size_t right_eye) {
  if (truth.empty()) throw std::invalid_argument("nme_normalizer: no landmarks");
  if (norm == NmeNorm::Ioc) {
    if (left_eye >= truth.size() || right_eye >= truth.size()) {
      throw std::invalid_argument("nme_normalizer: eye index out of range");
    }
    return std::hypot(truth[left_eye].x - truth[right_eye].x, truth[left_eye].y - truth[right_eye].y);
  }
  std::array<double, 4> b;
  if (box) {
    b = *box;
  } else {
    b = {truth[0].x, truth[0].y, truth[0].x, truth[0].y};
    for (const auto& p : truth) b = {std::min(b[0], p.x), std::min(b[1], p.y), std::max(b[2], p.x), std::max(b[3], p.y)};
  }
  const double w = b[2] - b[0], h = b[3] - b[1];
  return norm == NmeNorm::Diag ? std::hypot(w, h) : std::sqrt(std::max(0.0, w * h));
}

double nme(std::span<const Point> pred, std::span<const Point> truth, double normalizer) {
  if (pred.size() != truth.size() || pred.empty()) {
    throw std::invalid_argument("nme: landmark counts differ or are zero");
  }
  if (!(normalizer > 0)) throw std::invalid_argument("nme: normalizer must be positive");
  double total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += std::hypot(pred[i].x - truth[i].x, pred[i].y - truth[i].y);
  return 100.0 * total / (static_cast<double>(pred.size()) * normalizer);
}

FrAuc fr_auc(std::span<const double> nmes, double threshold) {
  if (nmes.empty()) throw std::invalid_argument("fr_auc: no samples");
  if (!(threshold > 0)) throw std::invalid_argument("fr_auc: threshold must be positive");
  std::vector<double> e(nmes.begin(), nmes.end());
  std::sort(e.begin(), e.end());
  const double n = static_cast<double>(e.size());
  FrAuc r;
  r.fr = 100.0 * static_cast<double>(std::count_if(e.begin(), e.end(), [&](double v) { return v > threshold; })) / n;
  // Piecewise-linear CED through (0, 0), (e_k, k / n) for e_k <= threshold, then flat to the threshold.
  double area = 0, x = 0, y = 0;
  for (std::size_t k = 0; k < e.size() && e[k] <= threshold; ++k) {
    const double yk = static_cast<double>(k + 1) / n;
    area += (e[k] - x) * (y + yk) / 2;
    x = e[k];
    y = yk;
  }
  area += (threshold - x) * y;
  r.auc = 100.0 * area / threshold;
  return r;
}

Point soft_argmax(std::span<const double> heatmap, std::size_t h, std::size_t w, double temperature) {
  if (heatmap.size() != h * w || heatmap.empty()) throw std::invalid_argument("soft_argmax: heatmap size mismatch");
  if (!(temperature > 0)) throw std::invalid_argument("soft_argmax: temperature must be positive");
  const double mx = *std::max_element(heatmap.begin(), heatmap.end());
  double z = 0, sx = 0, sy = 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double p = std::exp((heatmap[y * w + x] - mx) / temperature);
      z += p;
      sx += p * static_cast<double>(x);
      sy += p * static_cast<double>(y);
    }
  }
  return {sx / z, sy / z};
}

}  // namespace mcf
