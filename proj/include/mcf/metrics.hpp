// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Parsing and landmark metrics. All results are percentages.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mcf/facedata.hpp"

namespace mcf {

struct F1Result {
  /// Empty for a class absent from both prediction and truth.
  std::vector<std::optional<double>> per_class;
  /// Mean over present foreground classes (class 0 is background).
  double mean_foreground = 0.0;
  std::vector<std::size_t> excluded;
};

/// F1 = 2 TP / (2 TP + FP + FN) per class.
F1Result f1_scores(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth, std::size_t classes);

enum class NmeNorm { Diag, Box, Ioc };

/// Ground-truth box diagonal, sqrt(box width * box height), or the distance
/// between the two eye landmarks. Boxes are the landmarks' bounding box
/// unless `box` (x0, y0, x1, y1) is given.
double nme_normalizer(std::span<const Point> truth, NmeNorm norm,
                      std::optional<std::array<double, 4>> box = std::nullopt, std::size_t left_eye = 0,
                      std::size_t right_eye = 1);

/// 100 * mean_i |pred_i - truth_i| / normalizer.
double nme(std::span<const Point> pred, std::span<const Point> truth, double normalizer);

struct FrAuc {
  double fr = 0.0;
  double auc = 0.0;
};

/// Failure rate above `threshold` and the area under the cumulative error
/// distribution on [0, threshold] (trapezoidal, normalized to 100).
FrAuc fr_auc(std::span<const double> nmes, double threshold);

/// Expected (x, y) under softmax(heatmap / temperature) over an h x w grid.
Point soft_argmax(std::span<const double> heatmap, std::size_t h, std::size_t w, double temperature = 1.0);

}  // namespace mcf
