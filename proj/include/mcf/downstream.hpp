// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Transfer evaluation on frozen encoders: a four-level feature pyramid, a
// light dense head for parsing or heatmaps, and a linear identity probe.

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "mcf/metrics.hpp"
#include "mcf/optim.hpp"
#include "mcf/vit.hpp"

namespace mcf {

/// ceil(depth * f) for f in {1/6, 1/3, 2/3, 1}, at least 1.
std::vector<std::size_t> pyramid_taps(std::size_t depth);

template <std::floating_point T>
struct PyramidFeatures {
  std::vector<Tensor<T>> levels;  // each [B, grid, grid, D]
  std::size_t grid = 0;
};

/// Full (unmasked) forward; class token dropped; one grid per tap.
template <std::floating_point T>
PyramidFeatures<T> extract_pyramid(const Tensor<T>& images, const ViTParams<T>& encoder,
                                   std::span<const std::size_t> taps);

template <std::floating_point T>
struct DenseHead {
  std::vector<LayerNorm<T>> norms;  // per level
  std::vector<Linear<T>> lateral;   // per level, D -> width
  Linear<T> fc1;                    // width -> hidden, bilinearly upsampled
  Linear<T> subpixel;               // width -> upscale^2 * hidden, one slot per pixel of a cell
  Linear<T> fc2;                    // hidden -> classes
  std::size_t upscale = 1;

  static DenseHead init(std::size_t levels, std::size_t dim, std::size_t width, std::size_t hidden,
                        std::size_t classes, std::size_t upscale, Rng& rng);
  /// Per-level projection and sum fusion on the token grid. The hidden layer
  /// is a smooth bilinear part plus a sub-pixel part that gives each pixel of
  /// a grid cell its own weights; a pointwise layer then emits the logits.
  /// Output is [B, grid * upscale, grid * upscale, classes], resampled
  /// bilinearly when out_h x out_w differs.
  Tensor<T> operator()(const PyramidFeatures<T>& pyr, std::size_t out_h, std::size_t out_w) const;
  ParamList<T> params() const;
};

/// Soft-argmax per heatmap channel of [H, W, K] logits.
template <std::floating_point T>
std::vector<Point> decode_landmarks(const Tensor<T>& logits, double temperature = 1.0);

/// Mean per-pixel cross entropy of [B, H, W, C] logits against labels.
template <std::floating_point T>
Tensor<T> pixel_cross_entropy(const Tensor<T>& logits, std::span<const std::uint8_t> labels);

/// argmax over the class axis.
template <std::floating_point T>
std::vector<std::uint8_t> predict_labels(const Tensor<T>& logits);

/// Final-normed class tokens [N, D], computed without gradient in chunks.
template <std::floating_point T>
Tensor<T> extract_cls(const Tensor<T>& images, const ViTParams<T>& encoder, std::size_t chunk = 64);

struct ProbeConfig {
  std::size_t steps = 300;
  double lr = 0.05;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::size_t classes = 0;
};

/// Softmax regression on standardized features (statistics from the
/// training split). Labels are class indices in [0, classes).
ProbeResult linear_probe(const Tensor<double>& train_x, std::span<const int> train_y, const Tensor<double>& test_x,
                         std::span<const int> test_y, const ProbeConfig& cfg = {});

struct SegProbeConfig {
  std::size_t steps = 300;
  std::size_t batch = 8;
  std::size_t width = 64;
  std::size_t hidden = 64;
  double lr = 5e-3;
  std::uint64_t seed = 0;
};

struct SegProbeResult {
  double train_mean_f1 = 0.0;
  double test_mean_f1 = 0.0;
  double train_pixel_accuracy = 0.0;
  F1Result test_f1;
};

/// Trains a dense head on frozen pyramid features of the training images and
/// scores region F1 on both splits. Label maps are [N, H, W] flattened.
SegProbeResult segmentation_probe(const ViTParams<float>& encoder, const Tensor<float>& train_images,
                                  std::span<const std::uint8_t> train_labels, const Tensor<float>& test_images,
                                  std::span<const std::uint8_t> test_labels, std::size_t classes,
                                  const SegProbeConfig& cfg = {});

}  // namespace mcf
