// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Photometric view augmentation for pre-training. There is deliberately no
// random resized crop: every view keeps the whole aligned face.

#pragma once

#include "mcf/rng.hpp"
#include "mcf/tensor.hpp"

namespace mcf {

struct AugmentConfig {
  bool enabled = false;
  double flip = 0.5;        // probability of a horizontal mirror
  double brightness = 0.4;  // global gain drawn from [1 - b, 1 + b]
  double contrast = 0.4;    // scale about the image mean, [1 - c, 1 + c]
  double channel = 0.2;     // independent gain per colour channel, [1 - s, 1 + s]

  void validate() const;
};

/// Independently augmented copy of every image in [B, H, W, C]; values are
/// clamped to [0, 1]. Consumes a fixed number of draws per image, so the
/// stream stays aligned across batch splits. Returns a copy when disabled.
template <std::floating_point T>
Tensor<T> augment_views(const Tensor<T>& images, const AugmentConfig& cfg, Rng& rng);

}  // namespace mcf
