// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Random patch masks and the drop/reinsert bookkeeping around the encoder.

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "mcf/vit.hpp"

namespace mcf {

struct MaskSpec {
  std::size_t total = 0;
  std::vector<std::size_t> kept;    // sorted
  std::vector<std::size_t> masked;  // sorted
  double ratio = 0.0;

  /// Builds a spec from an explicit kept set (any order, no duplicates).
  static MaskSpec from_kept(std::size_t total, std::vector<std::size_t> kept, double ratio = -1.0);
};

/// round(total * (1 - ratio)), never below one so the encoder sees a patch.
std::size_t keep_count(std::size_t total, double ratio);

/// Uniform random subset of size keep_count (or `keep_override` when set).
MaskSpec generate_mask(Rng& rng, std::size_t total, double ratio,
                       std::optional<std::size_t> keep_override = std::nullopt);

/// Restricts each batch item's patch tokens to its mask's kept positions,
/// in ascending position order. All masks must keep the same count.
template <std::floating_point T>
TokenSequence<T> select_kept(const TokenSequence<T>& tokens, std::span<const MaskSpec> masks);

/// Full-length sequence in grid order: kept slots carry encoded + pos,
/// masked slots mask_token + pos, and the class slot cls + pos[0].
template <std::floating_point T>
TokenSequence<T> reinsert_masked(const TokenSequence<T>& encoded, std::span<const MaskSpec> masks,
                                 const Tensor<T>& mask_token, const Tensor<T>& pos_table);

}  // namespace mcf
