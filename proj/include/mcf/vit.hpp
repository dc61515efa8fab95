// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Vision Transformer encoder: patch embedding, learned positions (with a
// dedicated slot 0 for the class token), pre-norm blocks and per-layer taps.
// Images are [B, H, W, C] tensors; patch vectors are laid out row, column,
// channel inside each patch.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mcf/nn.hpp"

namespace mcf {

struct ViTConfig {
  std::size_t image_size = 224;
  std::size_t patch_size = 16;
  std::size_t channels = 3;
  std::size_t depth = 12;
  std::size_t dim = 768;
  std::size_t heads = 12;
  double mlp_ratio = 4.0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  std::size_t mlp_hidden() const;
};

/// Raw (pre-embedding) patch vectors, [B, N, patch_dim], with the grid
/// index of each row.
template <std::floating_point T>
struct Patches {
  Tensor<T> values;
  std::vector<std::size_t> positions;  // B * N, row-major per batch item
};

/// Class token plus patch tokens, [B, 1 + N, D]; row 0 is the class token.
template <std::floating_point T>
struct TokenSequence {
  Tensor<T> tokens;
  std::vector<std::size_t> positions;  // B * N grid indices of the patch rows

  std::size_t batch() const { return tokens.shape()[0]; }
  std::size_t count() const { return tokens.shape()[1] - 1; }
  std::size_t width() const { return tokens.shape()[2]; }
  Tensor<T> cls() const;           // [B, D]
  Tensor<T> patch_tokens() const;  // [B, N, D]
};

template <std::floating_point T>
struct BlockParams {
  LayerNorm<T> norm1;
  Linear<T> qkv;
  Linear<T> proj;
  LayerNorm<T> norm2;
  Linear<T> fc1;
  Linear<T> fc2;

  static BlockParams init(std::size_t dim, std::size_t hidden, Rng& rng);
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// Pre-norm transformer block over [B, S, D].
template <std::floating_point T>
Tensor<T> block_forward(const BlockParams<T>& block, const Tensor<T>& x, std::size_t heads);

template <std::floating_point T>
struct ViTParams {
  ViTConfig cfg;
  Linear<T> patch_embed;
  Tensor<T> cls_token;  // [D]
  Tensor<T> pos_embed;  // [1 + N, D]
  std::vector<BlockParams<T>> blocks;
  LayerNorm<T> norm;

  static ViTParams init(const ViTConfig& cfg, Rng& rng);
  ParamList<T> params(const std::string& prefix) const;
  /// Independent value copy with the same requires_grad flags.
  ViTParams clone() const;
};

/// Number of scalars in a ViT with this configuration.
std::size_t parameter_count(const ViTConfig& cfg);

template <std::floating_point T>
Patches<T> patchify(const Tensor<T>& images, const ViTConfig& cfg);

/// Inverse of patchify. Positions may be in any order but must cover the
/// grid exactly once per batch item.
template <std::floating_point T>
Tensor<T> unpatchify(const Patches<T>& patches, const ViTConfig& cfg);

/// Patch embedding plus positions, prefixed by the class token.
template <std::floating_point T>
TokenSequence<T> embed(const Patches<T>& patches, const ViTParams<T>& params);

template <std::floating_point T>
struct Encoded {
  TokenSequence<T> last;               // output of the final block (pre final-norm)
  std::vector<TokenSequence<T>> taps;  // post-block states in requested order
};

/// Runs every block. `taps` are 1-based block indices.
template <std::floating_point T>
Encoded<T> encode(const TokenSequence<T>& tokens, const ViTParams<T>& params,
                  std::span<const std::size_t> taps = {});

template <std::floating_point T>
TokenSequence<T> final_norm(const TokenSequence<T>& tokens, const ViTParams<T>& params);

/// embed -> encode -> final_norm on full, unmasked images.
template <std::floating_point T>
TokenSequence<T> encode_images(const Tensor<T>& images, const ViTParams<T>& params);

}  // namespace mcf
