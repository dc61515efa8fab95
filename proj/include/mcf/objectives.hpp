// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0
//
// The MCF model and its losses. The student encoder sees one masked view;
// its tokens are decoded to a pseudo image by a small trainable decoder and
// scored through a frozen network M1 against M1's features of the original
// image. A second masked view feeds the EMA teacher for InfoNCE on the
// class token (or the mean patch token).

#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "mcf/masking.hpp"

namespace mcf {

enum class LossVariant { PixelL2, PixelPlusFeature, FeatureOnly, FeaturePlusConCls, FeaturePlusConPatch };

std::string_view to_string(LossVariant v);
/// Accepts the names produced by to_string; the error lists them.
LossVariant parse_loss_variant(std::string_view name);

struct LossMode {
  LossVariant variant = LossVariant::FeaturePlusConCls;
  double mim_weight = 1.0;
  double con_weight = 1.0;

  void validate() const;
  bool uses_pixel() const;
  bool uses_feature() const;
  bool uses_contrastive() const;
};

struct DecoderConfig {
  std::size_t depth = 2;
  std::size_t dim = 512;
  std::size_t heads = 16;
  double mlp_ratio = 4.0;
};

struct McfConfig {
  ViTConfig encoder;
  ViTConfig m1;
  DecoderConfig decoder;
  LossMode mode;
  double mask_ratio = 0.75;
  std::optional<std::size_t> keep_count_override;
  double temperature = 0.2;
  double momentum = 0.996;
  std::size_t head_hidden = 256;
  std::size_t head_dim = 256;
  /// Score only the masked patches' feature tokens (needs equal patch grids).
  bool mim_masked_only = false;

  void validate() const;
};

template <std::floating_point T>
struct Decoder {
  Linear<T> embed;       // encoder width -> decoder width
  Tensor<T> mask_token;  // [Dd]
  Tensor<T> pos_embed;   // [1 + N, Dd]
  std::vector<BlockParams<T>> blocks;
  LayerNorm<T> norm;
  Linear<T> to_pixels;   // Dd -> patch_size^2 * channels
  std::size_t heads = 1;

  static Decoder init(const DecoderConfig& cfg, const ViTConfig& encoder, Rng& rng);
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

template <std::floating_point T>
struct McfModel {
  McfConfig cfg;
  ViTParams<T> student;
  ViTParams<T> teacher;
  ViTParams<T> m1;
  Decoder<T> decoder;
  MlpHead<T> student_head;
  MlpHead<T> student_projector;
  MlpHead<T> teacher_head;

  /// Random student, decoder, heads and M1; teacher starts as a copy of
  /// the student. M1 and the teacher never require grad.
  static McfModel init(const McfConfig& cfg, Rng& rng);
  /// Replaces M1 with a frozen copy of `params`.
  void set_m1(const ViTParams<T>& params);

  /// Parameters updated by the optimizer.
  ParamList<T> trainable() const;
  /// Teacher encoder and head, aligned entry by entry with ema_source().
  ParamList<T> teacher_params() const;
  ParamList<T> ema_source() const;
  ParamList<T> m1_params() const;
};

/// Student forward on the kept tokens of each image, final norm applied.
template <std::floating_point T>
TokenSequence<T> student_encode(const Tensor<T>& images, std::span<const MaskSpec> masks, const McfModel<T>& model);

/// Decoder path from the student's normed kept tokens (any order) to a
/// pseudo image [B, H, W, C] on the encoder's grid.
template <std::floating_point T>
Tensor<T> decode(const TokenSequence<T>& encoded, std::span<const MaskSpec> masks, const McfModel<T>& model);

/// Patch tokens of M1's final block after its final norm, [B, N1, D1].
template <std::floating_point T>
Tensor<T> m1_features(const Tensor<T>& images, const McfModel<T>& model);

/// Feature-map loss between M1(pseudo) and M1(images); the target side
/// carries no gradient.
template <std::floating_point T>
Tensor<T> mim_loss_from(const Tensor<T>& pseudo, const Tensor<T>& images, std::span<const MaskSpec> masks,
                        const McfModel<T>& model);

/// Mean squared pixel error over the masked patches.
template <std::floating_point T>
Tensor<T> pixel_loss_from(const Tensor<T>& pseudo, const Tensor<T>& images, std::span<const MaskSpec> masks,
                          const ViTConfig& encoder);

template <std::floating_point T>
Tensor<T> mim_loss(const Tensor<T>& images, std::span<const MaskSpec> masks, const McfModel<T>& model);
template <std::floating_point T>
Tensor<T> pixel_loss(const Tensor<T>& images, std::span<const MaskSpec> masks, const McfModel<T>& model);

/// Batch mean of -log softmax(q k^T / tau) on the diagonal. q and k are
/// [N, D] rows; row i of k is the positive for row i of q.
template <std::floating_point T>
Tensor<T> info_nce(const Tensor<T>& q, const Tensor<T>& k, double tau);

enum class Pooling { Cls, MeanPatch };

/// Unit-norm queries from the student's normed encoding.
template <std::floating_point T>
Tensor<T> student_queries(const TokenSequence<T>& normed, const McfModel<T>& model, Pooling pool);
/// Unit-norm teacher keys for the second view, computed without gradient.
template <std::floating_point T>
Tensor<T> teacher_keys(const Tensor<T>& images, std::span<const MaskSpec> masks_o, const McfModel<T>& model,
                       Pooling pool);

template <std::floating_point T>
Tensor<T> contrastive_loss(const Tensor<T>& images, std::span<const MaskSpec> masks_b,
                           std::span<const MaskSpec> masks_o, const McfModel<T>& model, double tau,
                           Pooling pool = Pooling::Cls);

/// Two-view form: queries from `view_b`, keys from `view_o`.
template <std::floating_point T>
Tensor<T> contrastive_loss(const Tensor<T>& view_b, const Tensor<T>& view_o, std::span<const MaskSpec> masks_b,
                           std::span<const MaskSpec> masks_o, const McfModel<T>& model, double tau,
                           Pooling pool = Pooling::Cls);

template <std::floating_point T>
Tensor<T> contrastive_loss_patch(const Tensor<T>& images, std::span<const MaskSpec> masks_b,
                                 std::span<const MaskSpec> masks_o, const McfModel<T>& model, double tau) {
  return contrastive_loss(images, masks_b, masks_o, model, tau, Pooling::MeanPatch);
}

/// teacher <- m * teacher + (1 - m) * student, outside the graph.
template <std::floating_point T>
void ema_update(const ParamList<T>& teacher, const ParamList<T>& student, double momentum);

template <std::floating_point T>
struct LossBreakdown {
  Tensor<T> total;
  Tensor<T> mim;    // undefined when the mode has no feature term
  Tensor<T> pixel;  // undefined when the mode has no pixel term
  Tensor<T> con;    // undefined when the mode has no contrastive term
};

/// Draws M_b then M_o for each image in order from `rng`.
std::pair<std::vector<MaskSpec>, std::vector<MaskSpec>> draw_masks(Rng& rng, std::size_t batch,
                                                                   const McfConfig& cfg);

template <std::floating_point T>
LossBreakdown<T> total_loss(const Tensor<T>& images, std::span<const MaskSpec> masks_b,
                            std::span<const MaskSpec> masks_o, const McfModel<T>& model);

/// Two-view form: the student branch (and the reconstruction targets) use
/// `view_b`, the teacher keys come from `view_o`.
template <std::floating_point T>
LossBreakdown<T> total_loss(const Tensor<T>& view_b, const Tensor<T>& view_o, std::span<const MaskSpec> masks_b,
                            std::span<const MaskSpec> masks_o, const McfModel<T>& model);

template <std::floating_point T>
LossBreakdown<T> total_loss(const Tensor<T>& images, const McfModel<T>& model, Rng& rng) {
  auto [mb, mo] = draw_masks(rng, images.shape().at(0), model.cfg);
  return total_loss(images, mb, mo, model);
}

struct StructureCheck {
  std::string name;
  std::string description;
  double value = 0.0;
  double threshold = 0.0;
  bool passed = false;
};

struct GradientStructureReport {
  std::vector<StructureCheck> checks;
  bool passed() const;
};

/// Checks on a tiny 64-bit model: (a) encoder gradients through the frozen
/// suffix agree with finite differences, (b) swapping the frozen suffix for a
/// different network changes them, (c) branch gradients add up.
GradientStructureReport verify_gradient_structure(const McfConfig& cfg, std::uint64_t seed = 0);

/// A tiny configuration suitable for verify_gradient_structure.
McfConfig tiny_structure_config();

/// Finite-difference checks of every primitive on random 64-bit inputs.
std::vector<StructureCheck> primitive_gradchecks(std::uint64_t seed = 0, double tolerance = 1e-4);

/// Finite-difference checks of a tiny ViT and of total_loss in every mode.
std::vector<StructureCheck> composite_gradchecks(std::uint64_t seed = 0, double tolerance = 1e-4);

}  // namespace mcf
