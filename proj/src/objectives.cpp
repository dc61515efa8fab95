// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcf/objectives.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mcf {

namespace {

constexpr std::array<std::pair<LossVariant, std::string_view>, 5> kVariantNames{{
    {LossVariant::PixelL2, "pixel_l2"},
    {LossVariant::PixelPlusFeature, "pixel_plus_feature"},
    {LossVariant::FeatureOnly, "feature_only"},
    {LossVariant::FeaturePlusConCls, "feature_con_cls"},
    {LossVariant::FeaturePlusConPatch, "feature_con_patch"},
}};

template <std::floating_point T>
MlpHead<T> clone_head(const MlpHead<T>& h) {
  return {{h.fc1.weight.clone(), h.fc1.bias.clone()}, {h.fc2.weight.clone(), h.fc2.bias.clone()}};
}

template <std::floating_point T>
void check_images(const Tensor<T>& images, const ViTConfig& cfg, const char* who) {
  const auto& s = images.shape();
  if (s.size() != 4 || s[1] != cfg.image_size || s[2] != cfg.image_size || s[3] != cfg.channels) {
    throw ShapeError(std::string(who) + ": images " + to_string(s) + " do not match [B, " +
                     std::to_string(cfg.image_size) + ", " + std::to_string(cfg.image_size) + ", " +
                     std::to_string(cfg.channels) + "]");
  }
}

template <std::floating_point T>
Tensor<T> pool_tokens(const TokenSequence<T>& normed, Pooling pool) {
  return pool == Pooling::Cls ? normed.cls() : mean_axis(normed.patch_tokens(), 1);
}

}  // namespace

std::string_view to_string(LossVariant v) {
  for (const auto& [variant, name] : kVariantNames) {
    if (variant == v) return name;
  }
  throw std::invalid_argument("unknown loss variant");
}

LossVariant parse_loss_variant(std::string_view name) {
  std::string options;
  for (const auto& [variant, n] : kVariantNames) {
    if (n == name) return variant;
    options += options.empty() ? "" : ", ";
    options += n;
  }
  throw std::invalid_argument("unknown loss mode '" + std::string(name) + "' (valid: " + options + ")");
}

void LossMode::validate() const {
  if (!(mim_weight >= 0) || !(con_weight >= 0)) throw std::invalid_argument("loss weights must be non-negative");
}

bool LossMode::uses_pixel() const {
  return variant == LossVariant::PixelL2 || variant == LossVariant::PixelPlusFeature;
}

bool LossMode::uses_feature() const { return variant != LossVariant::PixelL2; }

bool LossMode::uses_contrastive() const {
  return variant == LossVariant::FeaturePlusConCls || variant == LossVariant::FeaturePlusConPatch;
}

void McfConfig::validate() const {
  encoder.validate();
  mode.validate();
  if (mode.uses_feature()) {
    m1.validate();
    if (m1.image_size != encoder.image_size || m1.channels != encoder.channels) {
      throw std::invalid_argument("McfConfig: pseudo images are " + std::to_string(encoder.image_size) + "px x " +
                                  std::to_string(encoder.channels) + " channels but M1 expects " +
                                  std::to_string(m1.image_size) + "px x " + std::to_string(m1.channels));
    }
    if (mim_masked_only && m1.grid() != encoder.grid()) {
      throw std::invalid_argument("McfConfig: mim_masked_only needs M1 and the encoder on the same patch grid");
    }
  }
  if (decoder.dim == 0 || decoder.heads == 0 || decoder.dim % decoder.heads != 0) {
    throw std::invalid_argument("McfConfig: decoder dim must be a positive multiple of decoder heads");
  }
  if (!(decoder.mlp_ratio > 0)) throw std::invalid_argument("McfConfig: decoder mlp_ratio must be positive");
  if (!(mask_ratio >= 0 && mask_ratio < 1)) throw std::invalid_argument("McfConfig: mask_ratio must lie in [0, 1)");
  if (keep_count_override && (*keep_count_override < 1 || *keep_count_override > encoder.num_patches())) {
    throw std::invalid_argument("McfConfig: keep_count_override outside 1.." + std::to_string(encoder.num_patches()));
  }
  if (!(temperature > 0)) throw std::invalid_argument("McfConfig: temperature must be positive");
  if (!(momentum >= 0 && momentum <= 1)) throw std::invalid_argument("McfConfig: momentum must lie in [0, 1]");
  if (head_hidden == 0 || head_dim == 0) throw std::invalid_argument("McfConfig: head widths must be positive");
}

template <std::floating_point T>
Decoder<T> Decoder<T>::init(const DecoderConfig& cfg, const ViTConfig& encoder, Rng& rng) {
  Decoder d;
  d.heads = cfg.heads;
  d.embed = Linear<T>::init(encoder.dim, cfg.dim, rng);
  d.mask_token = trunc_normal<T>({cfg.dim}, rng);
  d.mask_token.set_requires_grad(true);
  d.pos_embed = trunc_normal<T>({encoder.num_patches() + 1, cfg.dim}, rng);
  d.pos_embed.set_requires_grad(true);
  const auto hidden = static_cast<std::size_t>(std::lround(static_cast<double>(cfg.dim) * cfg.mlp_ratio));
  for (std::size_t i = 0; i < cfg.depth; ++i) d.blocks.push_back(BlockParams<T>::init(cfg.dim, hidden, rng));
  d.norm = LayerNorm<T>::init(cfg.dim);
  d.to_pixels = Linear<T>::init(cfg.dim, encoder.patch_dim(), rng);
  return d;
}

template <std::floating_point T>
void Decoder<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  embed.collect(prefix + ".embed", out);
  out.push_back({prefix + ".mask_token", mask_token, false});
  out.push_back({prefix + ".pos_embed", pos_embed, false});
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + ".blocks." + std::to_string(i), out);
  norm.collect(prefix + ".norm", out);
  to_pixels.collect(prefix + ".to_pixels", out);
}

template <std::floating_point T>
McfModel<T> McfModel<T>::init(const McfConfig& cfg, Rng& rng) {
  cfg.validate();
  McfModel m;
  m.cfg = cfg;
  m.student = ViTParams<T>::init(cfg.encoder, rng);
  m.decoder = Decoder<T>::init(cfg.decoder, cfg.encoder, rng);
  m.student_head = MlpHead<T>::init(cfg.encoder.dim, cfg.head_hidden, cfg.head_dim, rng);
  m.student_projector = MlpHead<T>::init(cfg.head_dim, cfg.head_hidden, cfg.head_dim, rng);
  m.set_m1(ViTParams<T>::init(cfg.m1, rng));
  m.teacher = m.student.clone();
  m.teacher_head = clone_head(m.student_head);
  set_requires_grad(m.teacher_params(), false);
  return m;
}

template <std::floating_point T>
void McfModel<T>::set_m1(const ViTParams<T>& params) {
  if (params.cfg.image_size != cfg.m1.image_size || params.cfg.channels != cfg.m1.channels) {
    throw std::invalid_argument("set_m1: M1 input geometry differs from the configured one");
  }
  m1 = params.clone();
  cfg.m1 = params.cfg;
  set_requires_grad(m1_params(), false);
}

template <std::floating_point T>
ParamList<T> McfModel<T>::trainable() const {
  ParamList<T> out = student.params("student");
  decoder.collect("decoder", out);
  student_head.collect("student_head", out);
  student_projector.collect("student_projector", out);
  return out;
}

template <std::floating_point T>
ParamList<T> McfModel<T>::teacher_params() const {
  ParamList<T> out = teacher.params("teacher");
  teacher_head.collect("teacher_head", out);
  return out;
}

template <std::floating_point T>
ParamList<T> McfModel<T>::ema_source() const {
  ParamList<T> out = student.params("student");
  student_head.collect("student_head", out);
  return out;
}

template <std::floating_point T>
ParamList<T> McfModel<T>::m1_params() const {
  return m1.params("m1");
}

template <std::floating_point T>
TokenSequence<T> student_encode(const Tensor<T>& images, std::span<const MaskSpec> masks, const McfModel<T>& model) {
  check_images(images, model.cfg.encoder, "student_encode");
  auto tokens = embed(patchify(images, model.cfg.encoder), model.student);
  return final_norm(encode(select_kept(tokens, masks), model.student).last, model.student);
}

template <std::floating_point T>
Tensor<T> decode(const TokenSequence<T>& encoded, std::span<const MaskSpec> masks, const McfModel<T>& model) {
  const auto& dec = model.decoder;
  TokenSequence<T> x{dec.embed(encoded.tokens), encoded.positions};
  auto full = reinsert_masked(x, masks, dec.mask_token, dec.pos_embed);
  Tensor<T> h = full.tokens;
  for (const auto& blk : dec.blocks) h = block_forward(blk, h, dec.heads);
  const std::size_t n = full.count();
  auto pixels = dec.to_pixels(slice(dec.norm(h), 1, 1, n));
  return unpatchify(Patches<T>{pixels, std::move(full.positions)}, model.cfg.encoder);
}

template <std::floating_point T>
Tensor<T> m1_features(const Tensor<T>& images, const McfModel<T>& model) {
  check_images(images, model.m1.cfg, "m1_features");
  return encode_images(images, model.m1).patch_tokens();
}

template <std::floating_point T>
Tensor<T> mim_loss_from(const Tensor<T>& pseudo, const Tensor<T>& images, std::span<const MaskSpec> masks,
                        const McfModel<T>& model) {
  if (pseudo.shape() != images.shape()) {
    throw ShapeError("mim_loss: pseudo image " + to_string(pseudo.shape()) + " vs image " +
                     to_string(images.shape()));
  }
  check_images(pseudo, model.m1.cfg, "mim_loss");
  Tensor<T> target;
  {
    NoGradGuard no_grad;
    target = m1_features(images, model);
  }
  auto predicted = m1_features(pseudo, model);
  if (!model.cfg.mim_masked_only) return mse(predicted, target);

  const std::size_t b = target.shape()[0], n = target.shape()[1], d = target.shape()[2];
  if (masks.size() != b || masks.front().total != n) {
    throw std::invalid_argument("mim_loss: masked-only scoring needs one mask per image on M1's grid");
  }
  std::vector<std::size_t> rows;
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (auto p : masks[bi].masked) rows.push_back(bi * n + p);
  }
  if (rows.empty()) throw std::invalid_argument("mim_loss: masked-only scoring with no masked patches");
  return mse(index_rows(reshape(predicted, {b * n, d}), rows), index_rows(reshape(target, {b * n, d}), rows));
}

template <std::floating_point T>
Tensor<T> pixel_loss_from(const Tensor<T>& pseudo, const Tensor<T>& images, std::span<const MaskSpec> masks,
                          const ViTConfig& encoder) {
  if (pseudo.shape() != images.shape()) {
    throw ShapeError("pixel_loss: pseudo image " + to_string(pseudo.shape()) + " vs image " +
                     to_string(images.shape()));
  }
  auto pred = patchify(pseudo, encoder).values;
  auto truth = patchify(images, encoder).values;
  const std::size_t b = pred.shape()[0], n = pred.shape()[1], p = pred.shape()[2];
  if (masks.size() != b) throw std::invalid_argument("pixel_loss: mask count differs from batch");
  std::vector<std::size_t> rows;
  for (std::size_t bi = 0; bi < b; ++bi) {
    if (masks[bi].total != n) throw std::invalid_argument("pixel_loss: mask total differs from patch count");
    for (auto m : masks[bi].masked) rows.push_back(bi * n + m);
  }
  if (rows.empty()) throw std::invalid_argument("pixel_loss: no masked patches to score");
  return mse(index_rows(reshape(pred, {b * n, p}), rows), index_rows(reshape(truth, {b * n, p}), rows));
}

template <std::floating_point T>
Tensor<T> mim_loss(const Tensor<T>& images, std::span<const MaskSpec> masks, const McfModel<T>& model) {
  return mim_loss_from(decode(student_encode(images, masks, model), masks, model), images, masks, model);
}

template <std::floating_point T>
Tensor<T> pixel_loss(const Tensor<T>& images, std::span<const MaskSpec> masks, const McfModel<T>& model) {
  return pixel_loss_from(decode(student_encode(images, masks, model), masks, model), images, masks,
                         model.cfg.encoder);
}

template <std::floating_point T>
Tensor<T> info_nce(const Tensor<T>& q, const Tensor<T>& k, double tau) {
  if (!(tau > 0)) throw std::invalid_argument("info_nce: temperature must be positive");
  if (q.ndim() != 2 || q.shape() != k.shape()) {
    throw ShapeError("info_nce: queries " + to_string(q.shape()) + " and keys " + to_string(k.shape()) +
                     " must both be [N, D]");
  }
  const std::size_t n = q.shape()[0];
  auto logits = mul_scalar(matmul(q, transpose(k, 0, 1)), static_cast<T>(1.0 / tau));
  std::vector<std::size_t> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = i;
  return mul_scalar(mean(take_lastdim(log_softmax(logits), diag)), T(-1));
}

template <std::floating_point T>
Tensor<T> student_queries(const TokenSequence<T>& normed, const McfModel<T>& model, Pooling pool) {
  return l2_normalize(model.student_projector(model.student_head(pool_tokens(normed, pool))));
}

template <std::floating_point T>
Tensor<T> teacher_keys(const Tensor<T>& images, std::span<const MaskSpec> masks_o, const McfModel<T>& model,
                       Pooling pool) {
  NoGradGuard no_grad;
  check_images(images, model.teacher.cfg, "teacher_keys");
  auto tokens = embed(patchify(images, model.teacher.cfg), model.teacher);
  auto normed = final_norm(encode(select_kept(tokens, masks_o), model.teacher).last, model.teacher);
  return l2_normalize(model.teacher_head(pool_tokens(normed, pool)));
}

template <std::floating_point T>
Tensor<T> contrastive_loss(const Tensor<T>& images, std::span<const MaskSpec> masks_b,
                           std::span<const MaskSpec> masks_o, const McfModel<T>& model, double tau, Pooling pool) {
  return contrastive_loss(images, images, masks_b, masks_o, model, tau, pool);
}

template <std::floating_point T>
Tensor<T> contrastive_loss(const Tensor<T>& view_b, const Tensor<T>& view_o, std::span<const MaskSpec> masks_b,
                           std::span<const MaskSpec> masks_o, const McfModel<T>& model, double tau, Pooling pool) {
  if (!(tau > 0)) throw std::invalid_argument("contrastive_loss: temperature must be positive");
  auto q = student_queries(student_encode(view_b, masks_b, model), model, pool);
  return info_nce(q, teacher_keys(view_o, masks_o, model, pool), tau);
}

template <std::floating_point T>
void ema_update(const ParamList<T>& teacher, const ParamList<T>& student, double momentum) {
  if (!(momentum >= 0 && momentum <= 1)) throw std::invalid_argument("ema_update: momentum must lie in [0, 1]");
  if (teacher.size() != student.size()) throw ShapeError("ema_update: parameter lists differ in length");
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    if (teacher[i].tensor.shape() != student[i].tensor.shape()) {
      throw ShapeError("ema_update: " + teacher[i].name + " " + to_string(teacher[i].tensor.shape()) + " vs " +
                       student[i].name + " " + to_string(student[i].tensor.shape()));
    }
  }
  const T m = static_cast<T>(momentum);
  const T s = static_cast<T>(1.0 - momentum);
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    auto dst = teacher[i].tensor;
    auto out = dst.data();
    auto src = student[i].tensor.data();
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = m * out[j] + s * src[j];
  }
}

std::pair<std::vector<MaskSpec>, std::vector<MaskSpec>> draw_masks(Rng& rng, std::size_t batch,
                                                                   const McfConfig& cfg) {
  std::pair<std::vector<MaskSpec>, std::vector<MaskSpec>> out;
  const std::size_t n = cfg.encoder.num_patches();
  for (std::size_t i = 0; i < batch; ++i) {
    out.first.push_back(generate_mask(rng, n, cfg.mask_ratio, cfg.keep_count_override));
    out.second.push_back(generate_mask(rng, n, cfg.mask_ratio, cfg.keep_count_override));
  }
  return out;
}

template <std::floating_point T>
LossBreakdown<T> total_loss(const Tensor<T>& images, std::span<const MaskSpec> masks_b,
                            std::span<const MaskSpec> masks_o, const McfModel<T>& model) {
  return total_loss(images, images, masks_b, masks_o, model);
}

template <std::floating_point T>
LossBreakdown<T> total_loss(const Tensor<T>& images, const Tensor<T>& view_o, std::span<const MaskSpec> masks_b,
                            std::span<const MaskSpec> masks_o, const McfModel<T>& model) {
  if (view_o.shape() != images.shape()) {
    throw ShapeError("total_loss: views differ in shape, " + to_string(images.shape()) + " vs " +
                     to_string(view_o.shape()));
  }
  const auto& mode = model.cfg.mode;
  mode.validate();
  const std::size_t b = images.shape().at(0);
  if (masks_b.size() != b) throw std::invalid_argument("total_loss: need one M_b mask per image");
  if (mode.uses_contrastive() && masks_o.size() != b) {
    throw std::invalid_argument("total_loss: contrastive mode needs one M_o mask per image");
  }
  LossBreakdown<T> out;
  auto normed = student_encode(images, masks_b, model);
  auto pseudo = decode(normed, masks_b, model);
  if (mode.uses_pixel()) out.pixel = pixel_loss_from(pseudo, images, masks_b, model.cfg.encoder);
  if (mode.uses_feature()) out.mim = mim_loss_from(pseudo, images, masks_b, model);
  if (mode.uses_contrastive()) {
    const auto pool = mode.variant == LossVariant::FeaturePlusConPatch ? Pooling::MeanPatch : Pooling::Cls;
    out.con = info_nce(student_queries(normed, model, pool), teacher_keys(view_o, masks_o, model, pool),
                       model.cfg.temperature);
  }
  switch (mode.variant) {
    case LossVariant::PixelL2:
      out.total = out.pixel;
      break;
    case LossVariant::PixelPlusFeature:
      out.total = add(out.pixel, out.mim);
      break;
    case LossVariant::FeatureOnly:
      out.total = out.mim;
      break;
    case LossVariant::FeaturePlusConCls:
    case LossVariant::FeaturePlusConPatch:
      out.total = add(mul_scalar(out.mim, static_cast<T>(mode.mim_weight)),
                      mul_scalar(out.con, static_cast<T>(mode.con_weight)));
      break;
  }
  return out;
}

#define MCF_INSTANTIATE_OBJECTIVES(T)                                                                          \
  template struct Decoder<T>;                                                                                  \
  template struct McfModel<T>;                                                                                 \
  template TokenSequence<T> student_encode<T>(const Tensor<T>&, std::span<const MaskSpec>, const McfModel<T>&); \
  template Tensor<T> decode<T>(const TokenSequence<T>&, std::span<const MaskSpec>, const McfModel<T>&);        \
  template Tensor<T> m1_features<T>(const Tensor<T>&, const McfModel<T>&);                                     \
  template Tensor<T> mim_loss_from<T>(const Tensor<T>&, const Tensor<T>&, std::span<const MaskSpec>,           \
                                      const McfModel<T>&);                                                     \
  template Tensor<T> pixel_loss_from<T>(const Tensor<T>&, const Tensor<T>&, std::span<const MaskSpec>,         \
                                        const ViTConfig&);                                                     \
  template Tensor<T> mim_loss<T>(const Tensor<T>&, std::span<const MaskSpec>, const McfModel<T>&);             \
  template Tensor<T> pixel_loss<T>(const Tensor<T>&, std::span<const MaskSpec>, const McfModel<T>&);           \
  template Tensor<T> info_nce<T>(const Tensor<T>&, const Tensor<T>&, double);                                  \
  template Tensor<T> student_queries<T>(const TokenSequence<T>&, const McfModel<T>&, Pooling);                 \
  template Tensor<T> teacher_keys<T>(const Tensor<T>&, std::span<const MaskSpec>, const McfModel<T>&, Pooling); \
  template Tensor<T> contrastive_loss<T>(const Tensor<T>&, std::span<const MaskSpec>, std::span<const MaskSpec>, \
                                         const McfModel<T>&, double, Pooling);                                 \
  template Tensor<T> contrastive_loss<T>(const Tensor<T>&, const Tensor<T>&, std::span<const MaskSpec>,         \
                                         std::span<const MaskSpec>, const McfModel<T>&, double, Pooling);      \
  template void ema_update<T>(const ParamList<T>&, const ParamList<T>&, double);                               \
  template LossBreakdown<T> total_loss<T>(const Tensor<T>&, std::span<const MaskSpec>, std::span<const MaskSpec>, \
                                          const McfModel<T>&);                                                 \
  template LossBreakdown<T> total_loss<T>(const Tensor<T>&, const Tensor<T>&, std::span<const MaskSpec>,        \
                                          std::span<const MaskSpec>, const McfModel<T>&);

MCF_INSTANTIATE_OBJECTIVES(float)
MCF_INSTANTIATE_OBJECTIVES(double)

}  // namespace mcf
