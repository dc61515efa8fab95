// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcf/vit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mcf {

void ViTConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("ViTConfig: " + msg); };
  if (image_size == 0) fail("image_size must be positive");
  if (patch_size == 0) fail("patch_size must be positive");
  if (image_size % patch_size != 0) {
    fail("image_size " + std::to_string(image_size) + " not divisible by patch_size " + std::to_string(patch_size));
  }
  if (channels == 0) fail("channels must be positive");
  if (dim == 0) fail("dim must be positive");
  if (heads == 0) fail("heads must be positive");
  if (dim % heads != 0) fail("dim " + std::to_string(dim) + " not divisible by heads " + std::to_string(heads));
  if (!(mlp_ratio > 0)) fail("mlp_ratio must be positive");
}

std::size_t ViTConfig::mlp_hidden() const {
  return static_cast<std::size_t>(std::lround(static_cast<double>(dim) * mlp_ratio));
}

std::size_t parameter_count(const ViTConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.dim;
  const std::size_t h = cfg.mlp_hidden();
  const std::size_t per_block = 2 * d + (d * 3 * d + 3 * d) + (d * d + d) + 2 * d + (d * h + h) + (h * d + d);
  return cfg.patch_dim() * d + d + d + (cfg.num_patches() + 1) * d + cfg.depth * per_block + 2 * d;
}

template <std::floating_point T>
Tensor<T> TokenSequence<T>::cls() const {
  return reshape(slice(tokens, 1, 0, 1), {batch(), width()});
}

template <std::floating_point T>
Tensor<T> TokenSequence<T>::patch_tokens() const {
  return slice(tokens, 1, 1, count());
}

template <std::floating_point T>
BlockParams<T> BlockParams<T>::init(std::size_t dim, std::size_t hidden, Rng& rng) {
  BlockParams b;
  b.norm1 = LayerNorm<T>::init(dim);
  b.qkv = Linear<T>::init(dim, 3 * dim, rng);
  b.proj = Linear<T>::init(dim, dim, rng);
  b.norm2 = LayerNorm<T>::init(dim);
  b.fc1 = Linear<T>::init(dim, hidden, rng);
  b.fc2 = Linear<T>::init(hidden, dim, rng);
  return b;
}

template <std::floating_point T>
void BlockParams<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  norm1.collect(prefix + ".norm1", out);
  qkv.collect(prefix + ".qkv", out);
  proj.collect(prefix + ".proj", out);
  norm2.collect(prefix + ".norm2", out);
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

template <std::floating_point T>
Tensor<T> block_forward(const BlockParams<T>& block, const Tensor<T>& x, std::size_t heads) {
  if (x.ndim() != 3) throw ShapeError("block_forward: expects [B, S, D], got " + to_string(x.shape()));
  const std::size_t b = x.shape()[0], s = x.shape()[1], d = x.shape()[2];
  if (d % heads != 0) throw ShapeError("block_forward: width not divisible by heads");
  const std::size_t dh = d / heads;

  auto qkv = block.qkv(block.norm1(x));                              // [B, S, 3D]
  qkv = permute(reshape(qkv, {b, s, 3, heads, dh}), {2, 0, 3, 1, 4});  // [3, B, H, S, dh]
  auto q = reshape(slice(qkv, 0, 0, 1), {b, heads, s, dh});
  auto k = reshape(slice(qkv, 0, 1, 1), {b, heads, s, dh});
  auto v = reshape(slice(qkv, 0, 2, 1), {b, heads, s, dh});
  auto scores = mul_scalar(matmul(q, transpose(k, -1, -2)), T(1) / std::sqrt(T(dh)));
  auto attended = matmul(softmax(scores), v);                            // [B, H, S, dh]
  attended = reshape(permute(attended, {0, 2, 1, 3}), {b, s, d});
  auto h = add(x, block.proj(attended));
  return add(h, block.fc2(gelu(block.fc1(block.norm2(h)))));
}

template <std::floating_point T>
ViTParams<T> ViTParams<T>::init(const ViTConfig& cfg, Rng& rng) {
  cfg.validate();
  ViTParams p;
  p.cfg = cfg;
  p.patch_embed = Linear<T>::init(cfg.patch_dim(), cfg.dim, rng);
  p.cls_token = trunc_normal<T>({cfg.dim}, rng);
  p.cls_token.set_requires_grad(true);
  p.pos_embed = trunc_normal<T>({cfg.num_patches() + 1, cfg.dim}, rng);
  p.pos_embed.set_requires_grad(true);
  for (std::size_t i = 0; i < cfg.depth; ++i) p.blocks.push_back(BlockParams<T>::init(cfg.dim, cfg.mlp_hidden(), rng));
  p.norm = LayerNorm<T>::init(cfg.dim);
  return p;
}

template <std::floating_point T>
ParamList<T> ViTParams<T>::params(const std::string& prefix) const {
  ParamList<T> out;
  patch_embed.collect(prefix + ".patch_embed", out);
  out.push_back({prefix + ".cls_token", cls_token, false});
  out.push_back({prefix + ".pos_embed", pos_embed, false});
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + ".blocks." + std::to_string(i), out);
  norm.collect(prefix + ".norm", out);
  return out;
}

template <std::floating_point T>
ViTParams<T> ViTParams<T>::clone() const {
  ViTParams copy = *this;
  auto fresh = [](Tensor<T>& t) { t = t.clone(); };
  fresh(copy.patch_embed.weight);
  fresh(copy.patch_embed.bias);
  fresh(copy.cls_token);
  fresh(copy.pos_embed);
  for (auto& blk : copy.blocks) {
    for (auto* t : {&blk.norm1.gamma, &blk.norm1.beta, &blk.qkv.weight, &blk.qkv.bias, &blk.proj.weight,
                    &blk.proj.bias, &blk.norm2.gamma, &blk.norm2.beta, &blk.fc1.weight, &blk.fc1.bias,
                    &blk.fc2.weight, &blk.fc2.bias}) {
      fresh(*t);
    }
  }
  fresh(copy.norm.gamma);
  fresh(copy.norm.beta);
  return copy;
}

template <std::floating_point T>
Patches<T> patchify(const Tensor<T>& images, const ViTConfig& cfg) {
  cfg.validate();
  const auto& s = images.shape();
  if (s.size() != 4 || s[1] != cfg.image_size || s[2] != cfg.image_size || s[3] != cfg.channels) {
    throw ShapeError("patchify: images " + to_string(s) + " do not match [B, " + std::to_string(cfg.image_size) +
                     ", " + std::to_string(cfg.image_size) + ", " + std::to_string(cfg.channels) + "]");
  }
  const std::size_t b = s[0], g = cfg.grid(), p = cfg.patch_size, c = cfg.channels;
  auto x = reshape(images, {b, g, p, g, p, c});
  x = permute(x, {0, 1, 3, 2, 4, 5});
  Patches<T> out;
  out.values = reshape(x, {b, g * g, cfg.patch_dim()});
  out.positions.resize(b * g * g);
  for (std::size_t i = 0; i < out.positions.size(); ++i) out.positions[i] = i % (g * g);
  return out;
}

template <std::floating_point T>
Tensor<T> unpatchify(const Patches<T>& patches, const ViTConfig& cfg) {
  cfg.validate();
  const auto& s = patches.values.shape();
  const std::size_t n = cfg.num_patches();
  if (s.size() != 3 || s[1] != n || s[2] != cfg.patch_dim()) {
    throw ShapeError("unpatchify: patches " + to_string(s) + " do not match grid of " + std::to_string(n) +
                     " patches of " + std::to_string(cfg.patch_dim()) + " values");
  }
  const std::size_t b = s[0];
  if (patches.positions.size() != b * n) {
    throw std::invalid_argument("unpatchify: expected " + std::to_string(b * n) + " positions, got " +
                                std::to_string(patches.positions.size()));
  }
  std::vector<std::size_t> source(b * n, n);
  bool ordered = true;
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t pos = patches.positions[bi * n + j];
      if (pos >= n) throw std::invalid_argument("unpatchify: position " + std::to_string(pos) + " out of range");
      if (source[bi * n + pos] != n) {
        throw std::invalid_argument("unpatchify: duplicate position " + std::to_string(pos));
      }
      source[bi * n + pos] = bi * n + j;
      ordered = ordered && pos == j;
    }
  }
  Tensor<T> values = patches.values;
  if (!ordered) {
    values = reshape(index_rows(reshape(values, {b * n, s[2]}), source), {b, n, s[2]});
  }
  const std::size_t g = cfg.grid(), p = cfg.patch_size, c = cfg.channels;
  auto x = reshape(values, {b, g, g, p, p, c});
  x = permute(x, {0, 1, 3, 2, 4, 5});
  return reshape(x, {b, cfg.image_size, cfg.image_size, c});
}

template <std::floating_point T>
TokenSequence<T> embed(const Patches<T>& patches, const ViTParams<T>& params) {
  const auto& s = patches.values.shape();
  if (s.size() != 3 || s[2] != params.cfg.patch_dim()) {
    throw ShapeError("embed: patches " + to_string(s) + " vs patch_dim " + std::to_string(params.cfg.patch_dim()));
  }
  const std::size_t b = s[0], n = s[1], d = params.cfg.dim;
  if (patches.positions.size() != b * n) throw std::invalid_argument("embed: positions do not match patch rows");
  std::vector<std::size_t> rows(b * n);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (patches.positions[i] >= params.cfg.num_patches()) throw std::invalid_argument("embed: position out of range");
    rows[i] = patches.positions[i] + 1;
  }
  auto x = add(params.patch_embed(patches.values), reshape(index_rows(params.pos_embed, rows), {b, n, d}));
  const std::size_t cls_row[] = {0};
  auto cls = add(reshape(params.cls_token, {1, d}), index_rows(params.pos_embed, cls_row));
  auto cls_b = add(Tensor<T>::zeros({b, 1, d}), reshape(cls, {1, 1, d}));
  return {concat<T>({cls_b, x}, 1), patches.positions};
}

template <std::floating_point T>
Encoded<T> encode(const TokenSequence<T>& tokens, const ViTParams<T>& params, std::span<const std::size_t> taps) {
  const std::size_t depth = params.blocks.size();
  for (auto t : taps) {
    if (t < 1 || t > depth) {
      throw std::out_of_range("encode: tap " + std::to_string(t) + " outside 1.." + std::to_string(depth));
    }
  }
  std::vector<Tensor<T>> states(depth + 1);
  Tensor<T> x = tokens.tokens;
  for (std::size_t i = 0; i < depth; ++i) {
    x = block_forward(params.blocks[i], x, params.cfg.heads);
    states[i + 1] = x;
  }
  Encoded<T> out{{x, tokens.positions}, {}};
  for (auto t : taps) out.taps.push_back({states[t], tokens.positions});
  return out;
}

template <std::floating_point T>
TokenSequence<T> final_norm(const TokenSequence<T>& tokens, const ViTParams<T>& params) {
  return {params.norm(tokens.tokens), tokens.positions};
}

template <std::floating_point T>
TokenSequence<T> encode_images(const Tensor<T>& images, const ViTParams<T>& params) {
  return final_norm(encode(embed(patchify(images, params.cfg), params), params).last, params);
}

#define MCF_INSTANTIATE_VIT(T)                                                                          \
  template struct TokenSequence<T>;                                                                     \
  template struct BlockParams<T>;                                                                       \
  template struct ViTParams<T>;                                                                         \
  template Tensor<T> block_forward<T>(const BlockParams<T>&, const Tensor<T>&, std::size_t);            \
  template Patches<T> patchify<T>(const Tensor<T>&, const ViTConfig&);                                  \
  template Tensor<T> unpatchify<T>(const Patches<T>&, const ViTConfig&);                                \
  template TokenSequence<T> embed<T>(const Patches<T>&, const ViTParams<T>&);                           \
  template Encoded<T> encode<T>(const TokenSequence<T>&, const ViTParams<T>&, std::span<const std::size_t>); \
  template TokenSequence<T> final_norm<T>(const TokenSequence<T>&, const ViTParams<T>&);                \
  template TokenSequence<T> encode_images<T>(const Tensor<T>&, const ViTParams<T>&);

MCF_INSTANTIATE_VIT(float)
MCF_INSTANTIATE_VIT(double)

}  // namespace mcf
