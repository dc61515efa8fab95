// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mcf/objectives.hpp"
#include "mcf/ops.hpp"
#include "mcf/optim.hpp"
#include "test_util.hpp"

namespace mcf {
namespace {

using test::random_tensor;

// ---------------------------------------------------------------------------
// Loop-based reference forward pass, written against the parameter tensors
// only. Shares no code with the library beyond reading values.

struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

Mat linear(const Mat& x, const Linear<double>& l) {
  const std::size_t in = l.in_features(), out = l.out_features();
  Mat y(x.rows, out);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      double s = l.bias[o];
      for (std::size_t i = 0; i < in; ++i) s += x(r, i) * l.weight[i * out + o];
      y(r, o) = s;
    }
  }
  return y;
}

Mat layer_norm_ref(const Mat& x, const LayerNorm<double>& n) {
  Mat y(x.rows, x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    double mu = 0, var = 0;
    for (std::size_t c = 0; c < x.cols; ++c) mu += x(r, c);
    mu /= double(x.cols);
    for (std::size_t c = 0; c < x.cols; ++c) var += (x(r, c) - mu) * (x(r, c) - mu);
    var /= double(x.cols);
    for (std::size_t c = 0; c < x.cols; ++c) {
      y(r, c) = (x(r, c) - mu) / std::sqrt(var + 1e-6) * n.gamma[c] + n.beta[c];
    }
  }
  return y;
}

Mat block_ref(const Mat& x, const BlockParams<double>& blk, std::size_t heads) {
  const std::size_t s = x.rows, d = x.cols, dh = d / heads;
  Mat qkv = linear(layer_norm_ref(x, blk.norm1), blk.qkv);
  Mat att(s, d);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < s; ++i) {
      std::vector<double> w(s);
      double mx = -1e300;
      for (std::size_t j = 0; j < s; ++j) {
        double dot = 0;
        for (std::size_t c = 0; c < dh; ++c) dot += qkv(i, h * dh + c) * qkv(j, d + h * dh + c);
        w[j] = dot / std::sqrt(double(dh));
        mx = std::max(mx, w[j]);
      }
      double z = 0;
      for (auto& e : w) z += (e = std::exp(e - mx));
      for (std::size_t c = 0; c < dh; ++c) {
        double acc = 0;
        for (std::size_t j = 0; j < s; ++j) acc += w[j] / z * qkv(j, 2 * d + h * dh + c);
        att(i, h * dh + c) = acc;
      }
    }
  }
  Mat p = linear(att, blk.proj);
  Mat h(s, d);
  for (std::size_t i = 0; i < h.v.size(); ++i) h.v[i] = x.v[i] + p.v[i];
  Mat f = linear(layer_norm_ref(h, blk.norm2), blk.fc1);
  for (auto& e : f.v) e = 0.5 * e * (1.0 + std::erf(e / std::sqrt(2.0)));
  Mat g = linear(f, blk.fc2);
  for (std::size_t i = 0; i < h.v.size(); ++i) h.v[i] += g.v[i];
  return h;
}

// Patch vectors of image `b`, row-major over the grid, (row, col, channel) inside.
Mat patches_ref(const Tensor<double>& images, std::size_t b, const ViTConfig& cfg) {
  const std::size_t g = cfg.grid(), p = cfg.patch_size, c = cfg.channels, s = cfg.image_size;
  Mat out(g * g, p * p * c);
  for (std::size_t gy = 0; gy < g; ++gy) {
    for (std::size_t gx = 0; gx < g; ++gx) {
      std::size_t k = 0;
      for (std::size_t y = 0; y < p; ++y) {
        for (std::size_t x = 0; x < p; ++x) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            out(gy * g + gx, k++) = images[((b * s + gy * p + y) * s + gx * p + x) * c + ch];
          }
        }
      }
    }
  }
  return out;
}

// Embeds the patches listed in `rows` (grid indices), runs the blocks and
// the final norm; row 0 of the result is the class token.
Mat vit_ref(const Mat& patches, const std::vector<std::size_t>& rows, const ViTParams<double>& vp) {
  const std::size_t d = vp.cfg.dim;
  Mat sel(rows.size(), patches.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < patches.cols; ++c) sel(i, c) = patches(rows[i], c);
  }
  Mat emb = linear(sel, vp.patch_embed);
  Mat x(1 + rows.size(), d);
  for (std::size_t c = 0; c < d; ++c) x(0, c) = vp.cls_token[c] + vp.pos_embed[c];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < d; ++c) x(1 + i, c) = emb(i, c) + vp.pos_embed[(1 + rows[i]) * d + c];
  }
  for (const auto& blk : vp.blocks) x = block_ref(x, blk, vp.cfg.heads);
  return layer_norm_ref(x, vp.norm);
}

double mim_loss_ref(const Tensor<double>& images, const std::vector<MaskSpec>& masks, const McfModel<double>& m) {
  const auto& ec = m.cfg.encoder;
  const std::size_t n = ec.num_patches(), s = ec.image_size, c = ec.channels, p = ec.patch_size, g = ec.grid();
  const std::size_t batch = images.shape()[0];
  auto pseudo = Tensor<double>::zeros(images.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& kept = masks[b].kept;
    Mat enc = vit_ref(patches_ref(images, b, ec), kept, m.student);
    Mat emb = linear(enc, m.decoder.embed);
    const std::size_t dd = emb.cols;
    Mat full(1 + n, dd);
    for (std::size_t k = 0; k < dd; ++k) full(0, k) = emb(0, k) + m.decoder.pos_embed[k];
    for (std::size_t pos = 0; pos < n; ++pos) {
      for (std::size_t k = 0; k < dd; ++k) full(1 + pos, k) = m.decoder.mask_token[k];
    }
    for (std::size_t i = 0; i < kept.size(); ++i) {
      for (std::size_t k = 0; k < dd; ++k) full(1 + kept[i], k) = emb(1 + i, k);
    }
    for (std::size_t pos = 0; pos < n; ++pos) {
      for (std::size_t k = 0; k < dd; ++k) full(1 + pos, k) += m.decoder.pos_embed[(1 + pos) * dd + k];
    }
    for (const auto& blk : m.decoder.blocks) full = block_ref(full, blk, m.decoder.heads);
    Mat normed = layer_norm_ref(full, m.decoder.norm);
    Mat body(n, dd);
    for (std::size_t pos = 0; pos < n; ++pos) {
      for (std::size_t k = 0; k < dd; ++k) body(pos, k) = normed(1 + pos, k);
    }
    Mat px = linear(body, m.decoder.to_pixels);
    for (std::size_t pos = 0; pos < n; ++pos) {
      std::size_t k = 0;
      for (std::size_t y = 0; y < p; ++y) {
        for (std::size_t x = 0; x < p; ++x) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            pseudo.data()[((b * s + (pos / g) * p + y) * s + (pos % g) * p + x) * c + ch] = px(pos, k++);
          }
        }
      }
    }
  }
  std::vector<std::size_t> all(m.cfg.m1.num_patches());
  std::iota(all.begin(), all.end(), std::size_t{0});
  double acc = 0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    Mat f_t = vit_ref(patches_ref(pseudo, b, m.cfg.m1), all, m.m1);
    Mat f_o = vit_ref(patches_ref(images, b, m.cfg.m1), all, m.m1);
    for (std::size_t r = 1; r < f_t.rows; ++r) {
      for (std::size_t k = 0; k < f_t.cols; ++k) {
        const double diff = f_t(r, k) - f_o(r, k);
        acc += diff * diff;
        ++count;
      }
    }
  }
  return acc / double(count);
}

// ---------------------------------------------------------------------------

class Objectives : public ::testing::Test {
 protected:
  void TearDown() override {
    Graph<double>::local().clear();
    Graph<float>::local().clear();
  }

  McfModel<double> model(LossVariant v = LossVariant::FeaturePlusConCls, std::uint64_t seed = 0) {
    auto cfg = tiny_structure_config();
    cfg.mode.variant = v;
    Rng rng(seed);
    return McfModel<double>::init(cfg, rng);
  }
};

TEST_F(Objectives, MimLossMatchesLoopReference) {
  auto cfg = tiny_structure_config();
  cfg.encoder.depth = 2;
  cfg.decoder.depth = 2;
  Rng rng(1);
  auto m = McfModel<double>::init(cfg, rng);
  auto images = random_tensor<double>({2, 8, 8, 3}, rng, 0, 1);
  auto [mb, mo] = draw_masks(rng, 2, cfg);
  const double lib = mim_loss<double>(images, mb, m).item();
  const double ref = mim_loss_ref(images, mb, m);
  EXPECT_GT(ref, 0.0);
  EXPECT_NEAR(lib, ref, 1e-12 * std::max(1.0, ref));
}

TEST_F(Objectives, PerfectPseudoImageGivesZeroMimLoss) {
  auto m = model();
  Rng rng(2);
  auto images = random_tensor<double>({2, 8, 8, 3}, rng, 0, 1);
  auto [mb, mo] = draw_masks(rng, 2, m.cfg);
  EXPECT_NEAR(mim_loss_from<double>(images.clone(), images, mb, m).item(), 0.0, 1e-9);
}

TEST_F(Objectives, SquaredErrorIsQuadraticInTheDifference) {
  Rng rng(3);
  auto a = random_tensor<double>({2, 4, 8}, rng);
  auto b = random_tensor<double>({2, 4, 8}, rng);
  auto doubled = add(a, mul_scalar(sub(b, a), 2.0));
  EXPECT_NEAR(mse(doubled, a).item(), 4.0 * mse(b, a).item(), 1e-12);
}

TEST_F(Objectives, PseudoImageSizeMismatchIsRejected) {
  auto m = model();
  auto images = Tensor<double>::zeros({1, 8, 8, 3});
  Rng rng(4);
  auto [mb, mo] = draw_masks(rng, 1, m.cfg);
  EXPECT_THROW(mim_loss_from<double>(Tensor<double>::zeros({1, 4, 4, 3}), images, mb, m), ShapeError);
  auto cfg = tiny_structure_config();
  cfg.m1.image_size = 16;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST_F(Objectives, PixelLossIdentities) {
  const ViTConfig enc = tiny_structure_config().encoder;
  std::vector<MaskSpec> masks{MaskSpec::from_kept(4, {0, 3})};
  auto ones = Tensor<double>::ones({1, 8, 8, 3});
  EXPECT_EQ(pixel_loss_from<double>(ones.clone(), ones, masks, enc).item(), 0.0);
  EXPECT_DOUBLE_EQ(pixel_loss_from<double>(Tensor<double>::zeros({1, 8, 8, 3}), ones, masks, enc).item(), 1.0);
  std::vector<MaskSpec> none{MaskSpec::from_kept(4, {0, 1, 2, 3})};
  EXPECT_THROW(pixel_loss_from<double>(ones, ones, none, enc), std::invalid_argument);
}

TEST_F(Objectives, PixelLossMatchesMaskedBruteForce) {
  const ViTConfig enc = tiny_structure_config().encoder;  // 8px, patch 4, 2x2 grid
  Rng rng(5);
  auto pred = random_tensor<double>({2, 8, 8, 3}, rng);
  auto truth = random_tensor<double>({2, 8, 8, 3}, rng);
  std::vector<MaskSpec> masks{MaskSpec::from_kept(4, {1}), MaskSpec::from_kept(4, {0, 2})};
  double acc = 0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t y = 0; y < 8; ++y) {
      for (std::size_t x = 0; x < 8; ++x) {
        const std::size_t patch = (y / 4) * 2 + x / 4;
        if (std::count(masks[b].kept.begin(), masks[b].kept.end(), patch)) continue;
        for (std::size_t c = 0; c < 3; ++c) {
          const std::size_t i = ((b * 8 + y) * 8 + x) * 3 + c;
          acc += (pred[i] - truth[i]) * (pred[i] - truth[i]);
          ++count;
        }
      }
    }
  }
  EXPECT_NEAR(pixel_loss_from<double>(pred, truth, masks, enc).item(), acc / double(count), 1e-14);
}

TEST_F(Objectives, InfoNceSingleKeyIsZero) {
  auto m = model();
  Rng rng(6);
  auto images = random_tensor<double>({1, 8, 8, 3}, rng, 0, 1);
  auto [mb, mo] = draw_masks(rng, 1, m.cfg);
  EXPECT_EQ(contrastive_loss<double>(images, mb, mo, m, 0.2).item(), 0.0);
  EXPECT_EQ(contrastive_loss_patch<double>(images, mb, mo, m, 0.2).item(), 0.0);
}

TEST_F(Objectives, InfoNceUniformLogitsGiveLogN) {
  for (std::size_t n : {2u, 4u, 16u}) {
    auto q = Tensor<double>::zeros({n, 3});
    auto k = Tensor<double>::zeros({n, 3});
    for (std::size_t i = 0; i < n; ++i) {
      q.data()[i * 3] = 1.0;
      k.data()[i * 3 + 1] = 0.6;
      k.data()[i * 3] = 0.8;
    }
    EXPECT_NEAR(info_nce(q, k, 0.2).item(), std::log(double(n)), 1e-6) << n;
  }
}

TEST_F(Objectives, InfoNceTwoKeyHandValue) {
  auto q = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
  auto k = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
  EXPECT_NEAR(info_nce(q, k, 1.0).item(), std::log(1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(info_nce(q, k, 1.0).item(), 0.313262, 1e-6);
  EXPECT_THROW(info_nce(q, k, 0.0), std::invalid_argument);
}

TEST_F(Objectives, ContrastiveLossIsPositiveForSeveralImages) {
  auto m = model();
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    auto images = random_tensor<double>({3, 8, 8, 3}, rng, 0, 1);
    auto [mb, mo] = draw_masks(rng, 3, m.cfg);
    EXPECT_GT(contrastive_loss<double>(images, mb, mo, m, 0.2).item(), 0.0);
    EXPECT_GT(contrastive_loss_patch<double>(images, mb, mo, m, 0.2).item(), 0.0);
  }
  auto images = random_tensor<double>({2, 8, 8, 3}, rng, 0, 1);
  auto [mb, mo] = draw_masks(rng, 2, m.cfg);
  EXPECT_THROW(contrastive_loss<double>(images, mb, mo, m, 0.0), std::invalid_argument);
  EXPECT_THROW(contrastive_loss<double>(images, mb, mo, m, -1.0), std::invalid_argument);
}

TEST_F(Objectives, QueriesAndKeysHaveUnitNorm) {
  auto m = model();
  Rng rng(8);
  auto images = random_tensor<double>({4, 8, 8, 3}, rng, 0, 1);
  auto [mb, mo] = draw_masks(rng, 4, m.cfg);
  for (auto pool : {Pooling::Cls, Pooling::MeanPatch}) {
    auto q = student_queries(student_encode<double>(images, mb, m), m, pool);
    auto k = teacher_keys<double>(images, mo, m, pool);
    const std::size_t d = q.shape()[1];
    for (std::size_t i = 0; i < 4; ++i) {
      double nq = 0, nk = 0;
      for (std::size_t j = 0; j < d; ++j) {
        nq += q[i * d + j] * q[i * d + j];
        nk += k[i * d + j] * k[i * d + j];
      }
      EXPECT_NEAR(std::sqrt(nq), 1.0, 1e-6);
      EXPECT_NEAR(std::sqrt(nk), 1.0, 1e-6);
    }
  }
}

// With no blocks and every token built to the same vector, mean-pooled
// patch tokens coincide with the class token.
TEST_F(Objectives, PatchVariantMatchesClsOnDegenerateTokens) {
  auto cfg = tiny_structure_config();
  cfg.encoder.depth = 0;
  Rng rng(9);
  auto m = McfModel<double>::init(cfg, rng);
  for (auto& v : m.student.patch_embed.weight.data()) v = 0;
  for (auto& v : m.student.patch_embed.bias.data()) v = 0;
  for (auto& v : m.student.cls_token.data()) v = 0;
  const std::size_t d = cfg.encoder.dim;
  for (std::size_t r = 0; r <= cfg.encoder.num_patches(); ++r) {
    for (std::size_t c = 0; c < d; ++c) m.student.pos_embed.data()[r * d + c] = 0.1 * double(c) - 0.3;
  }
  copy_values(m.ema_source(), m.teacher_params());
  auto images = random_tensor<double>({3, 8, 8, 3}, rng, 0, 1);
  auto [mb, mo] = draw_masks(rng, 3, cfg);
  const double cls = contrastive_loss<double>(images, mb, mo, m, 0.2).item();
  const double patch = contrastive_loss_patch<double>(images, mb, mo, m, 0.2).item();
  EXPECT_NEAR(cls, patch, 1e-12);
}

TEST_F(Objectives, EmaUpdateDefinition) {
  auto t = Tensor<double>::ones({3});
  auto s = Tensor<double>::zeros({3});
  ParamList<double> tl{{"t", t}}, sl{{"s", s}};
  ema_update(tl, sl, 1.0);
  EXPECT_EQ(t[0], 1.0);
  ema_update(tl, sl, 0.99);
  EXPECT_DOUBLE_EQ(t[1], 0.99);
  ema_update(tl, sl, 0.0);
  EXPECT_EQ(t[2], 0.0);
  ParamList<double> bad{{"b", Tensor<double>::zeros({4})}};
  EXPECT_THROW(ema_update(tl, bad, 0.5), ShapeError);
  EXPECT_THROW(ema_update(tl, sl, 1.5), std::invalid_argument);
}

TEST_F(Objectives, MimLossIgnoresOrderOfKeptTokens) {
  auto m = model(LossVariant::FeatureOnly, 10);
  Rng rng(10);
  auto images = random_tensor<double>({1, 8, 8, 3}, rng, 0, 1);
  std::vector<MaskSpec> masks{MaskSpec::from_kept(4, {0, 2, 3})};
  const double sorted = mim_loss<double>(images, masks, m).item();

  auto tokens = select_kept(embed(patchify(images, m.cfg.encoder), m.student), std::span<const MaskSpec>(masks));
  const std::vector<std::size_t> rows{0, 3, 1, 2};  // cls first, then the kept tokens reversed
  const std::size_t d = m.cfg.encoder.dim;
  TokenSequence<double> shuffled{reshape(index_rows(reshape(tokens.tokens, {4, d}), rows), {1, 4, d}),
                                 {tokens.positions[2], tokens.positions[0], tokens.positions[1]}};
  auto normed = final_norm(encode(shuffled, m.student).last, m.student);
  const double permuted = mim_loss_from<double>(decode<double>(normed, masks, m), images, masks, m).item();
  EXPECT_NEAR(sorted, permuted, 1e-12);
}

TEST_F(Objectives, FeatureOnlyLeavesHeadGradientsZero) {
  auto m = model(LossVariant::FeatureOnly);
  Rng rng(11);
  auto images = random_tensor<double>({2, 8, 8, 3}, rng, 0, 1);
  zero_grad(m.trainable());
  backward(total_loss<double>(images, m, rng).total);
  ParamList<double> heads;
  m.student_head.collect("h", heads);
  m.student_projector.collect("p", heads);
  for (const auto& p : heads) {
    for (double g : p.tensor.grad()) EXPECT_EQ(g, 0.0) << p.name;
  }
}

TEST_F(Objectives, ModeWeightsReduceToMim) {
  auto m = model();
  m.cfg.mode = {LossVariant::FeaturePlusConCls, 1.0, 0.0};
  Rng rng(12);
  auto images = random_tensor<double>({2, 8, 8, 3}, rng, 0, 1);
  auto [mb, mo] = draw_masks(rng, 2, m.cfg);
  EXPECT_EQ(total_loss<double>(images, mb, mo, m).total.item(), mim_loss<double>(images, mb, m).item());
}

TEST_F(Objectives, ModeCompositions) {
  Rng rng(13);
  auto images = random_tensor<double>({2, 8, 8, 3}, rng, 0, 1);
  for (auto v : {LossVariant::PixelL2, LossVariant::PixelPlusFeature, LossVariant::FeatureOnly}) {
    auto m = model(v);
    auto [mb, mo] = draw_masks(rng, 2, m.cfg);
    auto out = total_loss<double>(images, mb, mo, m);
    double expect = 0;
    if (m.cfg.mode.uses_pixel()) expect += pixel_loss<double>(images, mb, m).item();
    if (m.cfg.mode.uses_feature()) expect += mim_loss<double>(images, mb, m).item();
    EXPECT_NEAR(out.total.item(), expect, 1e-14) << to_string(v);
    EXPECT_FALSE(out.con.defined());
  }
  EXPECT_EQ(parse_loss_variant("feature_con_patch"), LossVariant::FeaturePlusConPatch);
  try {
    parse_loss_variant("mae");
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("pixel_l2"), std::string::npos);
  }
}

TEST_F(Objectives, TotalGradientIsWeightedSumOfBranchGradients) {
  auto m = model();
  Rng rng(14);
  auto images = random_tensor<double>({3, 8, 8, 3}, rng, 0, 1);
  auto [mb, mo] = draw_masks(rng, 3, m.cfg);
  const auto params = m.trainable();
  auto grads = [&](const std::function<Tensor<double>()>& f) {
    zero_grad(params);
    backward(f());
    std::vector<double> g;
    for (const auto& p : params) {
      auto c = test::grad_copy(p.tensor);
      g.insert(g.end(), c.begin(), c.end());
    }
    return g;
  };
  const auto total = grads([&] { return total_loss<double>(images, mb, mo, m).total; });
  const auto mim = grads([&] { return mim_loss<double>(images, mb, m); });
  const auto con = grads([&] { return contrastive_loss<double>(images, mb, mo, m, m.cfg.temperature); });
  double num = 0, den = 0;
  for (std::size_t i = 0; i < total.size(); ++i) {
    const double e = m.cfg.mode.mim_weight * mim[i] + m.cfg.mode.con_weight * con[i];
    num += (total[i] - e) * (total[i] - e);
    den += e * e;
  }
  EXPECT_LE(std::sqrt(num / den), 1e-10);
}

TEST_F(Objectives, OneSmallStepDecreasesTheLoss) {
  auto m = model();
  Rng rng(15);
  auto images = random_tensor<double>({4, 8, 8, 3}, rng, 0, 1);
  auto [mb, mo] = draw_masks(rng, 4, m.cfg);
  AdamW<double> opt(m.trainable(), {});
  zero_grad(m.trainable());
  auto before = total_loss<double>(images, mb, mo, m).total;
  const double l0 = before.item();
  backward(before);
  opt.step(1e-4);
  Graph<double>::local().clear();
  EXPECT_LT(total_loss<double>(images, mb, mo, m).total.item(), l0);
}

TEST_F(Objectives, OptimizerNeverTouchesFrozenParts) {
  auto m = model();
  const auto m1_before = m.m1.clone();
  const auto teacher_before = m.teacher.clone();
  Rng rng(16);
  AdamW<double> opt(m.trainable(), {});
  for (int s = 0; s < 3; ++s) {
    auto images = random_tensor<double>({2, 8, 8, 3}, rng, 0, 1);
    zero_grad(m.trainable());
    backward(total_loss<double>(images, m, rng).total);
    opt.step(1e-3);
  }
  auto same = [](const ParamList<double>& a, const ParamList<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (test::values(a[i].tensor) != test::values(b[i].tensor)) return false;
      if (a[i].tensor.has_grad()) return false;
    }
    return true;
  };
  EXPECT_TRUE(same(m.m1_params(), m1_before.params("m1")));
  EXPECT_TRUE(same(m.teacher.params("t"), teacher_before.params("t")));
}

TEST_F(Objectives, GradientStructureReport) {
  const auto report = verify_gradient_structure(tiny_structure_config(), 0);
  ASSERT_EQ(report.checks.size(), 3u);
  EXPECT_EQ(report.checks[0].name, "a");
  EXPECT_EQ(report.checks[1].name, "b");
  EXPECT_EQ(report.checks[2].name, "c");
  for (const auto& c : report.checks) EXPECT_TRUE(c.passed) << c.name << " " << c.value;
  EXPECT_TRUE(report.passed());
}

TEST_F(Objectives, CompositeGradchecks) {
  for (const auto& c : composite_gradchecks(0, 1e-4)) EXPECT_TRUE(c.passed) << c.name << " " << c.value;
}

}  // namespace
}  // namespace mcf
