// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <numeric>

#include "mcf/gradcheck.hpp"
#include "mcf/ops.hpp"
#include "mcf/vit.hpp"
#include "test_util.hpp"

namespace mcf {
namespace {

using test::random_tensor;

ViTConfig tiny(std::size_t depth = 2) { return {16, 8, 3, depth, 16, 2, 2.0}; }

class ViT : public ::testing::Test {
 protected:
  void TearDown() override {
    Graph<double>::local().clear();
    Graph<float>::local().clear();
  }
};

TEST_F(ViT, PaperScalePatchCount) {
  ViTConfig cfg;  // 224 / 16
  Rng rng(0);
  auto img = random_tensor<float>({1, 224, 224, 3}, rng, 0, 1);
  auto p = patchify(img, cfg);
  EXPECT_EQ(p.values.shape(), (Shape{1, 196, 768}));
}

TEST_F(ViT, SmallImageGivesFourPatches) {
  ViTConfig cfg{32, 16, 3, 1, 16, 2, 2.0};
  Rng rng(1);
  auto p = patchify(random_tensor<double>({2, 32, 32, 3}, rng), cfg);
  EXPECT_EQ(p.values.shape(), (Shape{2, 4, 768}));
  EXPECT_EQ(p.positions, (std::vector<std::size_t>{0, 1, 2, 3, 0, 1, 2, 3}));
}

TEST_F(ViT, PatchLayoutIsRowColumnChannel) {
  ViTConfig cfg{4, 2, 1, 1, 4, 1, 1.0};
  std::vector<double> v(16);
  std::iota(v.begin(), v.end(), 0.0);
  auto p = patchify(Tensor<double>::from({1, 4, 4, 1}, v), cfg);
  // Patch 1 is the top-right 2x2 block.
  EXPECT_EQ(p.values[4], 2.0);
  EXPECT_EQ(p.values[5], 3.0);
  EXPECT_EQ(p.values[6], 6.0);
  EXPECT_EQ(p.values[7], 7.0);
}

TEST_F(ViT, PatchifyRoundTripIsExact) {
  Rng rng(2);
  auto img = random_tensor<double>({2, 16, 16, 3}, rng);
  auto back = unpatchify(patchify(img, tiny()), tiny());
  EXPECT_EQ(test::values(back), test::values(img));
}

TEST_F(ViT, ConstantPatchesGiveConstantImage) {
  auto p = patchify(Tensor<double>::full({1, 16, 16, 3}, 0.25), tiny());
  const auto img = unpatchify(p, tiny());
  for (double v : img.data()) EXPECT_EQ(v, 0.25);
}

TEST_F(ViT, ShuffledPositionsReassembleTheSameImage) {
  Rng rng(3);
  const auto cfg = tiny();
  auto img = random_tensor<double>({1, 16, 16, 3}, rng);
  auto p = patchify(img, cfg);
  std::vector<std::size_t> order{2, 0, 3, 1};
  Patches<double> shuffled{index_rows(reshape(p.values, {4, cfg.patch_dim()}), order), {}};
  shuffled.values = reshape(shuffled.values, {1, 4, cfg.patch_dim()});
  for (auto o : order) shuffled.positions.push_back(p.positions[o]);
  EXPECT_EQ(test::values(unpatchify(shuffled, cfg)), test::values(img));
}

TEST_F(ViT, UnpatchifyRejectsBadCoverage) {
  Rng rng(4);
  auto p = patchify(random_tensor<double>({1, 16, 16, 3}, rng), tiny());
  p.positions[1] = 0;
  EXPECT_THROW(unpatchify(p, tiny()), std::invalid_argument);
  p.positions[1] = 9;
  EXPECT_THROW(unpatchify(p, tiny()), std::invalid_argument);
}

TEST_F(ViT, PatchifyRejectsWrongSize) {
  EXPECT_THROW(patchify(Tensor<double>::zeros({1, 12, 16, 3}), tiny()), ShapeError);
}

TEST_F(ViT, ConfigValidation) {
  ViTConfig bad = tiny();
  bad.patch_size = 5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = tiny();
  bad.heads = 3;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST_F(ViT, ParameterCountIsAPureFunctionOfConfig) {
  for (std::size_t depth : {0u, 1u, 3u}) {
    Rng a(5), b(6);
    const auto cfg = tiny(depth);
    auto pa = ViTParams<double>::init(cfg, a);
    auto pb = ViTParams<double>::init(cfg, b);
    EXPECT_EQ(count_elements(pa.params("v")), parameter_count(cfg));
    EXPECT_EQ(count_elements(pb.params("v")), parameter_count(cfg));
  }
}

TEST_F(ViT, EmptyStackReturnsEmbedding) {
  Rng rng(7);
  auto params = ViTParams<double>::init(tiny(0), rng);
  auto img = random_tensor<double>({2, 16, 16, 3}, rng);
  auto tokens = embed(patchify(img, params.cfg), params);
  auto out = encode(tokens, params);
  EXPECT_EQ(test::values(out.last.tokens), test::values(tokens.tokens));
}

TEST_F(ViT, LastTapIsTheFinalOutput) {
  Rng rng(8);
  auto params = ViTParams<double>::init(tiny(3), rng);
  auto img = random_tensor<double>({1, 16, 16, 3}, rng);
  const std::size_t taps[] = {1, 3, 2};
  auto out = encode(embed(patchify(img, params.cfg), params), params, taps);
  ASSERT_EQ(out.taps.size(), 3u);
  EXPECT_EQ(test::values(out.taps[1].tokens), test::values(out.last.tokens));
  for (const auto& t : out.taps) EXPECT_EQ(t.tokens.shape(), out.last.tokens.shape());
  const std::size_t bad[] = {4};
  EXPECT_THROW(encode(embed(patchify(img, params.cfg), params), params, bad), std::out_of_range);
}

TEST_F(ViT, PaperTapsKeepTheOutputShape) {
  Rng rng(9);
  auto params = ViTParams<float>::init({16, 8, 3, 12, 16, 2, 1.0}, rng);
  auto img = random_tensor<float>({1, 16, 16, 3}, rng);
  const std::size_t taps[] = {2, 4, 8, 12};
  auto out = encode(embed(patchify(img, params.cfg), params), params, taps);
  for (const auto& t : out.taps) EXPECT_EQ(t.tokens.shape(), out.last.tokens.shape());
}

TEST_F(ViT, PermutingTokensPermutesOutputs) {
  Rng rng(10);
  auto params = ViTParams<double>::init(tiny(2), rng);
  auto img = random_tensor<double>({1, 16, 16, 3}, rng);
  auto p = patchify(img, params.cfg);
  const std::vector<std::size_t> order{3, 1, 0, 2};
  Patches<double> q{reshape(index_rows(reshape(p.values, {4, params.cfg.patch_dim()}), order),
                            {1, 4, params.cfg.patch_dim()}),
                    order};
  auto a = encode(embed(p, params), params).last.tokens;
  auto b = encode(embed(q, params), params).last.tokens;
  const std::size_t d = params.cfg.dim;
  for (std::size_t k = 0; k < d; ++k) EXPECT_NEAR(a[k], b[k], 1e-12) << "cls " << k;
  for (std::size_t j = 0; j < order.size(); ++j) {
    for (std::size_t k = 0; k < d; ++k) EXPECT_NEAR(b[(1 + j) * d + k], a[(1 + order[j]) * d + k], 1e-12);
  }
}

TEST_F(ViT, ForwardIsDeterministic) {
  Rng rng(11);
  auto params = ViTParams<float>::init(tiny(2), rng);
  auto img = random_tensor<float>({2, 16, 16, 3}, rng);
  EXPECT_EQ(test::values(encode_images(img, params).tokens), test::values(encode_images(img, params).tokens));
}

TEST_F(ViT, CloneIsIndependent) {
  Rng rng(12);
  auto params = ViTParams<double>::init(tiny(1), rng);
  auto copy = params.clone();
  copy.cls_token.data()[0] += 1.0;
  EXPECT_NE(copy.cls_token[0], params.cls_token[0]);
  EXPECT_EQ(copy.params("c")[0].tensor.requires_grad(), params.params("p")[0].tensor.requires_grad());
}

TEST_F(ViT, TinyVitPassesGradcheck) {
  Rng rng(13);
  auto params = ViTParams<double>::init(tiny(2), rng);
  auto img = random_tensor<double>({2, 16, 16, 3}, rng);
  auto w = random_tensor<double>({2, 5, 16}, rng);
  auto fn = [&] { return mean(mul(encode_images(img, params).tokens, w)); };
  GradCheckOptions opts;
  opts.max_per_param = 24;
  const auto report = check_gradients<double>(fn, params.params("vit"), opts);
  EXPECT_LE(report.max_rel_error, 1e-4) << report.worst_param << "[" << report.worst_index << "]";
}

}  // namespace
}  // namespace mcf
