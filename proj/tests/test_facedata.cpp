// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "mcf/facedata.hpp"
#include "mcf/image.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace mcf {
namespace {

Landmarks random_points(Rng& rng, double lo = 20, double hi = 200) {
  Landmarks p;
  for (auto& q : p) q = {rng.uniform(lo, hi), rng.uniform(lo, hi)};
  return p;
}

TEST(Similarity, IdentityForEqualPointSets) {
  Rng rng(0);
  const auto p = random_points(rng);
  const auto t = fit_similarity(p, p);
  EXPECT_NEAR(t.a, 1.0, 1e-12);
  EXPECT_NEAR(t.b, 0.0, 1e-12);
  EXPECT_NEAR(t.tx, 0.0, 1e-9);
  EXPECT_NEAR(t.ty, 0.0, 1e-9);
}

TEST(Similarity, PureScaling) {
  Rng rng(1);
  const auto p = random_points(rng);
  Landmarks q;
  for (std::size_t i = 0; i < 5; ++i) q[i] = {2 * p[i].x, 2 * p[i].y};
  const auto t = fit_similarity(p, q);
  EXPECT_NEAR(t.scale(), 2.0, 1e-12);
  EXPECT_NEAR(t.rotation(), 0.0, 1e-12);
  EXPECT_NEAR(t.tx, 0.0, 1e-9);
  EXPECT_NEAR(t.ty, 0.0, 1e-9);
}

TEST(Similarity, MatchesNormalEquationsOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto src = random_points(rng);
    const auto dst = random_points(rng);
    const auto t = fit_similarity(src, dst);
    const auto o = oracle::similarity_normal_equations(src, dst);
    const Similarity ref{o[0], o[1], o[2], o[3]};
    EXPECT_NEAR(similarity_residual(t, src, dst), similarity_residual(ref, src, dst),
                1e-8 * std::max(1.0, similarity_residual(ref, src, dst)));
    EXPECT_NEAR(t.a, o[0], 1e-9);
    EXPECT_NEAR(t.b, o[1], 1e-9);
  }
}

TEST(Similarity, ResidualInvariantUnderJointRigidMotion) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto src = random_points(rng);
    const auto dst = random_points(rng);
    const double th = rng.uniform(-3, 3);
    const Similarity rigid{std::cos(th), std::sin(th), rng.uniform(-50, 50), rng.uniform(-50, 50)};
    Landmarks s2, d2;
    for (std::size_t i = 0; i < 5; ++i) {
      s2[i] = rigid.apply(src[i]);
      d2[i] = rigid.apply(dst[i]);
    }
    const double r1 = similarity_residual(fit_similarity(src, dst), src, dst);
    const double r2 = similarity_residual(fit_similarity(s2, d2), s2, d2);
    EXPECT_NEAR(r1, r2, 1e-9 * std::max(1.0, r1));
  }
}

TEST(Similarity, NeverReflects) {
  Rng rng(4);
  const auto src = random_points(rng);
  Landmarks mirrored;
  for (std::size_t i = 0; i < 5; ++i) mirrored[i] = {-src[i].x, src[i].y};
  const auto t = fit_similarity(src, mirrored);
  EXPECT_GT(similarity_residual(t, src, mirrored), 1.0);
}

TEST(Similarity, DegenerateInputRejected) {
  Landmarks same;
  same.fill({5, 5});
  Rng rng(5);
  EXPECT_THROW(fit_similarity(same, random_points(rng)), std::invalid_argument);
}

FaceRecord blank_record(std::size_t size, const Landmarks& lm, std::uint8_t fill = 0) {
  FaceRecord rec;
  rec.id = "r";
  rec.image = Image(size, size, 3, fill);
  rec.landmarks = lm;
  return rec;
}

TEST(AlignCrop, IdentityWarpIsExact) {
  const auto tpl = AlignTemplate::standard(256);
  Rng rng(6);
  auto rec = blank_record(256, tpl.points);
  for (auto& px : rec.image.pixels) px = static_cast<std::uint8_t>(rng.uniform_index(256));
  const auto out = align_crop(rec, tpl);
  EXPECT_EQ(out.image, rec.image);
}

TEST(AlignCrop, ExactSimilarityLandsOnTemplate) {
  const auto tpl = AlignTemplate::standard(256);
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const double s = rng.uniform(0.6, 1.2), th = rng.uniform(-0.5, 0.5);
    const Similarity warp{s * std::cos(th), s * std::sin(th), rng.uniform(40, 80), rng.uniform(40, 80)};
    Landmarks src;
    for (std::size_t i = 0; i < 5; ++i) src[i] = warp.apply(tpl.points[i]);
    const auto out = align_crop(blank_record(400, src, 90), tpl);
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_LE(std::hypot(out.landmarks[i].x - tpl.points[i].x, out.landmarks[i].y - tpl.points[i].y), 0.5);
    }
    // Refitting the aligned landmarks to the template gives the identity.
    const auto re = fit_similarity(out.landmarks, tpl.points);
    EXPECT_LE(std::abs(re.scale() - 1), 1e-3);
    EXPECT_LE(std::abs(re.rotation()) * 180 / std::numbers::pi, 0.1);
    EXPECT_LE(std::hypot(re.tx, re.ty), 0.5);
  }
}

TEST(AlignCrop, ConstantImageStaysConstant) {
  const auto tpl = AlignTemplate::standard(64);
  Landmarks src;
  const Similarity warp{2.0 * std::cos(0.2), 2.0 * std::sin(0.2), 150, 120};
  for (std::size_t i = 0; i < 5; ++i) src[i] = warp.apply(tpl.points[i]);
  const auto out = align_crop(blank_record(512, src, 77), tpl);
  for (auto px : out.image.pixels) EXPECT_EQ(px, 77);
}

TEST(AlignCrop, OutsideSourceIsBlack) {
  const auto tpl = AlignTemplate::standard(64);
  Landmarks src;
  const Similarity warp{0.25, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < 5; ++i) src[i] = warp.apply(tpl.points[i]);
  const auto out = align_crop(blank_record(16, src, 200), tpl);
  EXPECT_EQ(out.image.at(63, 63, 0), 0);
  EXPECT_EQ(out.image.at(0, 0, 0), 200);
}

TEST(SynthFace, FixedSeedIsBitIdentical) {
  Rng a(8), b(8);
  const auto ida = sample_identity(a);
  const auto idb = sample_identity(b);
  const auto ra = synth_face(a, 64, ida);
  const auto rb = synth_face(b, 64, idb);
  EXPECT_EQ(ra.image, rb.image);
  EXPECT_EQ(*ra.labels, *rb.labels);
  EXPECT_THROW(synth_face(a, 16, ida), std::invalid_argument);
  EXPECT_THROW(synth_face(a, 64, ida, -1.0), std::invalid_argument);
}

TEST(SynthFace, LabelsAgreeWithLandmarks) {
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const auto rec = synth_face(rng, 64, sample_identity(rng));
    rec.validate();
    const auto& lm = rec.landmarks;
    const auto& lab = *rec.labels;
    EXPECT_EQ(lab.at(static_cast<std::size_t>(std::lround(lm[2].x)), static_cast<std::size_t>(std::lround(lm[2].y))),
              Nose);
    for (std::size_t y = 0; y < lab.height; ++y) {
      for (std::size_t x = 0; x < lab.width; ++x) {
        const double dl = std::hypot(x - lm[0].x, y - lm[0].y), dr = std::hypot(x - lm[1].x, y - lm[1].y);
        if (lab.at(x, y) == LeftEye) EXPECT_LT(dl, dr);
        if (lab.at(x, y) == RightEye) EXPECT_LT(dr, dl);
      }
    }
  }
}

TEST(SynthFace, SkinIsTheLargestFaceRegion) {
  Rng rng(10);
  int wins = 0;
  const int samples = 1000;
  for (int i = 0; i < samples; ++i) {
    const auto rec = synth_face(rng, 32, sample_identity(rng));
    std::array<std::size_t, kNumRegions> hist{};
    for (auto v : rec.labels->pixels) ++hist[v];
    bool largest = true;
    for (std::size_t c = 2; c < kNumRegions; ++c) largest &= hist[Skin] > hist[c];
    wins += largest;
  }
  EXPECT_GE(wins, samples * 95 / 100);
}

TEST(RawImage, RoundTrip) {
  test::TempDir dir("raw");
  Image img(5, 3, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 7);
  write_raw(dir / "x.raw", img);
  EXPECT_EQ(read_raw(dir / "x.raw"), img);
  EXPECT_EQ(decode_raw(encode_raw(img)), img);
  auto bytes = encode_raw(img);
  bytes.pop_back();
  EXPECT_THROW(decode_raw(bytes), std::exception);
}

class CorpusBuild : public ::testing::Test {
 protected:
  test::TempDir dir{"corpus"};
  SynthSpec spec{3, 4, 64, 5, 1.0};
  AlignTemplate tpl = AlignTemplate::standard(64);
};

TEST_F(CorpusBuild, EmptyInputGivesEmptyManifest) {
  const auto r = build_corpus(SynthSpec{0, 4, 64, 0, 1.0}, tpl, dir / "empty");
  EXPECT_EQ(r.written, 0u);
  EXPECT_TRUE(read_manifest(dir / "empty").empty());
}

TEST_F(CorpusBuild, RerunIsIdempotent) {
  const auto first = build_corpus(spec, tpl, dir.path());
  EXPECT_EQ(first.written, 12u);
  const auto manifest = read_bytes(dir / "manifest.json");
  const auto second = build_corpus(spec, tpl, dir.path());
  EXPECT_EQ(second.written, 0u);
  EXPECT_EQ(second.reused, 12u);
  EXPECT_EQ(read_bytes(dir / "manifest.json"), manifest);
}

TEST_F(CorpusBuild, TamperedFileIsRebuiltAlone) {
  build_corpus(spec, tpl, dir.path());
  const auto target = dir / "images/synth_000005.raw";
  const auto original = read_bytes(target);
  {
    std::fstream f(target, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    f.put(static_cast<char>(original[40] ^ 0x5a));
  }
  const auto r = build_corpus(spec, tpl, dir.path());
  EXPECT_EQ(r.written, 1u);
  EXPECT_EQ(r.rebuilt_ids, (std::vector<std::string>{"synth_000005"}));
  EXPECT_EQ(read_bytes(target), original);
}

TEST_F(CorpusBuild, DeletedLabelIsRebuilt) {
  build_corpus(spec, tpl, dir.path());
  std::filesystem::remove(dir / "labels/synth_000002.raw");
  const auto r = build_corpus(spec, tpl, dir.path());
  EXPECT_EQ(r.rebuilt_ids, (std::vector<std::string>{"synth_000002"}));
}

TEST_F(CorpusBuild, ManifestRecordsIdentitiesAndChecksums) {
  build_corpus(spec, tpl, dir.path());
  const auto m = read_manifest(dir.path());
  ASSERT_EQ(m.size(), 12u);
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(m[i].identity, static_cast<int>(i / 4));
    EXPECT_TRUE(m[i].has_labels);
    EXPECT_EQ(record_checksum(dir.path(), m[i]), m[i].checksum);
  }
  const auto c = load_corpus(dir.path(), 32);
  EXPECT_EQ(c.images.size(), 12u);
  EXPECT_EQ(c.images[0].width, 32u);
  EXPECT_EQ(c.labels[0]->width, 32u);
}

TEST_F(CorpusBuild, RealImagesWithMissingLandmarksAreSkipped) {
  Rng rng(12);
  const auto rec = synth_face(rng, 64, sample_identity(rng));
  write_raw(dir / "face.raw", rec.image);
  std::ofstream lm(dir / "landmarks.txt");
  lm << "# id path x0 y0 ... x4 y4\n";
  lm << "good face.raw";
  for (const auto& p : rec.landmarks) lm << ' ' << p.x << ' ' << p.y;
  lm << "\nbad face.raw 1 2 3\n";
  lm.close();
  const auto r = build_corpus(dir / "landmarks.txt", tpl, dir / "out");
  EXPECT_EQ(r.written, 1u);
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(r.skipped[0].rfind("bad", 0), 0u);
  const auto m = read_manifest(dir / "out");
  ASSERT_EQ(m.size(), 1u);
  EXPECT_FALSE(m[0].identity.has_value());
  EXPECT_FALSE(m[0].has_labels);
}

}  // namespace
}  // namespace mcf
