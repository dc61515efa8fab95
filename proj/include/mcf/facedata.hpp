// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Face corpus pipeline: 5-point similarity alignment to a canonical template,
// cropping, a procedural face generator with exact region labels, and the
// on-disk corpus (images/, labels/, manifest.json).
//
// Pixel coordinates put the centre of pixel (i, j) at (i, j).

#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcf/image.hpp"
#include "mcf/rng.hpp"

namespace mcf {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// left eye, right eye, nose tip, left mouth corner, right mouth corner
/// ("left" = smaller x in the image).
using Landmarks = std::array<Point, 5>;
inline constexpr std::array<const char*, 5> kLandmarkNames = {"left_eye", "right_eye", "nose", "left_mouth",
                                                              "right_mouth"};

enum Region : std::uint8_t { Background = 0, Skin, Hair, LeftEye, RightEye, Nose, Mouth, Brow };
inline constexpr std::size_t kNumRegions = 8;
inline constexpr std::array<const char*, kNumRegions> kRegionNames = {"background", "skin",      "hair", "l_eye",
                                                                       "r_eye",      "nose",      "mouth", "brow"};

struct FaceRecord {
  std::string id;
  Image image;
  Landmarks landmarks{};
  std::optional<int> identity;
  std::optional<Image> labels;  // one channel, Region values

  /// Landmarks inside the image, labels matching its size.
  void validate() const;
};

struct AlignTemplate {
  Landmarks points{};
  std::size_t size = 256;

  /// The common 112-pixel five-point face layout scaled to `size`.
  static AlignTemplate standard(std::size_t size = 256);
  void validate() const;
};

/// p -> [a -b; b a] p + t, i.e. scale sqrt(a^2 + b^2) times a proper rotation.
struct Similarity {
  double a = 1.0;
  double b = 0.0;
  double tx = 0.0;
  double ty = 0.0;

  Point apply(Point p) const { return {a * p.x - b * p.y + tx, b * p.x + a * p.y + ty}; }
  double scale() const;
  double rotation() const;  // radians
  Similarity inverse() const;
};

/// Least-squares similarity taking src onto dst.
Similarity fit_similarity(std::span<const Point> src, std::span<const Point> dst);
/// Sum of squared residuals of `t` on the pairs.
double similarity_residual(const Similarity& t, std::span<const Point> src, std::span<const Point> dst);

struct AlignedFace {
  Image image;
  Landmarks landmarks{};
  std::optional<Image> labels;
  Similarity transform;
};

/// Warps the record into the template square (bilinear for pixels, nearest
/// for labels, black outside the source).
AlignedFace align_crop(const FaceRecord& rec, const AlignTemplate& tpl);

/// Geometry and colours that stay fixed across renders of one identity.
struct IdentityParams {
  double face_rx, face_ry;
  double eye_dx, eye_y, eye_rx, eye_ry;
  double brow_gap, brow_thick, brow_tilt;
  double nose_y, nose_w;
  double mouth_y, mouth_w, mouth_h;
  double hairline, hair_side, hair_volume;
  std::array<double, 3> skin, hair, iris, lips;
};

IdentityParams sample_identity(Rng& rng);

/// Procedural face with exact landmarks and region labels. Rendering
/// (pose, lighting, background, noise) is drawn from `rng`; `nuisance`
/// scales the photometric variation (0 renders every image of an identity
/// with the same colours, background and lighting).
FaceRecord synth_face(Rng& rng, std::size_t size, const IdentityParams& identity, double nuisance = 1.0);

struct SynthSpec {
  std::size_t identities = 20;
  std::size_t per_identity = 100;
  std::size_t render_size = 64;
  std::uint64_t seed = 0;
  double nuisance = 1.0;

  std::size_t count() const { return identities * per_identity; }
};

struct ManifestEntry {
  std::string id;
  std::uint64_t checksum = 0;
  Landmarks landmarks{};
  std::optional<int> identity;
  bool has_labels = false;
};

struct BuildReport {
  std::size_t written = 0;
  std::size_t reused = 0;
  std::vector<std::string> skipped;  // with reasons
  std::vector<std::string> rebuilt_ids;
  std::vector<ManifestEntry> manifest;
};

using Logger = std::function<void(const std::string&)>;

/// Aligns synthetic faces into `out`. Records whose files already match
/// their manifest checksum are left untouched.
BuildReport build_corpus(const SynthSpec& spec, const AlignTemplate& tpl, const std::filesystem::path& out,
                         const Logger& log = {});

/// Aligns real images listed in a landmark manifest (one line per face:
/// `id path x1 y1 ... x5 y5`, paths relative to the manifest). Lines with
/// missing landmarks or unreadable images are skipped and logged.
BuildReport build_corpus(const std::filesystem::path& landmark_manifest, const AlignTemplate& tpl,
                         const std::filesystem::path& out, const Logger& log = {});

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& corpus_dir);
std::uint64_t record_checksum(const std::filesystem::path& corpus_dir, const ManifestEntry& e);

struct Corpus {
  std::vector<Image> images;
  std::vector<std::optional<Image>> labels;
  std::vector<std::optional<int>> identities;
  std::vector<Landmarks> landmarks;
  std::vector<std::string> ids;
};

/// Loads a built corpus, optionally box-downsampling to `size`.
Corpus load_corpus(const std::filesystem::path& corpus_dir, std::optional<std::size_t> size = std::nullopt);

}  // namespace mcf
