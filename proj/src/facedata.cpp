// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcf/facedata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mcf {

namespace {

constexpr double kColourDrift = 0.05;

constexpr std::array<Point, 5> kTemplate112 = {{{38.2946, 51.6963},
                                               {73.5318, 51.5014},
                                               {56.0252, 71.7366},
                                               {41.5493, 92.3655},
                                               {70.7299, 92.2041}}};

bool inside_ellipse(double u, double v, double cu, double cv, double ru, double rv) {
  const double du = (u - cu) / ru, dv = (v - cv) / rv;
  return du * du + dv * dv <= 1.0;
}

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

bool inside_triangle(Point p, Point a, Point b, Point c) {
  const double d1 = cross(a, b, p), d2 = cross(b, c, p), d3 = cross(c, a, p);
  const bool neg = d1 < 0 || d2 < 0 || d3 < 0, pos = d1 > 0 || d2 > 0 || d3 > 0;
  return !(neg && pos);
}

std::array<double, 3> lerp(const std::array<double, 3>& a, const std::array<double, 3>& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L)); }

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << v;
  return s.str();
}

nlohmann::ordered_json to_json(const ManifestEntry& e) {
  nlohmann::ordered_json j;
  j["id"] = e.id;
  j["checksum"] = hex64(e.checksum);
  auto lm = nlohmann::ordered_json::array();
  for (const auto& p : e.landmarks) lm.push_back({p.x, p.y});
  j["landmarks"] = lm;
  j["identity"] = e.identity ? nlohmann::ordered_json(*e.identity) : nlohmann::ordered_json(nullptr);
  j["has_labels"] = e.has_labels;
  return j;
}

ManifestEntry from_json(const nlohmann::json& j) {
  ManifestEntry e;
  e.id = j.at("id").get<std::string>();
  e.checksum = std::stoull(j.at("checksum").get<std::string>(), nullptr, 16);
  const auto& lm = j.at("landmarks");
  if (lm.size() != 5) throw std::runtime_error("manifest: " + e.id + " does not have 5 landmarks");
  for (std::size_t i = 0; i < 5; ++i) e.landmarks[i] = {lm[i].at(0).get<double>(), lm[i].at(1).get<double>()};
  if (!j.at("identity").is_null()) e.identity = j.at("identity").get<int>();
  e.has_labels = j.at("has_labels").get<bool>();
  return e;
}

std::filesystem::path image_path(const std::filesystem::path& dir, const std::string& id) {
  return dir / "images" / (id + ".raw");
}

std::filesystem::path label_path(const std::filesystem::path& dir, const std::string& id) {
  return dir / "labels" / (id + ".raw");
}

// One record to (re)build; `make` produces the unaligned face on demand.
struct Job {
  std::string id;
  std::optional<int> identity;
  std::function<FaceRecord()> make;
};

std::uint64_t checksum_of(const std::vector<std::uint8_t>& image, const std::vector<std::uint8_t>* labels) {
  auto h = fnv1a64(image);
  return labels ? fnv1a64(*labels, h) : h;
}

void write_manifest(const std::filesystem::path& out, const std::vector<ManifestEntry>& entries) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& e : entries) arr.push_back(to_json(e));
  const std::string text = arr.dump(1) + "\n";
  const auto path = out / "manifest.json";
  if (std::filesystem::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    const std::string existing((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (existing == text) return;
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << text;
  }
  std::filesystem::rename(tmp, path);
}

BuildReport run_jobs(const std::vector<Job>& jobs, const AlignTemplate& tpl, const std::filesystem::path& out,
                     const Logger& log) {
  tpl.validate();
  std::filesystem::create_directories(out / "images");
  std::filesystem::create_directories(out / "labels");
  std::map<std::string, ManifestEntry> previous;
  if (std::filesystem::exists(out / "manifest.json")) {
    for (auto& e : read_manifest(out)) previous.emplace(e.id, e);
  }

  const auto n = static_cast<std::ptrdiff_t>(jobs.size());
  std::vector<std::optional<ManifestEntry>> entries(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::vector<char> reused(jobs.size(), 0);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& job = jobs[static_cast<std::size_t>(i)];
    try {
      if (auto it = previous.find(job.id); it != previous.end()) {
        bool valid = false;
        try {
          valid = record_checksum(out, it->second) == it->second.checksum;
        } catch (const std::exception&) {
          valid = false;
        }
        if (valid) {
          entries[static_cast<std::size_t>(i)] = it->second;
          reused[static_cast<std::size_t>(i)] = 1;
          continue;
        }
      }
      const FaceRecord rec = job.make();
      const auto aligned = align_crop(rec, tpl);
      const auto img_bytes = encode_raw(aligned.image);
      std::optional<std::vector<std::uint8_t>> lbl_bytes;
      if (aligned.labels) lbl_bytes = encode_raw(*aligned.labels);
      write_raw(image_path(out, job.id), aligned.image);
      if (aligned.labels) write_raw(label_path(out, job.id), *aligned.labels);
      ManifestEntry e;
      e.id = job.id;
      e.checksum = checksum_of(img_bytes, lbl_bytes ? &*lbl_bytes : nullptr);
      e.landmarks = aligned.landmarks;
      e.identity = job.identity;
      e.has_labels = aligned.labels.has_value();
      entries[static_cast<std::size_t>(i)] = e;
    } catch (const std::exception& ex) {
      errors[static_cast<std::size_t>(i)] = ex.what();
    }
  }

  BuildReport report;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!entries[i]) {
      report.skipped.push_back(jobs[i].id + ": " + errors[i]);
      if (log) log("skipped " + jobs[i].id + ": " + errors[i]);
      continue;
    }
    if (reused[i]) {
      ++report.reused;
    } else {
      ++report.written;
      if (previous.count(jobs[i].id)) report.rebuilt_ids.push_back(jobs[i].id);
    }
    report.manifest.push_back(*entries[i]);
  }
  write_manifest(out, report.manifest);
  if (log) {
    log("corpus " + out.string() + ": " + std::to_string(report.written) + " written, " +
        std::to_string(report.reused) + " reused, " + std::to_string(report.skipped.size()) + " skipped");
  }
  return report;
}

}  // namespace

void FaceRecord::validate() const {
  if (image.width == 0 || image.height == 0) throw std::invalid_argument("FaceRecord " + id + ": empty image");
  for (std::size_t i = 0; i < landmarks.size(); ++i) {
    const auto& p = landmarks[i];
    if (!(p.x >= 0 && p.y >= 0 && p.x <= static_cast<double>(image.width - 1) &&
          p.y <= static_cast<double>(image.height - 1))) {
      throw std::invalid_argument("FaceRecord " + id + ": landmark " + kLandmarkNames[i] + " outside the image");
    }
  }
  if (labels && (labels->width != image.width || labels->height != image.height || labels->channels != 1)) {
    throw std::invalid_argument("FaceRecord " + id + ": label map does not match the image");
  }
}

AlignTemplate AlignTemplate::standard(std::size_t size) {
  AlignTemplate t;
  t.size = size;
  const double s = static_cast<double>(size) / 112.0;
  for (std::size_t i = 0; i < 5; ++i) t.points[i] = {kTemplate112[i].x * s, kTemplate112[i].y * s};
  return t;
}

void AlignTemplate::validate() const {
  if (size < 2) throw std::invalid_argument("AlignTemplate: size must be at least 2");
  const double hi = static_cast<double>(size - 1);
  for (const auto& p : points) {
    if (!(p.x > 0 && p.y > 0 && p.x < hi && p.y < hi)) {
      throw std::invalid_argument("AlignTemplate: points must lie strictly inside the output square");
    }
  }
}

double Similarity::scale() const { return std::hypot(a, b); }

double Similarity::rotation() const { return std::atan2(b, a); }

Similarity Similarity::inverse() const {
  const double d = a * a + b * b;
  if (d == 0) throw std::domain_error("Similarity: zero scale has no inverse");
  Similarity inv;
  inv.a = a / d;
  inv.b = -b / d;
  inv.tx = -(inv.a * tx - inv.b * ty);
  inv.ty = -(inv.b * tx + inv.a * ty);
  return inv;
}

Similarity fit_similarity(std::span<const Point> src, std::span<const Point> dst) {
  if (src.size() != dst.size()) throw std::invalid_argument("fit_similarity: point sets differ in size");
  if (src.size() < 2) throw std::invalid_argument("fit_similarity: need at least two point pairs");
  const double n = static_cast<double>(src.size());
  Point ms, md;
  double mag = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    ms.x += src[i].x / n;
    ms.y += src[i].y / n;
    md.x += dst[i].x / n;
    md.y += dst[i].y / n;
    mag += (src[i].x * src[i].x + src[i].y * src[i].y) / n;
  }
  double var = 0, num_a = 0, num_b = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double sx = src[i].x - ms.x, sy = src[i].y - ms.y;
    const double dx = dst[i].x - md.x, dy = dst[i].y - md.y;
    var += sx * sx + sy * sy;
    num_a += sx * dx + sy * dy;
    num_b += sx * dy - sy * dx;
  }
  if (!(var > 1e-12 * (1.0 + mag))) {
    throw std::invalid_argument("fit_similarity: degenerate source points (all coincident)");
  }
  Similarity t;
  t.a = num_a / var;
  t.b = num_b / var;
  t.tx = md.x - (t.a * ms.x - t.b * ms.y);
  t.ty = md.y - (t.b * ms.x + t.a * ms.y);
  return t;
}

double similarity_residual(const Similarity& t, std::span<const Point> src, std::span<const Point> dst) {
  double r = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Point p = t.apply(src[i]);
    r += (p.x - dst[i].x) * (p.x - dst[i].x) + (p.y - dst[i].y) * (p.y - dst[i].y);
  }
  return r;
}

AlignedFace align_crop(const FaceRecord& rec, const AlignTemplate& tpl) {
  rec.validate();
  tpl.validate();
  AlignedFace out;
  out.transform = fit_similarity(rec.landmarks, tpl.points);
  const Similarity inv = out.transform.inverse();
  const auto& src = rec.image;
  const std::size_t size = tpl.size, c = src.channels;
  const double xmax = static_cast<double>(src.width - 1), ymax = static_cast<double>(src.height - 1);
  constexpr double kSnap = 1e-9;
  out.image = Image(size, size, c);
  if (rec.labels) out.labels = Image(size, size, 1, Background);
  for (std::size_t v = 0; v < size; ++v) {
    for (std::size_t u = 0; u < size; ++u) {
      Point p = inv.apply({static_cast<double>(u), static_cast<double>(v)});
      if (std::abs(p.x - std::round(p.x)) < kSnap) p.x = std::round(p.x);
      if (std::abs(p.y - std::round(p.y)) < kSnap) p.y = std::round(p.y);
      if (p.x < 0 || p.y < 0 || p.x > xmax || p.y > ymax) continue;
      const auto x0 = static_cast<std::size_t>(std::floor(p.x)), y0 = static_cast<std::size_t>(std::floor(p.y));
      const std::size_t x1 = std::min(x0 + 1, src.width - 1), y1 = std::min(y0 + 1, src.height - 1);
      const double fx = p.x - static_cast<double>(x0), fy = p.y - static_cast<double>(y0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double top = src.at(x0, y0, ch) * (1 - fx) + src.at(x1, y0, ch) * fx;
        const double bottom = src.at(x0, y1, ch) * (1 - fx) + src.at(x1, y1, ch) * fx;
        out.image.at(u, v, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(top * (1 - fy) + bottom * fy), 0L, 255L));
      }
      if (rec.labels) {
        out.labels->at(u, v) = rec.labels->at(static_cast<std::size_t>(std::lround(p.x)),
                                              static_cast<std::size_t>(std::lround(p.y)));
      }
    }
  }
  for (std::size_t i = 0; i < 5; ++i) out.landmarks[i] = out.transform.apply(rec.landmarks[i]);
  return out;
}

IdentityParams sample_identity(Rng& rng) {
  IdentityParams p;
  p.face_rx = rng.uniform(0.55, 0.70);
  p.face_ry = rng.uniform(0.72, 0.88);
  p.eye_dx = rng.uniform(0.22, 0.34);
  p.eye_y = rng.uniform(-0.18, -0.04);
  p.eye_rx = rng.uniform(0.08, 0.13);
  p.eye_ry = rng.uniform(0.04, 0.07);
  p.brow_gap = rng.uniform(0.10, 0.17);
  p.brow_thick = rng.uniform(0.025, 0.05);
  p.brow_tilt = rng.uniform(-0.25, 0.25);
  p.nose_y = rng.uniform(0.12, 0.26);
  p.nose_w = rng.uniform(0.06, 0.11);
  p.mouth_y = rng.uniform(0.40, 0.54);
  p.mouth_w = rng.uniform(0.15, 0.28);
  p.mouth_h = rng.uniform(0.035, 0.08);
  p.hairline = rng.uniform(-0.70, -0.40);
  p.hair_side = rng.uniform(-0.20, 0.60);
  p.hair_volume = rng.uniform(0.06, 0.20);
  auto jitter = [&](std::array<double, 3> c, double amount) {
    for (auto& v : c) v = std::clamp(v + rng.uniform(-amount, amount), 0.0, 1.0);
    return c;
  };
  p.skin = jitter(lerp({0.95, 0.80, 0.70}, {0.45, 0.30, 0.20}, rng.uniform()), 0.04);
  p.hair = jitter(lerp({0.08, 0.06, 0.05}, {0.85, 0.70, 0.40}, rng.uniform()), 0.05);
  p.iris = {rng.uniform(0.1, 0.6), rng.uniform(0.1, 0.6), rng.uniform(0.1, 0.6)};
  p.lips = jitter({p.skin[0] * 0.85, p.skin[1] * 0.45, p.skin[2] * 0.5}, 0.05);
  return p;
}

FaceRecord synth_face(Rng& rng, std::size_t size, const IdentityParams& id, double nuisance) {
  if (!(nuisance >= 0)) throw std::invalid_argument("synth_face: nuisance must be non-negative");
  if (size < 32) throw std::invalid_argument("synth_face: size must be at least 32");
  const double pi = std::numbers::pi;
  const double theta = rng.uniform(-10.0, 10.0) * pi / 180.0;
  const double scale = 0.36 * static_cast<double>(size) * rng.uniform(0.92, 1.08);
  const double cx = (static_cast<double>(size) - 1) / 2 + rng.uniform(-0.04, 0.04) * static_cast<double>(size);
  const double cy = (static_cast<double>(size) - 1) / 2 + rng.uniform(-0.04, 0.04) * static_cast<double>(size);
  // Every nuisance amplitude scales with `nuisance`; the draws are the same for any strength.
  const double k = nuisance;
  const double gain = 1 + k * (rng.uniform(0.65, 1.2) - 1);
  std::array<double, 3> cast{};
  for (auto& c : cast) c = 1 + k * (rng.uniform(0.8, 1.2) - 1);
  // Per-render colour drift of every part, so appearance alone does not pin down identity.
  IdentityParams look = id;
  for (auto* part : {&look.skin, &look.hair, &look.iris, &look.lips}) {
    for (auto& c : *part) c = std::clamp(c + k * rng.uniform(-kColourDrift, kColourDrift), 0.0, 1.0);
  }
  const double light_angle = rng.uniform(0, 2 * pi), light = k * rng.uniform(0.0, 0.25);
  std::array<double, 3> bg{};
  for (auto& c : bg) c = 0.5 + k * (rng.uniform(0.35, 0.65) - 0.5);
  const double bg_angle = rng.uniform(0, 2 * pi), bg_grad = k * rng.uniform(0.0, 0.15);
  const double noise = k * rng.uniform(0.0, 0.04);
  const double ct = std::cos(theta), st = std::sin(theta);

  auto to_image = [&](double u, double v) { return Point{cx + scale * (ct * u - st * v), cy + scale * (st * u + ct * v)}; };
  // The tip disc spans at least one pixel so the nose landmark always lands on a nose pixel.
  const double tip_r = std::max(id.nose_w * 0.75, 1.0 / scale);
  const Point apex{0, id.eye_y + 0.06}, base_l{-id.nose_w, id.nose_y}, base_r{id.nose_w, id.nose_y};

  FaceRecord rec;
  rec.image = Image(size, size, 3);
  rec.labels = Image(size, size, 1, Background);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double u = (ct * dx + st * dy) / scale, v = (-st * dx + ct * dy) / scale;
      Region r = Background;
      std::array<double, 3> col{};
      if (inside_ellipse(u, v, 0, -0.08, id.face_rx + id.hair_volume, id.face_ry + 0.8 * id.hair_volume) &&
          v < id.hair_side) {
        r = Hair;
      }
      if (inside_ellipse(u, v, 0, 0.05, id.face_rx, id.face_ry)) r = v < id.hairline + 0.25 * u * u ? Hair : Skin;
      for (int s : {-1, 1}) {
        const double bu = u - s * id.eye_dx, bv = v - (id.eye_y - id.brow_gap);
        const double tilt = s * id.brow_tilt;
        const double ru = std::cos(tilt) * bu + std::sin(tilt) * bv, rv = -std::sin(tilt) * bu + std::cos(tilt) * bv;
        if (inside_ellipse(ru, rv, 0, 0, id.eye_rx * 1.35, id.brow_thick)) r = Brow;
      }
      bool iris = false, pupil = false;
      for (int s : {-1, 1}) {
        if (inside_ellipse(u, v, s * id.eye_dx, id.eye_y, id.eye_rx, id.eye_ry)) {
          r = s < 0 ? LeftEye : RightEye;
          const double d = std::hypot(u - s * id.eye_dx, v - id.eye_y);
          iris = d < id.eye_ry;
          pupil = d < 0.4 * id.eye_ry;
        }
      }
      if (inside_triangle({u, v}, apex, base_l, base_r) || inside_ellipse(u, v, 0, id.nose_y, tip_r, tip_r)) r = Nose;
      if (inside_ellipse(u, v, 0, id.mouth_y, id.mouth_w, id.mouth_h)) r = Mouth;

      switch (r) {
        case Background: {
          const double g = 1 + bg_grad * (std::cos(bg_angle) * dx + std::sin(bg_angle) * dy) / static_cast<double>(size);
          for (int c = 0; c < 3; ++c) col[c] = bg[c] * g;
          break;
        }
        case Skin: col = look.skin; break;
        case Hair: col = look.hair; break;
        case Brow: col = {look.hair[0] * 0.7, look.hair[1] * 0.7, look.hair[2] * 0.7}; break;
        case LeftEye:
        case RightEye: col = pupil ? std::array<double, 3>{0.05, 0.05, 0.05} : iris ? look.iris : std::array<double, 3>{0.92, 0.92, 0.90}; break;
        case Nose: col = {look.skin[0] * 0.85, look.skin[1] * 0.85, look.skin[2] * 0.85}; break;
        case Mouth: col = look.lips; break;
      }
      const double shade = r == Background ? 1.0 : 1.0 + light * (std::cos(light_angle) * u + std::sin(light_angle) * v);
      for (std::size_t c = 0; c < 3; ++c) {
        rec.image.at(x, y, c) = to_byte(col[c] * shade * gain * cast[c] + noise * rng.normal());
      }
      rec.labels->at(x, y) = r;
    }
  }
  rec.landmarks = {to_image(-id.eye_dx, id.eye_y), to_image(id.eye_dx, id.eye_y), to_image(0, id.nose_y),
                   to_image(-0.9 * id.mouth_w, id.mouth_y), to_image(0.9 * id.mouth_w, id.mouth_y)};
  return rec;
}

BuildReport build_corpus(const SynthSpec& spec, const AlignTemplate& tpl, const std::filesystem::path& out,
                         const Logger& log) {
  std::vector<Job> jobs;
  jobs.reserve(spec.count());
  for (std::size_t i = 0; i < spec.count(); ++i) {
    const int identity = static_cast<int>(i / spec.per_identity);
    std::ostringstream id;
    id << "synth_";
    id.width(6);
    id.fill('0');
    id << i;
    jobs.push_back({id.str(), identity, [spec, i, identity, name = id.str()] {
                      Rng id_rng = Rng(spec.seed).fork(0x1000000ULL + static_cast<std::uint64_t>(identity));
                      const auto params = sample_identity(id_rng);
                      Rng render = Rng(spec.seed).fork(i);
                      auto rec = synth_face(render, spec.render_size, params, spec.nuisance);
                      rec.id = name;
                      rec.identity = identity;
                      return rec;
                    }});
  }
  return run_jobs(jobs, tpl, out, log);
}

BuildReport build_corpus(const std::filesystem::path& landmark_manifest, const AlignTemplate& tpl,
                         const std::filesystem::path& out, const Logger& log) {
  std::ifstream in(landmark_manifest);
  if (!in) throw std::runtime_error("cannot read landmark manifest " + landmark_manifest.string());
  const auto base = landmark_manifest.parent_path();
  std::vector<Job> jobs;
  std::vector<std::string> bad;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<std::string> fields;
    for (std::string f; ls >> f;) fields.push_back(f);
    if (fields.empty() || fields[0].starts_with('#')) continue;
    if (fields.size() != 12) {
      bad.push_back((fields.empty() ? "line " + std::to_string(line_no) : fields[0]) + ": expected id, path and 5 landmark pairs");
      continue;
    }
    Landmarks lm;
    try {
      for (std::size_t k = 0; k < 5; ++k) lm[k] = {std::stod(fields[2 + 2 * k]), std::stod(fields[3 + 2 * k])};
    } catch (const std::exception&) {
      bad.push_back(fields[0] + ": unparseable landmark");
      continue;
    }
    const auto path = base / fields[1];
    jobs.push_back({fields[0], std::nullopt, [path, lm, id = fields[0]] {
                      FaceRecord rec;
                      rec.id = id;
                      rec.image = read_raw(path);
                      rec.landmarks = lm;
                      return rec;
                    }});
  }
  auto report = run_jobs(jobs, tpl, out, log);
  for (const auto& b : bad) {
    report.skipped.push_back(b);
    if (log) log("skipped " + b);
  }
  return report;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& corpus_dir) {
  std::ifstream in(corpus_dir / "manifest.json");
  if (!in) throw std::runtime_error("cannot read " + (corpus_dir / "manifest.json").string());
  const auto j = nlohmann::json::parse(in);
  std::vector<ManifestEntry> out;
  for (const auto& e : j) out.push_back(from_json(e));
  return out;
}

std::uint64_t record_checksum(const std::filesystem::path& corpus_dir, const ManifestEntry& e) {
  const auto img = read_bytes(image_path(corpus_dir, e.id));
  if (!e.has_labels) return checksum_of(img, nullptr);
  const auto lbl = read_bytes(label_path(corpus_dir, e.id));
  return checksum_of(img, &lbl);
}

Corpus load_corpus(const std::filesystem::path& corpus_dir, std::optional<std::size_t> size) {
  Corpus c;
  for (const auto& e : read_manifest(corpus_dir)) {
    auto img = read_raw(image_path(corpus_dir, e.id));
    std::optional<Image> lbl;
    if (e.has_labels) lbl = read_raw(label_path(corpus_dir, e.id));
    Landmarks lm = e.landmarks;
    if (size && *size != img.width) {
      const double f = static_cast<double>(*size) / static_cast<double>(img.width);
      img = downsample(img, *size);
      if (lbl) lbl = downsample_labels(*lbl, *size);
      // Box-filter centres: output pixel k covers input pixels [k/f, (k+1)/f).
      for (auto& p : lm) p = {(p.x + 0.5) * f - 0.5, (p.y + 0.5) * f - 0.5};
    }
    c.images.push_back(std::move(img));
    c.labels.push_back(std::move(lbl));
    c.identities.push_back(e.identity);
    c.landmarks.push_back(lm);
    c.ids.push_back(e.id);
  }
  return c;
}

}  // namespace mcf
