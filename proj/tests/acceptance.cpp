// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance runner: one PASS/FAIL line per criterion. Exits non-zero only
// when a check cannot run at all (an unexpected exception); a failed
// criterion is reported, not hidden.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>

#include "CLI11.hpp"
#include "mcf/experiment.hpp"
#include "mcf/gradcheck.hpp"
#include "mcf/masking.hpp"
#include "mcf/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace mcf;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

McfModel<double> tiny_model(std::uint64_t seed = 0) {
  Rng rng(seed);
  return McfModel<double>::init(tiny_structure_config(), rng);
}

std::vector<double> flat_grads(const ParamList<double>& params) {
  std::vector<double> g;
  for (const auto& p : params) {
    const auto c = test::grad_copy(p.tensor);
    g.insert(g.end(), c.begin(), c.end());
  }
  return g;
}

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  auto checks = primitive_gradchecks(0, 1e-4);
  const auto comp = composite_gradchecks(0, 1e-4);
  checks.insert(checks.end(), comp.begin(), comp.end());
  const double secs = seconds_since(t0);
  double worst = 0;
  std::string worst_name;
  bool ok = true;
  for (const auto& c : checks) {
    ok = ok && c.passed;
    if (c.value >= worst) worst = c.value, worst_name = c.name;
  }
  return {ok && secs < 120, fmt("%zu checks, worst %.2e (%s), %.1f s", checks.size(), worst, worst_name.c_str(), secs)};
}

Outcome additivity() {
  auto m = tiny_model();
  Rng rng(14);
  const auto images = test::random_tensor<double>({3, 8, 8, 3}, rng, 0, 1);
  const auto [mb, mo] = draw_masks(rng, 3, m.cfg);
  const auto params = m.trainable();
  auto grads = [&](const std::function<Tensor<double>()>& f) {
    zero_grad(params);
    backward(f());
    return flat_grads(params);
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
  const double rel = std::sqrt(num / den);
  return {rel <= 1e-10, fmt("relative deviation %.2e over %zu gradient entries", rel, total.size())};
}

Outcome frozen_suffix(const std::string& cli) {
  const auto report = verify_gradient_structure(tiny_structure_config(), 0);
  std::string names;
  for (const auto& c : report.checks) names += fmt("%s %s=%.2e; ", c.passed ? "ok" : "FAIL", c.name.c_str(), c.value);
  const int status = std::system((cli + " gradcheck > /dev/null 2>&1").c_str());
  const bool cli_ok = status == 0;
  return {report.passed() && cli_ok, names + (cli_ok ? "gradcheck exit 0" : "gradcheck exit non-zero")};
}

Outcome loss_identities() {
  auto m = tiny_model();
  Rng rng(2);
  const auto images = test::random_tensor<double>({2, 8, 8, 3}, rng, 0, 1);
  const auto [mb, mo] = draw_masks(rng, 2, m.cfg);
  const double mim = mim_loss_from<double>(images.clone(), images, mb, m).item();
  bool ok = std::abs(mim) <= 1e-9;
  std::string detail = fmt("perfect mim %.1e", mim);
  for (std::size_t n : {2u, 4u, 16u}) {
    auto q = Tensor<double>::zeros({n, 3});
    auto k = Tensor<double>::zeros({n, 3});
    for (std::size_t i = 0; i < n; ++i) {
      q.data()[i * 3] = 1.0;
      k.data()[i * 3] = 0.8;
      k.data()[i * 3 + 1] = 0.6;
    }
    const double v = info_nce(q, k, 0.2).item();
    ok = ok && std::abs(v - std::log(double(n))) <= 1e-6;
    detail += fmt("; N=%zu %.2e off ln N", n, std::abs(v - std::log(double(n))));
  }
  const auto one = test::random_tensor<double>({1, 8, 8, 3}, rng, 0, 1);
  const auto [m1b, m1o] = draw_masks(rng, 1, m.cfg);
  const double single = contrastive_loss<double>(one, m1b, m1o, m, 0.2).item();
  ok = ok && single == 0.0;
  return {ok, detail + fmt("; N=1 gives %.1e", single)};
}

Outcome frozen_and_ema() {
  TrainConfig cfg;
  cfg.model = tiny_structure_config();
  cfg.micro_batch = 4;
  cfg.accumulation_steps = 2;
  cfg.epochs = 200;
  cfg.warmup_epochs = 10;
  cfg.peak_lr = 1e-3;
  cfg.seed = 7;
  cfg.max_steps = 500;
  cfg.augment.enabled = true;
  Rng data(1);
  const auto images = test::random_tensor<double>({24, 8, 8, 3}, data, 0, 1);
  Rng init = Rng(cfg.seed).fork(0);
  Trainer<double> t(cfg, McfModel<double>::init(cfg.model, init), images);
  const auto m1_before = t.model().m1.clone();
  std::vector<std::vector<double>> expect;
  for (const auto& p : t.model().teacher_params()) expect.push_back(test::values(p.tensor));
  const double mu = cfg.model.momentum;
  std::size_t steps = 0;
  t.set_step_hook([&](const StepMetrics&, const McfModel<double>& m) {
    const auto src = m.ema_source();
    for (std::size_t i = 0; i < src.size(); ++i) {
      const auto s = src[i].tensor.data();
      for (std::size_t j = 0; j < s.size(); ++j) expect[i][j] = mu * expect[i][j] + (1 - mu) * s[j];
    }
    ++steps;
  });
  t.train();
  double teacher_err = 0;
  const auto now = t.model().teacher_params();
  for (std::size_t i = 0; i < now.size(); ++i) {
    teacher_err = std::max(teacher_err, test::max_abs_diff(test::values(now[i].tensor), expect[i]));
  }
  bool m1_same = true;
  const auto a = t.model().m1_params();
  const auto b = m1_before.params("m1");
  for (std::size_t i = 0; i < a.size(); ++i) m1_same = m1_same && test::values(a[i].tensor) == test::values(b[i].tensor);
  return {steps == 500 && m1_same && teacher_err <= 1e-6,
          fmt("%zu steps, M1 %s, teacher vs closed-form EMA %.2e", steps, m1_same ? "bit-identical" : "CHANGED",
              teacher_err)};
}

Outcome masking_statistics() {
  const std::size_t k = keep_count(196, 0.75);
  Rng rng(5);
  std::vector<int> hits(16, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    for (auto idx : generate_mask(rng, 16, 0.5).kept) ++hits[idx];
  }
  double worst = 0;
  for (int h : hits) worst = std::max(worst, std::abs(h / double(draws) - 0.5));
  return {k == 49 && worst <= 0.02, fmt("keep_count(196, 0.75) = %zu; max |freq - 0.5| = %.4f", k, worst)};
}

Outcome accumulation() {
  TrainConfig cfg;
  cfg.model = tiny_structure_config();
  cfg.model.mode.variant = LossVariant::PixelPlusFeature;
  cfg.micro_batch = 4;
  cfg.accumulation_steps = 2;
  cfg.epochs = 3;
  cfg.peak_lr = 1e-3;
  cfg.seed = 7;
  Rng rng(3);
  const auto images = test::random_tensor<double>({8, 8, 8, 3}, rng, 0, 1);
  const auto [mb, mo] = draw_masks(rng, 8, cfg.model);
  auto run = [&](std::size_t micro) {
    Rng init = Rng(cfg.seed).fork(0);
    Trainer<double> t(cfg, McfModel<double>::init(cfg.model, init), images);
    std::vector<Tensor<double>> batches;
    std::vector<std::vector<MaskSpec>> bmb, bmo;
    for (std::size_t s = 0; s < 8; s += micro) {
      batches.push_back(slice(images, 0, s, micro).detach());
      bmb.emplace_back(mb.begin() + static_cast<std::ptrdiff_t>(s), mb.begin() + static_cast<std::ptrdiff_t>(s + micro));
      bmo.emplace_back(mo.begin() + static_cast<std::ptrdiff_t>(s), mo.begin() + static_cast<std::ptrdiff_t>(s + micro));
    }
    t.accumulate(batches, bmb, bmo);
    AdamW<double> opt(t.model().trainable(), cfg.adamw());
    opt.step(1e-3);
    std::vector<double> params;
    for (const auto& p : t.model().trainable()) {
      params.insert(params.end(), p.tensor.data().begin(), p.tensor.data().end());
    }
    return params;
  };
  const double diff = test::max_abs_diff(run(8), run(1));
  return {diff <= 1e-6, fmt("1x8 vs 8x1 max parameter difference %.2e", diff)};
}

Outcome schedule() {
  TrainConfig cfg;  // peak 0.016, 16 epochs, 1 warmup epoch
  const std::size_t spe = 100;
  const double peak = lr_at(spe - 1, cfg, spe);
  const double last = lr_at(16 * spe - 1, cfg, spe);
  const std::size_t anchor = spe - 1, mid = anchor + (16 * spe - 1 - anchor) / 2;
  const double half = lr_at(mid, cfg, spe);
  return {peak == 0.016 && last == 0.0 && std::abs(half - 0.008) <= 1e-12,
          fmt("warmup end %.6g, final %.3g, midpoint %.15g", peak, last, half)};
}

Outcome alignment(const fs::path& work) {
  Rng rng(2);
  auto points = [&] {
    Landmarks p;
    for (auto& q : p) q = {rng.uniform(20, 200), rng.uniform(20, 200)};
    return p;
  };
  double worst_fit = 0;
  for (int i = 0; i < 100; ++i) {
    const auto src = points(), dst = points();
    const auto o = oracle::similarity_normal_equations(src, dst);
    const double r = similarity_residual(fit_similarity(src, dst), src, dst);
    const double ro = similarity_residual(Similarity{o[0], o[1], o[2], o[3]}, src, dst);
    worst_fit = std::max(worst_fit, std::abs(r - ro) / std::max(1.0, ro));
  }
  const auto tpl = AlignTemplate::standard(256);
  double worst_px = 0;
  for (int i = 0; i < 20; ++i) {
    const double s = rng.uniform(0.6, 1.2), th = rng.uniform(-0.5, 0.5);
    const Similarity warp{s * std::cos(th), s * std::sin(th), rng.uniform(40, 80), rng.uniform(40, 80)};
    FaceRecord rec;
    rec.id = "x";
    rec.image = Image(400, 400, 3, 90);
    for (std::size_t k = 0; k < 5; ++k) rec.landmarks[k] = warp.apply(tpl.points[k]);
    const auto out = align_crop(rec, tpl);
    for (std::size_t k = 0; k < 5; ++k) {
      worst_px = std::max(worst_px, std::hypot(out.landmarks[k].x - tpl.points[k].x, out.landmarks[k].y - tpl.points[k].y));
    }
  }
  const auto dir = work / "align_corpus";
  fs::remove_all(dir);
  const SynthSpec spec{3, 4, 64, 5, 1.0};
  const auto small = AlignTemplate::standard(64);
  build_corpus(spec, small, dir);
  const auto again = build_corpus(spec, small, dir);
  const auto target = dir / "images/synth_000005.raw";
  const auto original = read_bytes(target);
  {
    std::fstream f(target, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    f.put(static_cast<char>(original[40] ^ 0x5a));
  }
  const auto healed = build_corpus(spec, small, dir);
  const bool idempotent = again.written == 0 && again.reused == 12;
  const bool self_healing = healed.rebuilt_ids == std::vector<std::string>{"synth_000005"} && read_bytes(target) == original;
  fs::remove_all(dir);
  return {worst_fit <= 1e-8 && worst_px <= 0.5 && idempotent && self_healing,
          fmt("residual vs oracle %.1e, landmark error %.3f px, rerun writes %zu, tamper rebuilds %zu", worst_fit,
              worst_px, again.written, healed.rebuilt_ids.size())};
}

Outcome metric_oracles() {
  Rng rng(0);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t classes = 2 + rng.uniform_index(7), n = 1 + rng.uniform_index(300);
    std::vector<std::uint8_t> p(n), t(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<std::uint8_t>(rng.uniform_index(classes));
      p[i] = rng.uniform() < 0.6 ? t[i] : static_cast<std::uint8_t>(rng.uniform_index(classes));
    }
    const auto r = f1_scores(p, t, classes);
    for (std::size_t c = 0; c < classes; ++c) {
      if (r.per_class[c]) worst = std::max(worst, std::abs(*r.per_class[c] - oracle::f1(p, t, static_cast<std::uint8_t>(c))));
    }
    std::vector<Point> pt(2 + rng.uniform_index(60)), tt(pt.size());
    for (auto& q : pt) q = {rng.uniform(0, 100), rng.uniform(0, 100)};
    for (auto& q : tt) q = {rng.uniform(0, 100), rng.uniform(0, 100)};
    worst = std::max(worst, std::abs(nme(pt, tt, nme_normalizer(tt, NmeNorm::Diag)) - oracle::nme_diag(pt, tt)));
    std::vector<double> e(1 + rng.uniform_index(50));
    for (auto& v : e) v = rng.uniform(0, 15);
    const double thr = rng.uniform(1, 12);
    const auto fa = fr_auc(e, thr);
    worst = std::max({worst, std::abs(fa.auc - oracle::ced_auc(e, thr)), std::abs(fa.fr - oracle::failure_rate(e, thr))});
  }
  return {worst <= 1e-9, fmt("100 random cases each of f1, nme, fr/auc; worst deviation %.1e", worst)};
}

struct ToyResults {
  std::vector<double> probe_gain, seg_gain;
  std::string detail_probe, detail_seg;
  double seconds = 0;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

ToyResults toy_transfer(const fs::path& work, const std::vector<std::uint64_t>& seeds) {
  const auto t0 = std::chrono::steady_clock::now();
  ToyResults r;
  auto base = ExperimentConfig::toy();
  const auto data = prepare_synthetic(base, work / "toy_corpus");
  const auto train_images = data.images_at(data.train);
  for (auto seed : seeds) {
    auto cfg = base;
    cfg.train.seed = cfg.probe.seed = cfg.segprobe.seed = seed;
    const auto outcome = run_pretrain(cfg, train_images, M1Trained{});
    const auto scratch = random_encoder(cfg);
    const double pre = identity_probe(outcome.model.student, data, cfg.probe).test_accuracy;
    const double rnd = identity_probe(scratch, data, cfg.probe).test_accuracy;
    const double pre_f1 = parsing_probe(outcome.model.student, data, cfg).test_mean_f1;
    const double rnd_f1 = parsing_probe(scratch, data, cfg).test_mean_f1;
    r.probe_gain.push_back(pre - rnd);
    r.seg_gain.push_back(pre_f1 - rnd_f1);
    r.detail_probe += fmt("seed %llu: %.2f vs %.2f; ", static_cast<unsigned long long>(seed), pre, rnd);
    r.detail_seg += fmt("seed %llu: %.2f vs %.2f; ", static_cast<unsigned long long>(seed), pre_f1, rnd_f1);
    std::cerr << "toy seed " << seed << " done after " << seconds_since(t0) << " s\n";
  }
  r.seconds = seconds_since(t0);
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work_text;
  std::vector<int> only;
  std::string cli = MCF_CLI;
  std::string report_path;
  app.add_option("--work", work_text, "Scratch directory (default: a fresh temp directory)");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--cli", cli, "Path to the mcf binary");
  app.add_option("--report", report_path, "Also write the PASS/FAIL lines to this file");
  CLI11_PARSE(app, argc, argv);

  std::optional<test::TempDir> temp;
  fs::path work;
  if (work_text.empty()) {
    temp.emplace("acceptance");
    work = temp->path();
  } else {
    work = work_text;
    fs::create_directories(work);
  }

  std::ofstream report_file;
  if (!report_path.empty()) report_file.open(report_path, std::ios::trunc);

  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  bool crashed = false;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    if (!wanted(id)) return;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
      crashed = true;
    }
    Graph<double>::local().clear();
    Graph<float>::local().clear();
    std::ostringstream line;
    line << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << name << ": " << o.detail << '\n';
    std::cout << line.str() << std::flush;
    if (report_file) report_file << line.str() << std::flush;
  };

  report(1, "gradient correctness", gradient_correctness);
  report(2, "weighted-sum gradient additivity", additivity);
  report(3, "frozen-suffix gradient structure", [&] { return frozen_suffix(cli); });
  report(4, "loss identities", loss_identities);
  report(5, "frozen M1 and EMA teacher over 500 steps", frozen_and_ema);
  report(6, "masking statistics", masking_statistics);
  report(7, "accumulation equivalence", accumulation);
  report(8, "learning-rate schedule", schedule);
  report(9, "alignment pipeline", [&] { return alignment(work); });

  if (wanted(10) || wanted(11)) {
    std::optional<ToyResults> toy;
    std::string error;
    try {
      toy = toy_transfer(work, {0, 1, 2});
    } catch (const std::exception& e) {
      error = e.what();
      crashed = true;
    }
    report(10, "toy identity probe, pre-trained vs random init", [&]() -> Outcome {
      if (!toy) throw std::runtime_error(error);
      const double m = median(toy->probe_gain);
      return {m >= 10 && toy->seconds <= 1800, toy->detail_probe + fmt("median gain %.2f points, %.0f s", m, toy->seconds)};
    });
    report(11, "toy parsing probe, pre-trained vs random init", [&]() -> Outcome {
      if (!toy) throw std::runtime_error(error);
      const double m = median(toy->seg_gain);
      return {m >= 2, toy->detail_seg + fmt("median gain %.2f F1 points", m)};
    });
  }
  report(12, "metric implementations vs brute force", metric_oracles);
  return crashed ? 1 : 0;
}
