// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0
//
// `mcf`: pre-training, gradient checks, ablations, corpus building and the
// frozen-encoder probes. Exit status 0 on success, 1 when input or a
// verification is rejected, 2 when a run fails.

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mcf/config.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::size_t> depth;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> keep_count;
  std::string m1 = "trained";
  std::string corpus;
};

void add_common(CLI::App& cmd, CommonOptions& o) {
  cmd.add_option("--config", o.config, "Experiment config (key = value with [sections])");
  cmd.add_option("--seed", o.seed, "Seed for every stochastic choice of the run");
  cmd.add_option("--mode", o.mode, "Loss mode: pixel_l2, pixel_plus_feature, feature_only, feature_con_cls, feature_con_patch");
  cmd.add_option("--depth", o.depth, "Decoder (M0) depth");
  cmd.add_option("--epochs", o.epochs, "Pre-training epochs");
  cmd.add_option("--keep-count-override", o.keep_count, "Visible patches per view instead of the mask ratio");
  cmd.add_option("--m1", o.m1, "Frozen M1: trained, random or a checkpoint path")->capture_default_str();
  cmd.add_option("--corpus", o.corpus, "Corpus directory (built or healed from [data] when synthetic)");
}

mcf::ExperimentConfig resolve_config(const CommonOptions& o) {
  auto cfg = o.config.empty() ? mcf::ExperimentConfig::toy() : mcf::load_config(o.config);
  try {
    if (o.seed) {
      cfg.train.seed = *o.seed;
      cfg.probe.seed = *o.seed;
      cfg.segprobe.seed = *o.seed;
    }
    if (o.mode) cfg.train.model.mode.variant = mcf::parse_loss_variant(*o.mode);
    if (o.depth) cfg.train.model.decoder.depth = *o.depth;
    if (o.epochs) cfg.train.epochs = *o.epochs;
    if (o.keep_count) cfg.train.model.keep_count_override = *o.keep_count;
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw mcf::ConfigError(e.what());
  }
  return cfg;
}

mcf::M1Source resolve_m1_source(const CommonOptions& o) {
  try {
    auto source = mcf::parse_m1_source(o.m1);
    if (const auto* p = std::get_if<fs::path>(&source); p && !fs::exists(*p)) {
      throw mcf::ConfigError("--m1: no such checkpoint " + p->string());
    }
    return source;
  } catch (const std::invalid_argument& e) {
    throw mcf::ConfigError(e.what());
  }
}

mcf::Logger stderr_logger() {
  return [](const std::string& line) { std::cerr << line << '\n'; };
}

mcf::Dataset open_corpus(const mcf::ExperimentConfig& cfg, const fs::path& dir) {
  // A directory with a manifest but no synthetic provenance is loaded as is.
  if (fs::exists(dir / "manifest.json") && !fs::exists(dir / "synth.cfg")) {
    return mcf::load_dataset(dir, cfg.image_size, cfg.test_fraction);
  }
  auto data = mcf::prepare_synthetic(cfg, dir, stderr_logger());
  std::ofstream(dir / "synth.cfg") << mcf::to_config_text(cfg);
  return data;
}

fs::path corpus_dir(const CommonOptions& o, const fs::path& out) {
  return o.corpus.empty() ? out / "corpus" : fs::path(o.corpus);
}

std::string relative_to(const fs::path& p, const fs::path& base) { return fs::relative(p, base).generic_string(); }

mcf::RunManifest begin_manifest(const std::string& command, const mcf::ExperimentConfig& cfg) {
  mcf::RunManifest m;
  m.command = command;
  m.config = mcf::to_config_text(cfg);
  m.seed = cfg.train.seed;
  m.code_version = MCF_VERSION;
  m.started = mcf::utc_timestamp();
  return m;
}

void finish_manifest(mcf::RunManifest& m, const fs::path& out) {
  m.finished = mcf::utc_timestamp();
  for (const auto& entry : fs::recursive_directory_iterator(out)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = relative_to(entry.path(), out);
    if (rel == "manifest.json" || rel.starts_with("corpus/")) continue;
    m.artifacts.push_back(rel);
  }
  std::sort(m.artifacts.begin(), m.artifacts.end());
  mcf::write_run_manifest(out, m);
}

mcf::ViTParams<float> encoder_from(const std::string& checkpoint, const mcf::ExperimentConfig& cfg) {
  if (checkpoint.empty()) return mcf::random_encoder(cfg);
  if (!fs::exists(checkpoint)) throw mcf::ConfigError("no such checkpoint " + checkpoint);
  return mcf::load_vit(checkpoint, cfg.train.model.encoder, "student");
}

int cmd_pretrain(const CommonOptions& o, const std::string& out_text) {
  const auto cfg = resolve_config(o);
  const auto source = resolve_m1_source(o);
  const fs::path out(out_text);
  fs::create_directories(out);
  auto manifest = begin_manifest("pretrain", cfg);
  const auto data = open_corpus(cfg, corpus_dir(o, out));
  const auto images = data.train.empty() ? data.images : data.images_at(data.train);
  const auto result = mcf::run_pretrain(cfg, images, source, out);
  std::ofstream(out / "config.cfg") << manifest.config;
  finish_manifest(manifest, out);
  std::cout << "steps " << result.steps << "  final loss " << std::setprecision(6) << result.final_loss << '\n'
            << "run directory " << out.string() << '\n';
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& fault) {
  if (!fault.empty()) mcf::testing::set_backward_fault(fault, 0.01);
  bool ok = true;
  auto report = [&](const mcf::StructureCheck& c) {
    ok = ok && c.passed;
    std::cout << (c.passed ? "ok    " : "FAIL  ") << std::left << std::setw(34) << c.name << " value "
              << std::scientific << std::setprecision(3) << c.value << "  threshold " << c.threshold
              << std::defaultfloat << "  " << c.description << '\n';
  };
  std::cout << "gradient structure\n";
  for (const auto& c : mcf::verify_gradient_structure(mcf::tiny_structure_config(), seed).checks) report(c);
  std::cout << "primitives (worst relative error)\n";
  for (const auto& c : mcf::primitive_gradchecks(seed)) report(c);
  std::cout << "compositions (worst relative error)\n";
  for (const auto& c : mcf::composite_gradchecks(seed)) report(c);
  std::cout << (ok ? "all gradient checks passed\n" : "gradient checks FAILED\n");
  return ok ? kOk : kValidation;
}

int cmd_ablate(const CommonOptions& o, const std::string& out_text) {
  const auto cfg = resolve_config(o);
  const auto source = resolve_m1_source(o);
  const fs::path out(out_text);
  fs::create_directories(out);
  auto manifest = begin_manifest("ablate", cfg);
  const auto data = open_corpus(cfg, corpus_dir(o, out));
  if (data.identities.empty()) throw mcf::ConfigError("ablate: corpus has no identity labels for the probe");
  std::cout << std::left << std::setw(22) << "mode" << std::setw(7) << "depth" << std::setw(14) << "final loss"
            << "probe acc\n";
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  mcf::run_ablation(cfg, data, source, out, [&](const mcf::AblationRow& r) {
    std::cout << std::left << std::setw(22) << mcf::to_string(r.mode) << std::setw(7) << r.depth << std::setw(14)
              << std::setprecision(6) << r.final_loss << std::setprecision(4) << r.probe_accuracy << std::endl;
    table.push_back({{"mode", mcf::to_string(r.mode)},
                     {"depth", r.depth},
                     {"final_loss", r.final_loss},
                     {"probe_accuracy", r.probe_accuracy}});
  });
  std::ofstream(out / "ablation.json") << table.dump(2) << '\n';
  finish_manifest(manifest, out);
  return kOk;
}

int cmd_align_crop(const CommonOptions& o, const std::string& out_text, const std::string& landmarks,
                   std::size_t size) {
  auto cfg = resolve_config(o);
  if (o.seed) cfg.data.seed = *o.seed;
  const fs::path out(out_text);
  const auto tpl = mcf::AlignTemplate::standard(size ? size : cfg.data.render_size);
  const auto report = landmarks.empty() ? mcf::build_corpus(cfg.data, tpl, out, stderr_logger())
                                        : mcf::build_corpus(fs::path(landmarks), tpl, out, stderr_logger());
  if (landmarks.empty()) std::ofstream(out / "synth.cfg") << mcf::to_config_text(cfg);
  std::cout << "written " << report.written << "  reused " << report.reused << "  rebuilt "
            << report.rebuilt_ids.size() << "  skipped " << report.skipped.size() << "  records "
            << report.manifest.size() << '\n';
  for (const auto& s : report.skipped) std::cout << "skipped " << s << '\n';
  return kOk;
}

int cmd_probe(const CommonOptions& o, const std::string& out_text, const std::string& checkpoint) {
  const auto cfg = resolve_config(o);
  const fs::path out(out_text);
  const auto data = open_corpus(cfg, corpus_dir(o, out));
  if (data.identities.empty()) throw mcf::ConfigError("probe: corpus has no identity labels");
  const auto r = mcf::identity_probe(encoder_from(checkpoint, cfg), data, cfg.probe);
  nlohmann::ordered_json j{{"encoder", checkpoint.empty() ? "random" : checkpoint},
                           {"classes", r.classes},
                           {"train_accuracy", r.train_accuracy},
                           {"test_accuracy", r.test_accuracy}};
  std::cout << j.dump() << '\n'
            << "identity probe: " << r.classes << " classes, train " << std::setprecision(4) << r.train_accuracy
            << "%, test " << r.test_accuracy << "%\n";
  return kOk;
}

int cmd_segprobe(const CommonOptions& o, const std::string& out_text, const std::string& checkpoint, bool memorize) {
  auto cfg = resolve_config(o);
  const fs::path out(out_text);
  const auto data = open_corpus(cfg, corpus_dir(o, out));
  if (!data.has_labels()) throw mcf::ConfigError("segprobe: corpus has no label maps");
  const auto encoder = encoder_from(checkpoint, cfg);
  mcf::SegProbeResult r;
  if (memorize) {
    // One image, trained and scored on itself.
    const std::vector<std::size_t> one{0};
    const auto img = data.images_at(one);
    const auto lab = data.labels_at(one);
    r = mcf::segmentation_probe(encoder, img, lab, img, lab, mcf::kNumRegions, cfg.segprobe);
  } else {
    r = mcf::parsing_probe(encoder, data, cfg);
  }
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (std::size_t c = 1; c < r.test_f1.per_class.size(); ++c) {
    if (r.test_f1.per_class[c]) per_class[mcf::kRegionNames[c]] = *r.test_f1.per_class[c];
  }
  nlohmann::ordered_json j{{"encoder", checkpoint.empty() ? "random" : checkpoint},
                           {"memorize", memorize},
                           {"train_mean_f1", r.train_mean_f1},
                           {"train_pixel_accuracy", r.train_pixel_accuracy},
                           {"test_mean_f1", r.test_mean_f1},
                           {"test_f1", per_class}};
  std::cout << j.dump() << '\n' << std::left;
  for (const auto& [name, f1] : per_class.items()) {
    std::cout << std::setw(10) << name << std::setprecision(4) << f1.get<double>() << '\n';
  }
  std::cout << std::setw(10) << "mean" << std::setprecision(4) << r.test_mean_f1 << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef _OPENMP
  if (const char* threads = std::getenv("MCF_THREADS")) {
    const int n = std::atoi(threads);
    if (n > 0) omp_set_num_threads(n);
  }
#endif
  CLI::App app{"Mask Contrastive Face pre-training and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", MCF_VERSION);

  CommonOptions common;
  std::string out;
  auto* pretrain = app.add_subcommand("pretrain", "Pre-train an encoder and write a run directory");
  add_common(*pretrain, common);
  pretrain->add_option("--out", out, "Run directory (created if missing)")->required();

  std::uint64_t gc_seed = 0;
  std::string fault;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference and gradient-structure checks");
  gradcheck->add_option("--seed", gc_seed, "Seed for the random test inputs");
  gradcheck->add_option("--inject-fault", fault, "Corrupt one primitive's backward rule")->group("");

  auto* ablate = app.add_subcommand("ablate", "Loss-mode and decoder-depth grid with identity probes");
  add_common(*ablate, common);
  ablate->add_option("--out", out, "Output directory")->required();

  std::string landmarks;
  std::size_t template_size = 0;
  auto* align = app.add_subcommand("align-crop", "Build or heal an aligned corpus");
  add_common(*align, common);
  align->add_option("--out", out, "Corpus directory")->required();
  align->add_option("--landmarks", landmarks, "Landmark manifest of real images (default: synthetic faces)");
  align->add_option("--size", template_size, "Crop size (default: data.render_size)");

  std::string checkpoint;
  auto* probe = app.add_subcommand("probe", "Linear identity probe on frozen class tokens");
  add_common(*probe, common);
  probe->add_option("--out", out, "Working directory for the corpus")->required();
  probe->add_option("--checkpoint", checkpoint, "Pre-training checkpoint (default: random encoder)");

  bool memorize = false;
  auto* segprobe = app.add_subcommand("segprobe", "Dense parsing head on frozen features");
  add_common(*segprobe, common);
  segprobe->add_option("--out", out, "Working directory for the corpus")->required();
  segprobe->add_option("--checkpoint", checkpoint, "Pre-training checkpoint (default: random encoder)");
  segprobe->add_flag("--memorize", memorize, "Train and score on a single image");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*pretrain) return cmd_pretrain(common, out);
    if (*gradcheck) return cmd_gradcheck(gc_seed, fault);
    if (*ablate) return cmd_ablate(common, out);
    if (*align) return cmd_align_crop(common, out, landmarks, template_size);
    if (*probe) return cmd_probe(common, out, checkpoint);
    if (*segprobe) return cmd_segprobe(common, out, checkpoint, memorize);
  } catch (const mcf::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
