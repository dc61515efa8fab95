// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcf/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <cmath>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace mcf {

void ExperimentConfig::validate() const {
  train.validate();
  if (data.identities == 0 || data.per_identity == 0) throw std::invalid_argument("data: corpus is empty");
  if (image_size != train.model.encoder.image_size) {
    throw std::invalid_argument("data.image_size " + std::to_string(image_size) + " differs from encoder.image_size " +
                                std::to_string(train.model.encoder.image_size));
  }
  if (data.render_size < image_size || data.render_size % image_size != 0) {
    throw std::invalid_argument("data.render_size must be a multiple of data.image_size");
  }
  if (!(test_fraction >= 0 && test_fraction < 1)) throw std::invalid_argument("data.test_fraction must lie in [0, 1)");
  if (m1_pretrain.batch < 2) throw std::invalid_argument("m1_pretrain.batch must be at least 2");
  if (!(m1_pretrain.mask_ratio >= 0 && m1_pretrain.mask_ratio < 1)) {
    throw std::invalid_argument("m1_pretrain.mask_ratio must lie in [0, 1)");
  }
  if (!(m1_pretrain.temperature > 0)) throw std::invalid_argument("m1_pretrain.temperature must be positive");
  if (segprobe.batch == 0 || segprobe.width == 0 || segprobe.hidden == 0) {
    throw std::invalid_argument("segprobe: batch, width and hidden must be positive");
  }
}

ExperimentConfig ExperimentConfig::toy() {
  ExperimentConfig c;
  c.data = {100, 20, 64, 0};
  c.image_size = 32;
  auto& m = c.train.model;
  m.encoder = {32, 8, 3, 4, 64, 4, 2.0};
  m.m1 = {32, 8, 3, 2, 64, 4, 2.0};
  m.decoder = {2, 64, 4, 2.0};
  m.mode = {LossVariant::FeaturePlusConCls, 1.0, 1.0};
  m.mask_ratio = 0.75;
  m.temperature = 0.2;
  m.momentum = 0.99;
  m.head_hidden = 128;
  m.head_dim = 64;
  c.train.micro_batch = 64;
  c.train.accumulation_steps = 1;
  c.train.epochs = 8;
  c.train.warmup_epochs = 1;
  c.train.peak_lr = 1e-3;
  c.train.augment.enabled = true;
  return c;
}

Tensor<float> Dataset::images_at(std::span<const std::size_t> rows) const {
  const std::size_t per = size * size * 3;
  auto out = Tensor<float>::zeros({rows.size(), size, size, 3});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * per), per,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

std::vector<std::uint8_t> Dataset::labels_at(std::span<const std::size_t> rows) const {
  if (!has_labels()) throw std::invalid_argument("dataset has no label maps");
  const std::size_t per = size * size;
  std::vector<std::uint8_t> out(rows.size() * per);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(labels.begin() + static_cast<std::ptrdiff_t>(rows[i] * per), per,
                out.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& corpus_dir, std::size_t image_size, double test_fraction) {
  auto corpus = load_corpus(corpus_dir, image_size);
  if (corpus.images.empty()) throw std::runtime_error("corpus " + corpus_dir.string() + " has no records");
  Dataset d;
  d.size = image_size;
  d.images = to_tensor<float>(corpus.images);
  const bool labeled = std::all_of(corpus.labels.begin(), corpus.labels.end(), [](const auto& l) { return l.has_value(); });
  if (labeled) {
    for (const auto& l : corpus.labels) d.labels.insert(d.labels.end(), l->pixels.begin(), l->pixels.end());
  }
  const bool identified =
      std::all_of(corpus.identities.begin(), corpus.identities.end(), [](const auto& i) { return i.has_value(); });
  if (!identified) return d;
  // Identities are remapped to dense indices; the last images of each identity form the test split.
  std::map<int, std::vector<std::size_t>> by_identity;
  for (std::size_t i = 0; i < corpus.identities.size(); ++i) by_identity[*corpus.identities[i]].push_back(i);
  d.identities.resize(corpus.identities.size());
  int dense = 0;
  for (const auto& [id, rows] : by_identity) {
    const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(rows.size()) * test_fraction));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      d.identities[rows[k]] = dense;
      (k + n_test < rows.size() ? d.train : d.test).push_back(rows[k]);
    }
    ++dense;
  }
  std::sort(d.train.begin(), d.train.end());
  std::sort(d.test.begin(), d.test.end());
  return d;
}

Dataset prepare_synthetic(const ExperimentConfig& cfg, const std::filesystem::path& dir, const Logger& log) {
  const auto tpl = AlignTemplate::standard(cfg.data.render_size);
  build_corpus(cfg.data, tpl, dir, log);
  return load_dataset(dir, cfg.image_size, cfg.test_fraction);
}

M1Source parse_m1_source(const std::string& text) {
  if (text == "trained") return M1Trained{};
  if (text == "random") return M1Random{};
  if (text.empty()) throw std::invalid_argument("--m1 expects trained, random or a checkpoint path");
  return std::filesystem::path(text);
}

ViTParams<float> pretrain_m1(const ViTConfig& cfg, const M1PretrainConfig& m1cfg, const AugmentConfig& augment,
                             const Tensor<float>& images, std::uint64_t seed) {
  // The contrastive branch of an MCF model whose student has M1's shape.
  McfConfig mc;
  mc.encoder = cfg;
  mc.m1 = cfg;
  mc.decoder = {1, cfg.heads, cfg.heads, 1.0};
  mc.mode = {LossVariant::FeaturePlusConCls, 0.0, 1.0};
  mc.mask_ratio = m1cfg.mask_ratio;
  mc.temperature = m1cfg.temperature;
  mc.momentum = m1cfg.momentum;
  mc.head_hidden = m1cfg.head_hidden;
  mc.head_dim = m1cfg.head_dim;
  mc.validate();
  Rng root(seed);
  Rng init_rng = root.fork(0), data_rng = root.fork(1), mask_rng = root.fork(2), aug_rng = root.fork(3);
  auto model = McfModel<float>::init(mc, init_rng);
  ParamList<float> params = model.student.params("student");
  model.student_head.collect("student_head", params);
  model.student_projector.collect("student_projector", params);
  AdamW<float> opt(params, {0.9, 0.95, 1e-8, 0.05});
  const LrSchedule schedule{m1cfg.peak_lr, m1cfg.warmup_steps, m1cfg.steps};

  const std::size_t n = images.shape()[0], batch = std::min(m1cfg.batch, n);
  if (n < 2) throw std::invalid_argument("pretrain_m1: need at least two images");
  const std::size_t per = numel(Shape(images.shape().begin() + 1, images.shape().end()));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::size_t cursor = n;
  for (std::size_t s = 0; s < m1cfg.steps; ++s) {
    auto x = Tensor<float>::zeros({batch, images.shape()[1], images.shape()[2], images.shape()[3]});
    for (std::size_t k = 0; k < batch; ++k) {
      if (cursor == n) {
        data_rng.shuffle(order.begin(), order.end());
        cursor = 0;
      }
      std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(order[cursor++] * per), per,
                  x.data().begin() + static_cast<std::ptrdiff_t>(k * per));
    }
    auto [mb, mo] = draw_masks(mask_rng, batch, mc);
    const auto view_b = augment_views(x, augment, aug_rng);
    const auto view_o = augment_views(x, augment, aug_rng);
    Graph<float>::local().clear();
    zero_grad(params);
    auto loss = contrastive_loss(view_b, view_o, mb, mo, model, mc.temperature);
    if (!std::isfinite(loss.item())) throw NonFiniteError("pretrain_m1: non-finite loss at step " + std::to_string(s));
    backward(loss);
    opt.step(lr_at(s, schedule));
    ema_update(model.teacher_params(), model.ema_source(), mc.momentum);
  }
  Graph<float>::local().clear();
  auto out = model.student.clone();
  set_requires_grad(out.params("m1"), false);
  return out;
}

ViTParams<float> load_vit(const std::filesystem::path& checkpoint, const ViTConfig& cfg, const std::string& prefix) {
  const auto ck = Checkpoint::load(checkpoint);
  Rng rng(0);
  auto vit = ViTParams<float>::init(cfg, rng);
  for (auto p : vit.params(prefix)) {
    if (!ck.contains(p.name)) {
      throw std::runtime_error(checkpoint.string() + " has no entry " + p.name + " (wrong prefix or config?)");
    }
    ck.get_into(p.name, p.tensor);
  }
  return vit;
}

void save_vit(const std::filesystem::path& checkpoint, const ViTParams<float>& params, const std::string& prefix) {
  Checkpoint ck;
  for (const auto& p : params.params(prefix)) ck.put(p.name, p.tensor);
  ck.save(checkpoint);
}

ViTParams<float> resolve_m1(const ExperimentConfig& cfg, const Tensor<float>& images, const M1Source& source) {
  const auto& mc = cfg.train.model;
  if (std::holds_alternative<M1Trained>(source)) {
    return pretrain_m1(mc.m1, cfg.m1_pretrain, cfg.train.augment, images, Rng(cfg.train.seed).fork(1).next_u64());
  }
  if (const auto* path = std::get_if<std::filesystem::path>(&source)) return load_vit(*path, mc.m1, "m1");
  Rng init_rng = Rng(cfg.train.seed).fork(0);
  return McfModel<float>::init(mc, init_rng).m1;
}

PretrainOutcome run_pretrain(const ExperimentConfig& cfg, const Tensor<float>& images, const M1Source& m1,
                             const std::optional<std::filesystem::path>& out_dir) {
  cfg.validate();
  if (!cfg.train.model.mode.uses_feature()) return run_pretrain(cfg, images, resolve_m1(cfg, images, M1Random{}), out_dir);
  return run_pretrain(cfg, images, resolve_m1(cfg, images, m1), out_dir);
}

PretrainOutcome run_pretrain(const ExperimentConfig& cfg, const Tensor<float>& images, const ViTParams<float>& m1,
                             const std::optional<std::filesystem::path>& out_dir) {
  cfg.validate();
  Rng init_rng = Rng(cfg.train.seed).fork(0);
  auto model = McfModel<float>::init(cfg.train.model, init_rng);
  model.set_m1(m1);
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    save_vit(*out_dir / "m1.ckpt", model.m1, "m1");
  }
  Trainer<float> trainer(cfg.train, std::move(model), images);
  PretrainOutcome out{trainer.model(), 0.0, 0};
  trainer.set_step_hook([&](const StepMetrics& m, const McfModel<float>&) {
    out.final_loss = m.loss;
    out.steps = m.step + 1;
  });
  trainer.train(out_dir);
  out.model = trainer.model();
  return out;
}

ViTParams<float> random_encoder(const ExperimentConfig& cfg) {
  Rng init_rng = Rng(cfg.train.seed).fork(0);
  return McfModel<float>::init(cfg.train.model, init_rng).student;
}

ProbeResult identity_probe(const ViTParams<float>& encoder, const Dataset& data, const ProbeConfig& cfg) {
  if (data.identities.empty()) throw std::invalid_argument("identity_probe: corpus has no identity labels");
  auto features = [&](std::span<const std::size_t> rows) {
    const auto cls = extract_cls(data.images_at(rows), encoder);
    auto out = Tensor<double>::zeros(cls.shape());
    std::transform(cls.data().begin(), cls.data().end(), out.data().begin(),
                   [](float v) { return static_cast<double>(v); });
    return out;
  };
  std::vector<int> train_y, test_y;
  for (auto i : data.train) train_y.push_back(data.identities[i]);
  for (auto i : data.test) test_y.push_back(data.identities[i]);
  return linear_probe(features(data.train), train_y, features(data.test), test_y, cfg);
}

SegProbeResult parsing_probe(const ViTParams<float>& encoder, const Dataset& data, const ExperimentConfig& cfg) {
  if (!data.has_labels()) throw std::invalid_argument("parsing_probe: corpus has no label maps");
  std::span<const std::size_t> train = data.train;
  if (cfg.segprobe_train_images && cfg.segprobe_train_images < train.size()) {
    train = train.first(cfg.segprobe_train_images);
  }
  return segmentation_probe(encoder, data.images_at(train), data.labels_at(train), data.images_at(data.test),
                            data.labels_at(data.test), kNumRegions, cfg.segprobe);
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const Dataset& data, const M1Source& m1,
                                      const std::optional<std::filesystem::path>& out_dir,
                                      const std::function<void(const AblationRow&)>& on_row) {
  cfg.validate();
  const auto images = data.images_at(data.train);
  const auto frozen = resolve_m1(cfg, images, m1);
  const std::size_t base_depth = cfg.train.model.decoder.depth;
  std::vector<std::pair<LossVariant, std::size_t>> grid = {
      {LossVariant::PixelL2, base_depth},          {LossVariant::PixelPlusFeature, base_depth},
      {LossVariant::FeatureOnly, 8},               {LossVariant::FeatureOnly, base_depth},
      {LossVariant::FeaturePlusConPatch, base_depth}, {LossVariant::FeaturePlusConCls, base_depth}};
  for (std::size_t depth : {1, 2, 4, 8}) {
    if (depth != base_depth) grid.emplace_back(LossVariant::FeaturePlusConCls, depth);
  }
  std::vector<AblationRow> rows;
  for (const auto& [mode, depth] : grid) {
    ExperimentConfig run = cfg;
    run.train.model.mode.variant = mode;
    run.train.model.decoder.depth = depth;
    std::optional<std::filesystem::path> dir;
    if (out_dir) dir = *out_dir / (std::string(to_string(mode)) + "_d" + std::to_string(depth));
    const auto outcome = run_pretrain(run, images, frozen, dir);
    AblationRow row{mode, depth, outcome.final_loss, identity_probe(outcome.model.student, data, cfg.probe).test_accuracy};
    if (on_row) on_row(row);
    rows.push_back(row);
  }
  return rows;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_run_manifest(const std::filesystem::path& run_dir, const RunManifest& m) {
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["seed"] = m.seed;
  j["code_version"] = m.code_version;
  j["started"] = m.started;
  j["finished"] = m.finished;
  j["artifacts"] = m.artifacts;
  j["config"] = m.config;
  std::filesystem::create_directories(run_dir);
  const auto path = run_dir / "manifest.json";
  const auto tmp = run_dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

RunManifest read_run_manifest(const std::filesystem::path& run_dir) {
  std::ifstream in(run_dir / "manifest.json");
  if (!in) throw std::runtime_error("no manifest.json in " + run_dir.string());
  const auto j = nlohmann::json::parse(in);
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.code_version = j.at("code_version").get<std::string>();
  m.started = j.at("started").get<std::string>();
  m.finished = j.at("finished").get<std::string>();
  m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
  m.config = j.at("config").get<std::string>();
  return m;
}

}  // namespace mcf
