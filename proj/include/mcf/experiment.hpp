// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end pipelines shared by the command line tool and the acceptance
// runner: corpus preparation, M1 pre-training, MCF pre-training and the
// frozen-encoder probes.

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <variant>

#include "mcf/downstream.hpp"
#include "mcf/facedata.hpp"
#include "mcf/trainer.hpp"

namespace mcf {

/// Brief contrastive run that produces a frozen M1.
struct M1PretrainConfig {
  std::size_t steps = 200;
  std::size_t batch = 64;
  double peak_lr = 1e-3;
  std::size_t warmup_steps = 20;
  double mask_ratio = 0.5;
  double temperature = 0.2;
  double momentum = 0.99;
  std::size_t head_hidden = 128;
  std::size_t head_dim = 64;
};

struct ExperimentConfig {
  TrainConfig train;
  SynthSpec data;
  /// Side length the aligned crops are resampled to before training.
  std::size_t image_size = 32;
  /// Fraction of each identity's images held out for probe evaluation.
  double test_fraction = 0.2;
  M1PretrainConfig m1_pretrain;
  ProbeConfig probe;
  SegProbeConfig segprobe;
  /// Training images for the segmentation probe (0 uses the whole train split).
  std::size_t segprobe_train_images = 0;

  void validate() const;
  /// Small configuration that trains in minutes on one CPU core.
  static ExperimentConfig toy();
};

/// Images and labels as tensors, with a fixed per-identity train/test split.
struct Dataset {
  Tensor<float> images;  // [N, S, S, 3] in [0, 1]
  std::vector<int> identities;
  std::vector<std::uint8_t> labels;  // N * S * S region indices; empty if any record lacks labels
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::size_t size = 0;

  bool has_labels() const { return !labels.empty(); }
  Tensor<float> images_at(std::span<const std::size_t> rows) const;
  std::vector<std::uint8_t> labels_at(std::span<const std::size_t> rows) const;
};

/// Loads a built corpus. Records without an identity make the split empty.
Dataset load_dataset(const std::filesystem::path& corpus_dir, std::size_t image_size, double test_fraction);

/// Builds (or heals) the synthetic corpus under `dir` and loads it.
Dataset prepare_synthetic(const ExperimentConfig& cfg, const std::filesystem::path& dir, const Logger& log = {});

/// Where the frozen M1 comes from.
struct M1Trained {};
struct M1Random {};
using M1Source = std::variant<M1Trained, M1Random, std::filesystem::path>;

/// Parses "trained", "random" or a checkpoint path.
M1Source parse_m1_source(const std::string& text);

/// Contrastive pre-training of an M1-shaped ViT on two augmented, masked
/// views of each image.
ViTParams<float> pretrain_m1(const ViTConfig& cfg, const M1PretrainConfig& m1cfg, const AugmentConfig& augment,
                             const Tensor<float>& images, std::uint64_t seed);

/// Reads ViT parameters stored under `prefix` ("m1", "student", ...).
ViTParams<float> load_vit(const std::filesystem::path& checkpoint, const ViTConfig& cfg, const std::string& prefix);
void save_vit(const std::filesystem::path& checkpoint, const ViTParams<float>& params, const std::string& prefix);

/// The frozen M1 for `source`: contrastively pre-trained on `images`, the
/// random network McfModel::init draws, or loaded from a checkpoint.
ViTParams<float> resolve_m1(const ExperimentConfig& cfg, const Tensor<float>& images, const M1Source& source);

struct PretrainOutcome {
  McfModel<float> model;
  double final_loss = 0.0;
  std::size_t steps = 0;
};

/// Model init, M1 resolution and the full training schedule. With an output
/// directory, writes metrics.jsonl, checkpoints and m1.ckpt.
PretrainOutcome run_pretrain(const ExperimentConfig& cfg, const Tensor<float>& images, const M1Source& m1,
                             const std::optional<std::filesystem::path>& out_dir = std::nullopt);
PretrainOutcome run_pretrain(const ExperimentConfig& cfg, const Tensor<float>& images, const ViTParams<float>& m1,
                             const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// A freshly initialized encoder drawn exactly as run_pretrain draws the student.
ViTParams<float> random_encoder(const ExperimentConfig& cfg);

/// Identity probe on frozen class tokens over the dataset's split.
ProbeResult identity_probe(const ViTParams<float>& encoder, const Dataset& data, const ProbeConfig& cfg);

/// Dense-head parsing probe over the dataset's split.
SegProbeResult parsing_probe(const ViTParams<float>& encoder, const Dataset& data, const ExperimentConfig& cfg);

struct AblationRow {
  LossVariant mode = LossVariant::FeaturePlusConCls;
  std::size_t depth = 0;
  double final_loss = 0.0;
  double probe_accuracy = 0.0;
};

/// The loss-mode grid (with an 8-block decoder for the feature-only row) and
/// the decoder-depth grid {1, 2, 4, 8} of the full method, all sharing one
/// M1, each followed by the identity probe. With an output directory every
/// variant gets its own run directory.
std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const Dataset& data, const M1Source& m1,
                                      const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                                      const std::function<void(const AblationRow&)>& on_row = {});

/// Provenance record written once per run directory as manifest.json.
struct RunManifest {
  std::string command;
  std::string config;  // full config dump
  std::uint64_t seed = 0;
  std::string code_version;
  std::string started;  // UTC, ISO 8601
  std::string finished;
  std::vector<std::string> artifacts;  // paths relative to the run directory
};

std::string utc_timestamp();
void write_run_manifest(const std::filesystem::path& run_dir, const RunManifest& manifest);
RunManifest read_run_manifest(const std::filesystem::path& run_dir);

}  // namespace mcf
