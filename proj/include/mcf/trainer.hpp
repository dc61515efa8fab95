// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pre-training loop: accumulation windows of micro-batches, AdamW on the
// trainable parameters, EMA into the teacher after every step, JSON-lines
// metrics and per-epoch checkpoints.

#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>

#include "mcf/augment.hpp"
#include "mcf/checkpoint.hpp"
#include "mcf/objectives.hpp"
#include "mcf/optim.hpp"

namespace mcf {

struct TrainConfig {
  std::size_t micro_batch = 512;
  std::size_t accumulation_steps = 8;
  std::size_t epochs = 16;
  std::size_t warmup_epochs = 1;
  double peak_lr = 0.016;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  /// Stop after this many optimizer steps (0 runs the full schedule).
  std::size_t max_steps = 0;
  /// Photometric augmentation drawn independently for the two views.
  AugmentConfig augment;
  McfConfig model;

  void validate() const;
  std::size_t effective_batch() const { return micro_batch * accumulation_steps; }
  AdamWConfig adamw() const { return {beta1, beta2, eps, weight_decay}; }
};

/// max(1, floor(dataset_size / effective_batch)).
std::size_t steps_per_epoch(std::size_t dataset_size, const TrainConfig& cfg);
double lr_at(std::size_t step, const TrainConfig& cfg, std::size_t steps_per_epoch);

struct StepMetrics {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::optional<double> mim;
  std::optional<double> pixel;
  std::optional<double> con;
  double wall_time = 0.0;  // seconds since the trainer started
};

/// One JSON object per line.
std::string to_json_line(const StepMetrics& m);

template <std::floating_point T>
class Trainer {
 public:
  using StepHook = std::function<void(const StepMetrics&, const McfModel<T>&)>;

  /// `images` is the whole corpus, [N, H, W, C].
  Trainer(TrainConfig cfg, McfModel<T> model, Tensor<T> images);

  /// Runs until the schedule (or max_steps) is exhausted. With an output
  /// directory, writes metrics.jsonl and checkpoints/epoch_<k>.ckpt.
  void train(const std::optional<std::filesystem::path>& out_dir = std::nullopt);
  /// One optimizer step over the next effective batch.
  StepMetrics step();
  /// Gradient accumulation over explicit micro-batches with explicit masks;
  /// leaves the averaged gradients on the trainable parameters.
  void accumulate(std::span<const Tensor<T>> micro_batches, std::span<const std::vector<MaskSpec>> masks_b,
                  std::span<const std::vector<MaskSpec>> masks_o);

  void set_step_hook(StepHook hook) { hook_ = std::move(hook); }

  const McfModel<T>& model() const { return model_; }
  McfModel<T>& model() { return model_; }
  const AdamW<T>& optimizer() const { return opt_; }
  std::size_t global_step() const { return step_; }
  std::size_t total_steps() const;
  std::size_t steps_per_epoch() const { return spe_; }

  Checkpoint state() const;
  void load_state(const Checkpoint& ck);

 private:
  Tensor<T> gather(std::span<const std::size_t> rows) const;
  void next_epoch_order();

  TrainConfig cfg_;
  McfModel<T> model_;
  Tensor<T> images_;
  AdamW<T> opt_;
  Rng data_rng_;
  Rng mask_rng_;
  Rng aug_rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t step_ = 0;
  std::size_t spe_ = 1;
  StepHook hook_;
  double start_ = 0.0;
};

}  // namespace mcf
