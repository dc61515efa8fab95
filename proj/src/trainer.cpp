// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcf/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mcf {

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

template <std::floating_point T>
double value_of(const Tensor<T>& t) {
  return static_cast<double>(t.item());
}

}  // namespace

void TrainConfig::validate() const {
  if (micro_batch == 0) throw std::invalid_argument("train.micro_batch must be positive");
  if (accumulation_steps == 0) throw std::invalid_argument("train.accumulation_steps must be positive");
  if (epochs == 0) throw std::invalid_argument("train.epochs must be positive");
  if (warmup_epochs > epochs) throw std::invalid_argument("train.warmup_epochs must not exceed train.epochs");
  if (!(peak_lr >= 0)) throw std::invalid_argument("train.peak_lr must be non-negative");
  if (!(weight_decay >= 0)) throw std::invalid_argument("train.weight_decay must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw std::invalid_argument("train.beta1 and train.beta2 must lie in [0, 1)");
  }
  if (!(eps > 0)) throw std::invalid_argument("train.eps must be positive");
  augment.validate();
  model.validate();
}

std::size_t steps_per_epoch(std::size_t dataset_size, const TrainConfig& cfg) {
  return std::max<std::size_t>(1, dataset_size / cfg.effective_batch());
}

double lr_at(std::size_t step, const TrainConfig& cfg, std::size_t spe) {
  return lr_at(step, LrSchedule{cfg.peak_lr, cfg.warmup_epochs * spe, cfg.epochs * spe});
}

std::string to_json_line(const StepMetrics& m) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["epoch"] = m.epoch;
  j["lr"] = m.lr;
  j["loss"] = m.loss;
  if (m.mim) j["mim"] = *m.mim;
  if (m.pixel) j["pixel"] = *m.pixel;
  if (m.con) j["con"] = *m.con;
  j["wall_time"] = m.wall_time;
  return j.dump();
}

template <std::floating_point T>
Trainer<T>::Trainer(TrainConfig cfg, McfModel<T> model, Tensor<T> images)
    : cfg_(std::move(cfg)),
      model_(std::move(model)),
      images_(std::move(images)),
      opt_(model_.trainable(), cfg_.adamw()),
      data_rng_(Rng(cfg_.seed).fork(2)),
      mask_rng_(Rng(cfg_.seed).fork(3)),
      aug_rng_(Rng(cfg_.seed).fork(4)) {
  cfg_.validate();
  const auto& enc = model_.cfg.encoder;
  if (images_.ndim() != 4 || images_.shape()[0] == 0 || images_.shape()[1] != enc.image_size ||
      images_.shape()[2] != enc.image_size || images_.shape()[3] != enc.channels) {
    throw ShapeError("Trainer: corpus " + to_string(images_.shape()) + " does not match the encoder input");
  }
  spe_ = mcf::steps_per_epoch(images_.shape()[0], cfg_);
  start_ = now_seconds();
}

template <std::floating_point T>
std::size_t Trainer<T>::total_steps() const {
  const std::size_t full = cfg_.epochs * spe_;
  return cfg_.max_steps ? std::min(full, cfg_.max_steps) : full;
}

template <std::floating_point T>
void Trainer<T>::next_epoch_order() {
  order_.resize(images_.shape()[0]);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  data_rng_.shuffle(order_.begin(), order_.end());
  cursor_ = 0;
}

template <std::floating_point T>
Tensor<T> Trainer<T>::gather(std::span<const std::size_t> rows) const {
  const auto& s = images_.shape();
  const std::size_t per = s[1] * s[2] * s[3];
  auto out = Tensor<T>::zeros({rows.size(), s[1], s[2], s[3]});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(images_.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * per), per,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

template <std::floating_point T>
void Trainer<T>::accumulate(std::span<const Tensor<T>> micro_batches, std::span<const std::vector<MaskSpec>> masks_b,
                            std::span<const std::vector<MaskSpec>> masks_o) {
  const auto params = model_.trainable();
  zero_grad(params);
  for (std::size_t i = 0; i < micro_batches.size(); ++i) {
    Graph<T>::local().clear();
    auto losses = total_loss<T>(micro_batches[i], masks_b[i], masks_o[i], model_);
    backward(losses.total);
  }
  const T scale = T(1) / static_cast<T>(micro_batches.size());
  for (auto p : params) {
    for (auto& g : p.tensor.mutable_grad()) g *= scale;
  }
}

template <std::floating_point T>
StepMetrics Trainer<T>::step() {
  if (step_ >= cfg_.epochs * spe_) throw std::logic_error("Trainer: schedule already complete");
  if (step_ % spe_ == 0 || order_.empty()) next_epoch_order();
  StepMetrics m;
  m.step = step_;
  m.epoch = step_ / spe_;
  m.lr = lr_at(step_, cfg_, spe_);

  const auto params = model_.trainable();
  zero_grad(params);
  double loss = 0, mim = 0, pixel = 0, con = 0;
  bool has_mim = false, has_pixel = false, has_con = false;
  const std::size_t n = images_.shape()[0];
  for (std::size_t a = 0; a < cfg_.accumulation_steps; ++a) {
    std::vector<std::size_t> rows(cfg_.micro_batch);
    for (auto& r : rows) r = order_[cursor_++ % n];
    auto batch = gather(rows);
    Graph<T>::local().clear();
    auto [mb, mo] = draw_masks(mask_rng_, batch.shape()[0], model_.cfg);
    auto view_b = augment_views(batch, cfg_.augment, aug_rng_);
    auto view_o = cfg_.augment.enabled ? augment_views(batch, cfg_.augment, aug_rng_) : view_b;
    auto losses = total_loss<T>(view_b, view_o, mb, mo, model_);
    const double total = value_of(losses.total);
    if (!std::isfinite(total)) {
      Graph<T>::local().clear();
      throw NonFiniteError("non-finite loss " + std::to_string(total) + " at step " + std::to_string(step_) +
                           " (epoch " + std::to_string(m.epoch) + ", micro-batch " + std::to_string(a) +
                           ", lr " + std::to_string(m.lr) + ")");
    }
    loss += total;
    if ((has_mim = losses.mim.defined())) mim += value_of(losses.mim);
    if ((has_pixel = losses.pixel.defined())) pixel += value_of(losses.pixel);
    if ((has_con = losses.con.defined())) con += value_of(losses.con);
    backward(losses.total);
  }
  const double k = static_cast<double>(cfg_.accumulation_steps);
  const T scale = T(1) / static_cast<T>(cfg_.accumulation_steps);
  for (auto p : params) {
    for (auto& g : p.tensor.mutable_grad()) g *= scale;
  }
  opt_.step(m.lr);
  ema_update(model_.teacher_params(), model_.ema_source(), model_.cfg.momentum);
  ++step_;

  m.loss = loss / k;
  if (has_mim) m.mim = mim / k;
  if (has_pixel) m.pixel = pixel / k;
  if (has_con) m.con = con / k;
  m.wall_time = now_seconds() - start_;
  if (hook_) hook_(m, model_);
  return m;
}

template <std::floating_point T>
void Trainer<T>::train(const std::optional<std::filesystem::path>& out_dir) {
  std::ofstream metrics;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir / "checkpoints");
    // A resumed run appends; a fresh one starts the log over.
    metrics.open(*out_dir / "metrics.jsonl", step_ == 0 ? std::ios::trunc : std::ios::app);
    if (!metrics) throw std::runtime_error("cannot write " + (*out_dir / "metrics.jsonl").string());
  }
  const std::size_t last = total_steps();
  while (step_ < last) {
    const auto m = step();
    if (metrics.is_open()) metrics << to_json_line(m) << '\n' << std::flush;
    const bool epoch_end = step_ % spe_ == 0 || step_ == last;
    if (out_dir && epoch_end) {
      state().save(*out_dir / "checkpoints" / ("epoch_" + std::to_string((step_ - 1) / spe_) + ".ckpt"));
    }
  }
}

template <std::floating_point T>
Checkpoint Trainer<T>::state() const {
  Checkpoint ck;
  const auto params = model_.trainable();
  for (const auto& p : params) ck.put(p.name, p.tensor);
  for (const auto& p : model_.teacher_params()) ck.put(p.name, p.tensor);
  for (const auto& p : model_.m1_params()) ck.put(p.name, p.tensor);
  for (std::size_t i = 0; i < params.size(); ++i) {
    ck.put("opt.m." + params[i].name, opt_.first_moments()[i]);
    ck.put("opt.v." + params[i].name, opt_.second_moments()[i]);
  }
  ck.put_u64("state.step", {step_, opt_.step_count(), cursor_});
  ck.put_u64("state.order", {order_.begin(), order_.end()});
  ck.put_text("state.data_rng", data_rng_.state());
  ck.put_text("state.mask_rng", mask_rng_.state());
  ck.put_text("state.aug_rng", aug_rng_.state());
  return ck;
}

template <std::floating_point T>
void Trainer<T>::load_state(const Checkpoint& ck) {
  const auto params = model_.trainable();
  for (auto p : params) ck.get_into(p.name, p.tensor);
  for (auto p : model_.teacher_params()) ck.get_into(p.name, p.tensor);
  for (auto p : model_.m1_params()) ck.get_into(p.name, p.tensor);
  for (std::size_t i = 0; i < params.size(); ++i) {
    ck.get_into("opt.m." + params[i].name, opt_.first_moments()[i]);
    ck.get_into("opt.v." + params[i].name, opt_.second_moments()[i]);
  }
  const auto counters = ck.get_u64("state.step");
  if (counters.size() != 3) throw std::runtime_error("checkpoint: malformed state.step");
  step_ = counters[0];
  opt_.set_step_count(counters[1]);
  cursor_ = counters[2];
  const auto order = ck.get_u64("state.order");
  order_.assign(order.begin(), order.end());
  data_rng_.set_state(ck.get_text("state.data_rng"));
  mask_rng_.set_state(ck.get_text("state.mask_rng"));
  aug_rng_.set_state(ck.get_text("state.aug_rng"));
}

template class Trainer<float>;
template class Trainer<double>;

}  // namespace mcf
