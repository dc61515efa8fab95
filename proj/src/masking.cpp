// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcf/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mcf {

MaskSpec MaskSpec::from_kept(std::size_t total, std::vector<std::size_t> kept, double ratio) {
  std::sort(kept.begin(), kept.end());
  if (std::adjacent_find(kept.begin(), kept.end()) != kept.end()) {
    throw std::invalid_argument("MaskSpec: duplicate kept index");
  }
  if (!kept.empty() && kept.back() >= total) throw std::invalid_argument("MaskSpec: kept index out of range");
  MaskSpec spec;
  spec.total = total;
  spec.kept = std::move(kept);
  std::vector<bool> is_kept(total, false);
  for (auto k : spec.kept) is_kept[k] = true;
  for (std::size_t i = 0; i < total; ++i) {
    if (!is_kept[i]) spec.masked.push_back(i);
  }
  spec.ratio = ratio >= 0 ? ratio : static_cast<double>(spec.masked.size()) / static_cast<double>(total);
  return spec;
}

std::size_t keep_count(std::size_t total, double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw std::invalid_argument("mask ratio must lie in [0, 1), got " + std::to_string(ratio));
  }
  const auto k = static_cast<std::size_t>(std::llround(static_cast<double>(total) * (1.0 - ratio)));
  return std::clamp<std::size_t>(k, 1, total);
}

MaskSpec generate_mask(Rng& rng, std::size_t total, double ratio, std::optional<std::size_t> keep_override) {
  if (total == 0) throw std::invalid_argument("generate_mask: total must be at least 1");
  std::size_t keep = keep_count(total, ratio);
  if (keep_override) {
    if (*keep_override < 1 || *keep_override > total) {
      throw std::invalid_argument("generate_mask: keep override " + std::to_string(*keep_override) +
                                  " outside 1.." + std::to_string(total));
    }
    keep = *keep_override;
  }
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());
  order.resize(keep);
  return MaskSpec::from_kept(total, std::move(order), ratio);
}

namespace {

// For each batch item, slot j of the sequence holds grid position
// positions[b * n + j]; returns the inverse map position -> slot.
std::vector<std::size_t> slot_of_position(std::span<const std::size_t> positions, std::size_t batch,
                                          std::size_t n, std::size_t total) {
  std::vector<std::size_t> slot(batch * total, n);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t pos = positions[b * n + j];
      if (pos >= total) throw std::invalid_argument("token position " + std::to_string(pos) + " out of range");
      if (slot[b * total + pos] != n) throw std::invalid_argument("duplicate token position " + std::to_string(pos));
      slot[b * total + pos] = j;
    }
  }
  return slot;
}

}  // namespace

template <std::floating_point T>
TokenSequence<T> select_kept(const TokenSequence<T>& tokens, std::span<const MaskSpec> masks) {
  const std::size_t b = tokens.batch(), n = tokens.count(), d = tokens.width();
  if (masks.size() != b) {
    throw std::invalid_argument("select_kept: " + std::to_string(masks.size()) + " masks for batch of " +
                                std::to_string(b));
  }
  const std::size_t k = masks.front().kept.size();
  for (const auto& m : masks) {
    if (m.total != n) {
      throw std::invalid_argument("select_kept: sequence has " + std::to_string(n) + " patch tokens, mask covers " +
                                  std::to_string(m.total));
    }
    if (m.kept.size() != k) throw std::invalid_argument("select_kept: masks keep different counts");
  }
  const auto slot = slot_of_position(tokens.positions, b, n, n);
  std::vector<std::size_t> rows;
  std::vector<std::size_t> positions;
  rows.reserve(b * (1 + k));
  positions.reserve(b * k);
  for (std::size_t bi = 0; bi < b; ++bi) {
    rows.push_back(bi * (1 + n));
    for (auto pos : masks[bi].kept) {
      rows.push_back(bi * (1 + n) + 1 + slot[bi * n + pos]);
      positions.push_back(pos);
    }
  }
  auto flat = reshape(tokens.tokens, {b * (1 + n), d});
  return {reshape(index_rows(flat, rows), {b, 1 + k, d}), std::move(positions)};
}

template <std::floating_point T>
TokenSequence<T> reinsert_masked(const TokenSequence<T>& encoded, std::span<const MaskSpec> masks,
                                 const Tensor<T>& mask_token, const Tensor<T>& pos_table) {
  const std::size_t b = encoded.batch(), k = encoded.count(), d = encoded.width();
  if (masks.size() != b) throw std::invalid_argument("reinsert_masked: mask count differs from batch");
  const std::size_t n = masks.front().total;
  if (pos_table.ndim() != 2 || pos_table.shape()[0] != n + 1 || pos_table.shape()[1] != d) {
    throw ShapeError("reinsert_masked: position table " + to_string(pos_table.shape()) + " for " +
                     std::to_string(n) + " patches of width " + std::to_string(d));
  }
  if (mask_token.numel() != d) throw ShapeError("reinsert_masked: mask token width differs from tokens");
  std::vector<std::size_t> rows;
  rows.reserve(b * (1 + k));
  auto indicator = Tensor<T>::zeros({b * (1 + n), 1});
  for (std::size_t bi = 0; bi < b; ++bi) {
    const auto& m = masks[bi];
    if (m.total != n || m.kept.size() != k) {
      throw std::invalid_argument("reinsert_masked: encoded tokens do not cover the mask's kept set");
    }
    std::span<const std::size_t> pos(encoded.positions.data() + bi * k, k);
    std::vector<std::size_t> sorted(pos.begin(), pos.end());
    std::sort(sorted.begin(), sorted.end());
    if (sorted != m.kept) {
      throw std::invalid_argument("reinsert_masked: encoded positions differ from the kept set of item " +
                                  std::to_string(bi));
    }
    rows.push_back(bi * (1 + n));
    for (auto p : pos) rows.push_back(bi * (1 + n) + 1 + p);
    for (auto p : m.masked) indicator.data()[bi * (1 + n) + 1 + p] = T(1);
  }
  auto flat = scatter_rows(reshape(encoded.tokens, {b * (1 + k), d}), rows, b * (1 + n));
  flat = add(flat, mul(indicator, reshape(mask_token, {1, d})));
  auto full = add(reshape(flat, {b, 1 + n, d}), reshape(pos_table, {1, 1 + n, d}));
  std::vector<std::size_t> positions(b * n);
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i % n;
  return {full, std::move(positions)};
}

#define MCF_INSTANTIATE_MASKING(T)                                                                           \
  template TokenSequence<T> select_kept<T>(const TokenSequence<T>&, std::span<const MaskSpec>);              \
  template TokenSequence<T> reinsert_masked<T>(const TokenSequence<T>&, std::span<const MaskSpec>,           \
                                               const Tensor<T>&, const Tensor<T>&);

MCF_INSTANTIATE_MASKING(float)
MCF_INSTANTIATE_MASKING(double)

}  // namespace mcf
