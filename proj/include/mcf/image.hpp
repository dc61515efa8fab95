// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0
//
// 8-bit rasters and the native uncompressed file format:
//   "MCFR" | u32 width | u32 height | u32 channels | width*height*channels bytes
// Integers are little-endian; pixels are row-major, channels interleaved.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mcf/tensor.hpp"

namespace mcf {

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c = 0) { return pixels[(y * width + x) * channels + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
  friend bool operator==(const Image&, const Image&) = default;
};

std::vector<std::uint8_t> encode_raw(const Image& image);
Image decode_raw(std::span<const std::uint8_t> bytes);
void write_raw(const std::filesystem::path& path, const Image& image);
Image read_raw(const std::filesystem::path& path);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

/// 64-bit FNV-1a, chained through `seed`.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Box-filter downsample by an integer factor (size must divide evenly).
Image downsample(const Image& image, std::size_t out_size);
/// Majority vote per block, ties to the smallest label.
Image downsample_labels(const Image& labels, std::size_t out_size);

/// Stacks images into [N, H, W, C] scaled to [0, 1].
template <std::floating_point T>
Tensor<T> to_tensor(std::span<const Image> images);

}  // namespace mcf
