// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcf/image.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>

namespace mcf {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace

std::vector<std::uint8_t> encode_raw(const Image& image) {
  if (image.pixels.size() != image.width * image.height * image.channels) {
    throw std::invalid_argument("encode_raw: pixel buffer does not match dimensions");
  }
  std::vector<std::uint8_t> out = {'M', 'C', 'F', 'R'};
  put_u32(out, static_cast<std::uint32_t>(image.width));
  put_u32(out, static_cast<std::uint32_t>(image.height));
  put_u32(out, static_cast<std::uint32_t>(image.channels));
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

Image decode_raw(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "MCFR", 4) != 0) {
    throw std::runtime_error("decode_raw: not a raw image");
  }
  Image img(get_u32(bytes.data() + 4), get_u32(bytes.data() + 8), get_u32(bytes.data() + 12));
  if (bytes.size() != 16 + img.pixels.size()) throw std::runtime_error("decode_raw: truncated or oversized payload");
  std::copy(bytes.begin() + 16, bytes.end(), img.pixels.begin());
  return img;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_raw(const std::filesystem::path& path, const Image& image) {
  const auto bytes = encode_raw(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Image read_raw(const std::filesystem::path& path) {
  return decode_raw(read_bytes(path));
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Image downsample(const Image& image, std::size_t out_size) {
  if (image.width != image.height || out_size == 0 || image.width % out_size != 0) {
    throw std::invalid_argument("downsample: needs a square image whose side is a multiple of " +
                                std::to_string(out_size));
  }
  const std::size_t f = image.width / out_size;
  Image out(out_size, out_size, image.channels);
  for (std::size_t y = 0; y < out_size; ++y) {
    for (std::size_t x = 0; x < out_size; ++x) {
      for (std::size_t c = 0; c < image.channels; ++c) {
        unsigned sum = 0;
        for (std::size_t dy = 0; dy < f; ++dy) {
          for (std::size_t dx = 0; dx < f; ++dx) sum += image.at(x * f + dx, y * f + dy, c);
        }
        out.at(x, y, c) = static_cast<std::uint8_t>((sum + f * f / 2) / (f * f));
      }
    }
  }
  return out;
}

Image downsample_labels(const Image& labels, std::size_t out_size) {
  if (labels.width != labels.height || labels.channels != 1 || out_size == 0 || labels.width % out_size != 0) {
    throw std::invalid_argument("downsample_labels: needs a square single-channel map divisible by " +
                                std::to_string(out_size));
  }
  const std::size_t f = labels.width / out_size;
  Image out(out_size, out_size, 1);
  for (std::size_t y = 0; y < out_size; ++y) {
    for (std::size_t x = 0; x < out_size; ++x) {
      std::array<unsigned, 256> votes{};
      for (std::size_t dy = 0; dy < f; ++dy) {
        for (std::size_t dx = 0; dx < f; ++dx) ++votes[labels.at(x * f + dx, y * f + dy)];
      }
      std::size_t best = 0;
      for (std::size_t l = 1; l < votes.size(); ++l) {
        if (votes[l] > votes[best]) best = l;
      }
      out.at(x, y) = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

template <std::floating_point T>
Tensor<T> to_tensor(std::span<const Image> images) {
  if (images.empty()) throw std::invalid_argument("to_tensor: no images");
  const auto& f = images.front();
  auto out = Tensor<T>::zeros({images.size(), f.height, f.width, f.channels});
  auto data = out.data();
  const std::size_t per = f.pixels.size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].width != f.width || images[i].height != f.height || images[i].channels != f.channels) {
      throw ShapeError("to_tensor: images differ in size");
    }
    for (std::size_t j = 0; j < per; ++j) data[i * per + j] = static_cast<T>(images[i].pixels[j]) / T(255);
  }
  return out;
}

template Tensor<float> to_tensor<float>(std::span<const Image>);
template Tensor<double> to_tensor<double>(std::span<const Image>);

}  // namespace mcf
