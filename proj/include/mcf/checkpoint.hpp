// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Named-array container. Layout, all integers little-endian:
//   "MCFCKPT\0" | u32 version | u32 count
//   count x { u32 name_len | name | u8 dtype | u32 ndim | ndim x u64 dim |
//             u64 offset | u64 nbytes }
//   payload (offsets are absolute file positions)

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mcf/tensor.hpp"

namespace mcf {

enum class DType : std::uint8_t { F32 = 0, F64 = 1, U8 = 2, U64 = 3 };

struct CheckpointEntry {
  std::string name;
  DType dtype = DType::F32;
  Shape shape;
  std::vector<std::uint8_t> bytes;  // little-endian element encoding
};

class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  template <std::floating_point T>
  void put(const std::string& name, const Tensor<T>& tensor);
  void put_u64(const std::string& name, const std::vector<std::uint64_t>& values);
  void put_text(const std::string& name, const std::string& text);

  bool contains(const std::string& name) const;
  const CheckpointEntry& entry(const std::string& name) const;
  const std::vector<CheckpointEntry>& entries() const { return entries_; }

  /// Copies the named array into `tensor`, which must have the same shape.
  /// Float arrays convert between 32 and 64 bits.
  template <std::floating_point T>
  void get_into(const std::string& name, Tensor<T>& tensor) const;
  std::vector<std::uint64_t> get_u64(const std::string& name) const;
  std::string get_text(const std::string& name) const;

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

  /// Writes through a temporary file and rename.
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  void add(CheckpointEntry e);
  std::vector<CheckpointEntry> entries_;
};

}  // namespace mcf
