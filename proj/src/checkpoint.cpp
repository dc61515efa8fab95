// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcf/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace mcf {

namespace {

constexpr char kMagic[8] = {'M', 'C', 'F', 'C', 'K', 'P', 'T', '\0'};

template <class U>
void put_le(std::vector<std::uint8_t>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <class U>
U get_le(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

std::size_t element_size(DType t) {
  switch (t) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::U8: return 1;
    case DType::U64: return 8;
  }
  throw std::runtime_error("checkpoint: unknown dtype");
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
  const std::uint8_t* take(std::size_t n) {
    if (n > b_.size() - pos_) throw std::runtime_error("checkpoint: truncated file");
    const auto* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <class U>
  U read() {
    return get_le<U>(take(sizeof(U)));
  }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::add(CheckpointEntry e) {
  if (contains(e.name)) throw std::invalid_argument("checkpoint: duplicate entry " + e.name);
  entries_.push_back(std::move(e));
}

template <std::floating_point T>
void Checkpoint::put(const std::string& name, const Tensor<T>& tensor) {
  CheckpointEntry e{name, sizeof(T) == 4 ? DType::F32 : DType::F64, tensor.shape(), {}};
  e.bytes.reserve(tensor.numel() * sizeof(T));
  for (T v : tensor.data()) {
    if constexpr (sizeof(T) == 4) {
      put_le(e.bytes, std::bit_cast<std::uint32_t>(v));
    } else {
      put_le(e.bytes, std::bit_cast<std::uint64_t>(v));
    }
  }
  add(std::move(e));
}

void Checkpoint::put_u64(const std::string& name, const std::vector<std::uint64_t>& values) {
  CheckpointEntry e{name, DType::U64, {values.size()}, {}};
  for (auto v : values) put_le(e.bytes, v);
  add(std::move(e));
}

void Checkpoint::put_text(const std::string& name, const std::string& text) {
  CheckpointEntry e{name, DType::U8, {text.size()}, {text.begin(), text.end()}};
  add(std::move(e));
}

bool Checkpoint::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == name; });
}

const CheckpointEntry& Checkpoint::entry(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw std::out_of_range("checkpoint: no entry named " + name);
}

template <std::floating_point T>
void Checkpoint::get_into(const std::string& name, Tensor<T>& tensor) const {
  const auto& e = entry(name);
  if (e.shape != tensor.shape()) {
    throw ShapeError("checkpoint: " + name + " stored as " + to_string(e.shape) + ", expected " +
                     to_string(tensor.shape()));
  }
  auto out = tensor.data();
  if (e.dtype == DType::F32) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<T>(std::bit_cast<float>(get_le<std::uint32_t>(e.bytes.data() + 4 * i)));
    }
  } else if (e.dtype == DType::F64) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<T>(std::bit_cast<double>(get_le<std::uint64_t>(e.bytes.data() + 8 * i)));
    }
  } else {
    throw std::invalid_argument("checkpoint: " + name + " is not a floating-point array");
  }
}

std::vector<std::uint64_t> Checkpoint::get_u64(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dtype != DType::U64) throw std::invalid_argument("checkpoint: " + name + " is not a u64 array");
  std::vector<std::uint64_t> out(e.bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = get_le<std::uint64_t>(e.bytes.data() + 8 * i);
  return out;
}

std::string Checkpoint::get_text(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dtype != DType::U8) throw std::invalid_argument("checkpoint: " + name + " is not a byte array");
  return {e.bytes.begin(), e.bytes.end()};
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  std::vector<std::uint8_t> header(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(header, kVersion);
  put_le<std::uint32_t>(header, static_cast<std::uint32_t>(entries_.size()));
  std::size_t header_size = header.size();
  for (const auto& e : entries_) header_size += 4 + e.name.size() + 1 + 4 + 8 * e.shape.size() + 16;
  std::uint64_t offset = header_size;
  for (const auto& e : entries_) {
    put_le<std::uint32_t>(header, static_cast<std::uint32_t>(e.name.size()));
    header.insert(header.end(), e.name.begin(), e.name.end());
    header.push_back(static_cast<std::uint8_t>(e.dtype));
    put_le<std::uint32_t>(header, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) put_le<std::uint64_t>(header, d);
    put_le<std::uint64_t>(header, offset);
    put_le<std::uint64_t>(header, e.bytes.size());
    offset += e.bytes.size();
  }
  for (const auto& e : entries_) header.insert(header.end(), e.bytes.begin(), e.bytes.end());
  return header;
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(8), kMagic, 8) != 0) throw std::runtime_error("checkpoint: bad magic");
  const auto version = r.read<std::uint32_t>();
  if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const auto count = r.read<std::uint32_t>();
  Checkpoint ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto len = r.read<std::uint32_t>();
    const auto* name = r.take(len);
    e.name.assign(name, name + len);
    const auto dtype = r.read<std::uint8_t>();
    if (dtype > static_cast<std::uint8_t>(DType::U64)) throw std::runtime_error("checkpoint: bad dtype");
    e.dtype = static_cast<DType>(dtype);
    const auto ndim = r.read<std::uint32_t>();
    for (std::uint32_t d = 0; d < ndim; ++d) e.shape.push_back(r.read<std::uint64_t>());
    const auto offset = r.read<std::uint64_t>();
    const auto nbytes = r.read<std::uint64_t>();
    if (nbytes != numel(e.shape) * element_size(e.dtype)) {
      throw std::runtime_error("checkpoint: size of " + e.name + " disagrees with its shape");
    }
    if (offset > bytes.size() || nbytes > bytes.size() - offset) {
      throw std::runtime_error("checkpoint: payload of " + e.name + " out of bounds");
    }
    e.bytes.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                   bytes.begin() + static_cast<std::ptrdiff_t>(offset + nbytes));
    ck.add(std::move(e));
  }
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

template void Checkpoint::put<float>(const std::string&, const Tensor<float>&);
template void Checkpoint::put<double>(const std::string&, const Tensor<double>&);
template void Checkpoint::get_into<float>(const std::string&, Tensor<float>&) const;
template void Checkpoint::get_into<double>(const std::string&, Tensor<double>&) const;

}  // namespace mcf
