// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcf/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace mcf {

namespace {
std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}
}  // namespace

Rng::Rng(std::uint64_t seed) : engine_(splitmix(seed)) {}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

double Rng::truncated_normal(double stddev, double bound) {
  for (;;) {
    const double z = normal();
    if (std::abs(z) <= bound) return z * stddev;
  }
}

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  const std::uint64_t range = n;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
  std::uint64_t x = 0;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % range);
}

Rng Rng::fork(std::uint64_t stream) {
  return Rng(next_u64() ^ splitmix(stream));
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_ << ' ' << has_spare_ << ' ';
  os.precision(17);
  os << std::hexfloat << spare_;
  return os.str();
}

void Rng::set_state(const std::string& text) {
  std::istringstream is(text);
  is >> engine_;
  int spare_flag = 0;
  is >> spare_flag;
  std::string spare_text;
  is >> spare_text;
  if (is.fail() && !is.eof()) throw std::invalid_argument("Rng::set_state: malformed state");
  has_spare_ = spare_flag != 0;
  spare_ = spare_text.empty() ? 0.0 : std::strtod(spare_text.c_str(), nullptr);
}

}  // namespace mcf
