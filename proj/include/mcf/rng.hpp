// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>

namespace mcf {

/// Seeded generator with platform-independent derived distributions
/// (the standard <random> distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller.
  double normal();
  /// Normal(0, stddev) resampled until within +-bound*stddev.
  double truncated_normal(double stddev, double bound = 2.0);
  /// Uniform integer in [0, n), unbiased.
  std::size_t uniform_index(std::size_t n);

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = uniform_index(i);
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

  /// Derives an independent generator for a named sub-stream.
  Rng fork(std::uint64_t stream);

  std::string state() const;
  void set_state(const std::string& text);

  friend bool operator==(const Rng& a, const Rng& b) { return a.state() == b.state(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mcf
