// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>

namespace flow2gan {

/// Deterministic random source. The raw bit generator is std::mt19937_64,
/// but uniform and gaussian draws are mapped by hand so every platform and
/// standard library produces the identical stream for the same seed.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  void seed(uint64_t s) {
    engine_.seed(s);
    have_spare_ = false;
    spare_ = 0.0;
  }

  uint64_t bits() { return engine_(); }

  /// Uniform on [0, 1) with 53 random mantissa bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, n). n must be positive.
  int64_t uniform_int(int64_t n) {
    // Rejection-free modulo is fine here: n is tiny relative to 2^64
    // everywhere this is used, so the bias is far below noise.
    return static_cast<int64_t>(engine_() % static_cast<uint64_t>(n));
  }

  /// Standard normal via Box-Muller; caches the second value of each pair.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  /// Text round-trip is bitwise: the cached gaussian is stored as its raw
  /// bit pattern, not a formatted double.
  void save(std::ostream& os) const {
    os << engine_ << "\n"
       << (have_spare_ ? 1 : 0) << " " << std::bit_cast<uint64_t>(spare_) << "\n";
  }

  void load(std::istream& is) {
    int flag = 0;
    uint64_t spare_bits = 0;
    is >> engine_ >> flag >> spare_bits;
    have_spare_ = flag != 0;
    spare_ = std::bit_cast<double>(spare_bits);
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace flow2gan
