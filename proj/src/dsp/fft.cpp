// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#include "flow2gan/dsp/fft.hpp"

#include <cmath>
#include <map>

#include "flow2gan/core/errors.hpp"

namespace flow2gan::dsp {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

namespace {

// Twiddle factors e^{-2pi i j/n} for j < n/2, cached per size.
const std::vector<std::complex<double>>& twiddles(size_t n) {
  static thread_local std::map<size_t, std::vector<std::complex<double>>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<std::complex<double>> w(n / 2);
  for (size_t j = 0; j < n / 2; ++j) {
    double ang = -2.0 * M_PI * static_cast<double>(j) / static_cast<double>(n);
    w[j] = {std::cos(ang), std::sin(ang)};
  }
  return cache.emplace(n, std::move(w)).first->second;
}

}  // namespace

void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw ConfigError("fft size must be a power of two, got " + std::to_string(n));
  if (n == 1) return;

  // Bit-reversal permutation.
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  const auto& w = twiddles(n);
  for (size_t len = 2; len <= n; len <<= 1) {
    const size_t stride = n / len;
    for (size_t i = 0; i < n; i += len) {
      for (size_t j = 0; j < len / 2; ++j) {
        std::complex<double> tw = w[j * stride];
        if (inverse) tw = std::conj(tw);
        std::complex<double> u = a[i + j];
        std::complex<double> v = a[i + j + len / 2] * tw;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
      }
    }
  }
  if (inverse) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv_n;
  }
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x) {
  std::vector<std::complex<double>> a(x.size());
  for (size_t i = 0; i < x.size(); ++i) a[i] = {x[i], 0.0};
  fft_inplace(a, false);
  a.resize(x.size() / 2 + 1);
  return a;
}

}  // namespace flow2gan::dsp
