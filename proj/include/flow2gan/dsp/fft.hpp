// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <vector>

namespace flow2gan::dsp {

/// In-place iterative radix-2 FFT. a.size() must be a power of two.
/// inverse=true applies the conjugate transform and divides by n.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse);

/// Forward DFT of a real buffer, one-sided: returns bins 0..n/2.
std::vector<std::complex<double>> rfft(const std::vector<double>& x);

bool is_power_of_two(int n);

}  // namespace flow2gan::dsp
