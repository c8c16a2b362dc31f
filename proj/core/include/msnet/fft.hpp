#pragma once

#include <complex>
#include <vector>

namespace msnet::fft {

// In-place iterative radix-2 FFT. Length must be a power of two.
void transform(std::vector<std::complex<double>>& x, bool inverse);

// Direct O(n^2) DFT, kept as an independent reference for tests.
std::vector<std::complex<double>> dft_reference(
    const std::vector<std::complex<double>>& x, bool inverse);

}  // namespace msnet::fft
