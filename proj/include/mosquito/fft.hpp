#pragma once

// Real-input FFT helpers backed by FFTW. Safe to call from several threads.

#include <complex>
#include <span>
#include <vector>

namespace mosquito::fft {

// n/2 + 1 bins, unnormalized.
std::vector<std::complex<double>> forward(std::span<const double> x);

// Inverse of forward(); the result is divided by n.
std::vector<double> inverse(std::span<const std::complex<double>> spectrum, std::size_t n);

} // namespace mosquito::fft
