#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace cavlock {

// Real-input forward transform, X[k] = sum_n x[n] exp(-2 pi i k n / N),
// returning the N/2 + 1 non-negative-frequency bins. Backed by FFTW.
std::vector<std::complex<double>> rfft(std::span<const double> x);

// Inverse of rfft: irfft(rfft(x), x.size()) == x up to rounding.
std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n);

} // namespace cavlock
