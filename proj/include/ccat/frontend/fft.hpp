#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "ccat/error.hpp"

namespace ccat::frontend {

/// In-place iterative radix-2 FFT. Size must be a power of two.
inline void fft_inplace(std::span<std::complex<double>> a) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw ConfigError("FFT size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, ang * static_cast<double>(k));
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

/// One-sided magnitude spectrum (n/2 + 1 bins) of a real frame zero-padded to n.
inline std::vector<double> magnitude_spectrum(std::span<const double> frame, std::size_t n) {
  std::vector<std::complex<double>> buf(n);
  for (std::size_t i = 0; i < frame.size() && i < n; ++i) buf[i] = frame[i];
  fft_inplace(buf);
  std::vector<double> mag(n / 2 + 1);
  for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::abs(buf[k]);
  return mag;
}

}  // namespace ccat::frontend
