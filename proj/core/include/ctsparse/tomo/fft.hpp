#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "ctsparse/core/errors.hpp"

namespace ctsparse::tomo {

inline int64_t next_pow2(int64_t n) {
  int64_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 FFT, unitary convention: both directions scale
// by 1/sqrt(n), so fft(ifft(x)) == x and a length-4 impulse transforms to a
// constant 0.5. Twiddles are evaluated in double regardless of T.
template <typename T>
void fft_inplace(std::complex<T>* a, int64_t n, bool inverse) {
  if (n <= 0 || (n & (n - 1)) != 0) throw ShapeError("fft: length must be a power of two");

  for (int64_t i = 1, j = 0; i < n; ++i) {  // bit-reversal permutation
    int64_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  const double sign = inverse ? 1.0 : -1.0;
  for (int64_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * 3.14159265358979323846 / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (int64_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int64_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u(a[i + k]);
        const std::complex<double> v = std::complex<double>(a[i + k + len / 2]) * w;
        a[i + k] = std::complex<T>(u + v);
        a[i + k + len / 2] = std::complex<T>(u - v);
        w *= wl;
      }
    }
  }

  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(n)));
  for (int64_t i = 0; i < n; ++i) a[i] *= scale;
}

template <typename T>
void fft_inplace(std::vector<std::complex<T>>& a, bool inverse) {
  fft_inplace(a.data(), static_cast<int64_t>(a.size()), inverse);
}

}  // namespace ctsparse::tomo
