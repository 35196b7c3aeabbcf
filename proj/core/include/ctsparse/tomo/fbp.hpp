#pragma once

#include <vector>

#include "ctsparse/core/types.hpp"
#include "ctsparse/tomo/fft.hpp"

namespace ctsparse::tomo {

enum class FbpWindow { RamLak, Hann };

// Per-view angular quadrature weights in radians: half the gap to each
// neighbour, wrapping across the 180-degree period. For n uniform views this
// is pi/n everywhere.
std::vector<double> angle_weights(const std::vector<double>& angles_deg);

// Filtered backprojection. Rows are ramp-filtered via a zero-padded FFT
// (padding to the next power of two >= 2x detectors), optionally apodised
// with a Hann window, then backprojected pixel-wise over the FOV circle with
// the angular weights above. Filter and backprojection are templated so the
// differentiable float path reuses the exact same code.
Image fbp(const Sinogram& sino, int image_size, FbpWindow window = FbpWindow::RamLak);

// --- kernels ---------------------------------------------------------------

// |f|-ramp (times 2, matching the frequency grid in cycles/sample), Hann
// apodisation optional. Self-adjoint as a real linear map per row, because
// the frequency response is real and even.
template <typename T>
void filter_rows(T* sino, int views, int det, FbpWindow window) {
  const int64_t m = next_pow2(2 * static_cast<int64_t>(det));
  std::vector<double> h(static_cast<size_t>(m));
  for (int64_t k = 0; k < m; ++k) {
    const double f = (k <= m / 2 ? k : k - m) / static_cast<double>(m);  // cycles/sample
    h[k] = 2.0 * std::fabs(f);
    if (window == FbpWindow::Hann)
      h[k] *= 0.5 * (1.0 + std::cos(2.0 * 3.14159265358979323846 * f));
  }
  std::vector<std::complex<T>> buf(static_cast<size_t>(m));
  for (int v = 0; v < views; ++v) {
    T* row = sino + static_cast<size_t>(v) * det;
    for (int64_t i = 0; i < m; ++i)
      buf[i] = std::complex<T>(i < det ? row[i] : T(0), T(0));
    fft_inplace(buf.data(), m, false);
    for (int64_t i = 0; i < m; ++i) buf[i] *= static_cast<T>(h[i]);
    fft_inplace(buf.data(), m, true);
    for (int i = 0; i < det; ++i) row[i] = buf[i].real();
  }
}

// img[p] = sum_v (w_v / 2) * lerp(filtered_v, s(p, v)); pixels outside the
// FOV circle stay zero.
template <typename T>
void fbp_gather(const T* filtered, int n, const double* angles_rad, const double* weights,
                int views, T* img) {
  const double centre = 0.5 * (n - 1);
  std::vector<double> co(views), si(views), wv(views);
  for (int v = 0; v < views; ++v) {
    co[v] = std::cos(angles_rad[v]);
    si[v] = std::sin(angles_rad[v]);
    wv[v] = 0.5 * weights[v];
  }
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      T* out = img + static_cast<size_t>(r) * n + c;
      if (!in_fov(r, c, n)) {
        *out = T(0);
        continue;
      }
      const double x = c - centre;
      const double y = r - centre;
      T acc = 0;
      for (int v = 0; v < views; ++v) {
        const double s = x * co[v] + y * si[v] + centre;
        const int d0 = static_cast<int>(std::floor(s));
        const T f = static_cast<T>(s - d0);
        const T* row = filtered + static_cast<size_t>(v) * n;
        T val = 0;
        if (d0 >= 0 && d0 < n) val += (T(1) - f) * row[d0];
        if (d0 + 1 >= 0 && d0 + 1 < n) val += f * row[d0 + 1];
        acc += static_cast<T>(wv[v]) * val;
      }
      *out = acc;
    }
}

// Exact transpose of fbp_gather: scatters an image-space gradient back into
// sinogram rows (accumulating; caller zeroes).
template <typename T>
void fbp_scatter(const T* img, int n, const double* angles_rad, const double* weights, int views,
                 T* sino) {
  const double centre = 0.5 * (n - 1);
  std::vector<double> co(views), si(views), wv(views);
  for (int v = 0; v < views; ++v) {
    co[v] = std::cos(angles_rad[v]);
    si[v] = std::sin(angles_rad[v]);
    wv[v] = 0.5 * weights[v];
  }
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      if (!in_fov(r, c, n)) continue;
      const T g = img[static_cast<size_t>(r) * n + c];
      if (g == T(0)) continue;
      const double x = c - centre;
      const double y = r - centre;
      for (int v = 0; v < views; ++v) {
        const double s = x * co[v] + y * si[v] + centre;
        const int d0 = static_cast<int>(std::floor(s));
        const T f = static_cast<T>(s - d0);
        const T gv = static_cast<T>(wv[v]) * g;
        T* row = sino + static_cast<size_t>(v) * n;
        if (d0 >= 0 && d0 < n) row[d0] += (T(1) - f) * gv;
        if (d0 + 1 >= 0 && d0 + 1 < n) row[d0 + 1] += f * gv;
      }
    }
}

}  // namespace ctsparse::tomo
