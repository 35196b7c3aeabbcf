#pragma once

#include <cmath>
#include <vector>

#include "ctsparse/core/types.hpp"

namespace ctsparse::tomo {

// Parallel-beam scan description. Detector bins are unit-spaced, centred on
// the rotation axis, and their count must equal the image side so that the
// sinogram of an N x N image is views x N.
struct Geometry {
  int image_size = 0;
  std::vector<double> angles_deg;

  void validate() const {
    if (image_size <= 0) throw GeometryError("geometry: non-positive image size");
    if (angles_deg.empty()) throw GeometryError("geometry: empty angle list");
    for (size_t i = 0; i < angles_deg.size(); ++i) {
      if (angles_deg[i] < 0.0 || angles_deg[i] >= 180.0)
        throw GeometryError("geometry: angles must lie in [0, 180)");
      if (i > 0 && !(angles_deg[i] > angles_deg[i - 1]))
        throw GeometryError("geometry: angles not strictly increasing");
    }
  }
};

// ---------------------------------------------------------------------------
// Joseph's method, templated so the float training path and the double
// reference path share one definition. The image frame has x = col - centre,
// y = row - centre; a view at angle theta integrates along direction
// (-sin t, cos t) over rays offset s = det - centre. Pixels outside the
// inscribed circle are masked to zero before projection, and the adjoint
// masks after scattering, so the two kernels are exact matrix transposes of
// each other.
// ---------------------------------------------------------------------------

template <typename T>
void mask_to_fov(const T* src, int n, T* dst) {
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const size_t i = static_cast<size_t>(r) * n + c;
      dst[i] = in_fov(r, c, n) ? src[i] : T(0);
    }
}

// sino must hold views*n elements; one row per angle.
template <typename T>
void forward_kernel(const T* masked_img, int n, const double* angles_rad, int views, T* sino) {
  const double centre = 0.5 * (n - 1);
  for (int v = 0; v < views; ++v) {
    const double si = std::sin(angles_rad[v]);
    const double co = std::cos(angles_rad[v]);
    T* out = sino + static_cast<size_t>(v) * n;
    const bool y_major = std::fabs(co) >= std::fabs(si);
    const T w = static_cast<T>(1.0 / (y_major ? std::fabs(co) : std::fabs(si)));
    for (int d = 0; d < n; ++d) {
      const double s = d - centre;
      T acc = 0;
      if (y_major) {
        // x(y) = (s - y sin t) / cos t, one sample per image row
        for (int iy = 0; iy < n; ++iy) {
          const double fx = (s - (iy - centre) * si) / co + centre;
          const int ix0 = static_cast<int>(std::floor(fx));
          const T f = static_cast<T>(fx - ix0);
          const T* row = masked_img + static_cast<size_t>(iy) * n;
          if (ix0 >= 0 && ix0 < n) acc += (T(1) - f) * row[ix0];
          if (ix0 + 1 >= 0 && ix0 + 1 < n) acc += f * row[ix0 + 1];
        }
      } else {
        // y(x) = (s - x cos t) / sin t, one sample per image column
        for (int ix = 0; ix < n; ++ix) {
          const double fy = (s - (ix - centre) * co) / si + centre;
          const int iy0 = static_cast<int>(std::floor(fy));
          const T f = static_cast<T>(fy - iy0);
          if (iy0 >= 0 && iy0 < n) acc += (T(1) - f) * masked_img[static_cast<size_t>(iy0) * n + ix];
          if (iy0 + 1 >= 0 && iy0 + 1 < n)
            acc += f * masked_img[static_cast<size_t>(iy0 + 1) * n + ix];
        }
      }
      out[d] = w * acc;
    }
  }
}

// Scatters sino back through the transposed interpolation weights into img
// (accumulating; caller zeroes and masks). img must hold n*n elements.
template <typename T>
void adjoint_kernel(const T* sino, int n, const double* angles_rad, int views, T* img) {
  const double centre = 0.5 * (n - 1);
  for (int v = 0; v < views; ++v) {
    const double si = std::sin(angles_rad[v]);
    const double co = std::cos(angles_rad[v]);
    const T* in = sino + static_cast<size_t>(v) * n;
    const bool y_major = std::fabs(co) >= std::fabs(si);
    const T w = static_cast<T>(1.0 / (y_major ? std::fabs(co) : std::fabs(si)));
    for (int d = 0; d < n; ++d) {
      const double s = d - centre;
      const T g = w * in[d];
      if (g == T(0)) continue;
      if (y_major) {
        for (int iy = 0; iy < n; ++iy) {
          const double fx = (s - (iy - centre) * si) / co + centre;
          const int ix0 = static_cast<int>(std::floor(fx));
          const T f = static_cast<T>(fx - ix0);
          T* row = img + static_cast<size_t>(iy) * n;
          if (ix0 >= 0 && ix0 < n) row[ix0] += (T(1) - f) * g;
          if (ix0 + 1 >= 0 && ix0 + 1 < n) row[ix0 + 1] += f * g;
        }
      } else {
        for (int ix = 0; ix < n; ++ix) {
          const double fy = (s - (ix - centre) * co) / si + centre;
          const int iy0 = static_cast<int>(std::floor(fy));
          const T f = static_cast<T>(fy - iy0);
          if (iy0 >= 0 && iy0 < n) img[static_cast<size_t>(iy0) * n + ix] += (T(1) - f) * g;
          if (iy0 + 1 >= 0 && iy0 + 1 < n) img[static_cast<size_t>(iy0 + 1) * n + ix] += f * g;
        }
      }
    }
  }
}

inline std::vector<double> to_radians(const std::vector<double>& angles_deg) {
  std::vector<double> rad(angles_deg.size());
  for (size_t i = 0; i < rad.size(); ++i) rad[i] = angles_deg[i] * (3.14159265358979323846 / 180.0);
  return rad;
}

// Line integrals of img (masked to the FOV circle) at the given angles, in
// pixel-length units.
Sinogram radon_forward(const Image& img, const std::vector<double>& angles_deg);

// Exact adjoint of radon_forward (unfiltered scatter + FOV mask). This is the
// A^T used by SART, not a reconstruction by itself.
Image backproject(const Sinogram& sino, int image_size);

}  // namespace ctsparse::tomo
