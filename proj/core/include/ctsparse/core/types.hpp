#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ctsparse/core/errors.hpp"

namespace ctsparse {

// Square gray-scale image, row-major, double precision. Row 0 is the top row;
// the reconstruction FOV is the circle inscribed in the square.
struct Image {
  int height = 0;
  int width = 0;
  double spacing = 1.0;  // pixel pitch in physical units
  std::vector<double> pixels;

  static Image zeros(int h, int w) {
    Image im;
    im.height = h;
    im.width = w;
    im.pixels.assign(static_cast<size_t>(h) * w, 0.0);
    return im;
  }

  double& at(int r, int c) { return pixels[static_cast<size_t>(r) * width + c]; }
  double at(int r, int c) const { return pixels[static_cast<size_t>(r) * width + c]; }
  size_t size() const { return pixels.size(); }

  void validate() const {
    if (height <= 0 || width <= 0) throw ShapeError("image: non-positive dimensions");
    if (pixels.size() != static_cast<size_t>(height) * width)
      throw ShapeError("image: pixel buffer does not match dimensions");
    for (double v : pixels)
      if (!std::isfinite(v)) throw NumericalError("image: non-finite pixel");
  }
};

// Parallel-beam sinogram: one row per view. Angles are degrees, strictly
// increasing. Detector bins are unit-spaced and centred on the rotation axis.
struct Sinogram {
  std::vector<double> angles_deg;
  int detectors = 0;
  std::vector<double> samples;  // views * detectors, row-major

  static Sinogram zeros(std::vector<double> angles, int det) {
    Sinogram s;
    s.angles_deg = std::move(angles);
    s.detectors = det;
    s.samples.assign(s.angles_deg.size() * static_cast<size_t>(det), 0.0);
    return s;
  }

  int views() const { return static_cast<int>(angles_deg.size()); }
  double& at(int v, int d) { return samples[static_cast<size_t>(v) * detectors + d]; }
  double at(int v, int d) const { return samples[static_cast<size_t>(v) * detectors + d]; }
  const double* row(int v) const { return samples.data() + static_cast<size_t>(v) * detectors; }
  double* row(int v) { return samples.data() + static_cast<size_t>(v) * detectors; }

  void validate() const {
    if (detectors <= 0) throw GeometryError("sinogram: non-positive detector count");
    if (angles_deg.empty()) throw GeometryError("sinogram: empty angle list");
    for (size_t i = 1; i < angles_deg.size(); ++i)
      if (!(angles_deg[i] > angles_deg[i - 1]))
        throw GeometryError("sinogram: angles not strictly increasing");
    if (samples.size() != angles_deg.size() * static_cast<size_t>(detectors))
      throw ShapeError("sinogram: sample buffer does not match views*detectors");
    for (double v : samples)
      if (!std::isfinite(v)) throw NumericalError("sinogram: non-finite sample");
  }
};

// The field of view shared by the projector, FBP, SART and the image metrics:
// pixel (r, c) of an n x n image counts iff its centre lies strictly inside
// the circle inscribed in the square.
inline bool in_fov(int r, int c, int n) {
  const double cx = 0.5 * (n - 1);
  const double dx = c - cx;
  const double dy = r - cx;
  return dx * dx + dy * dy < 0.25 * static_cast<double>(n) * n;
}

}  // namespace ctsparse
