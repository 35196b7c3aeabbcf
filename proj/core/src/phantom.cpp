#include "ctsparse/core/phantom.hpp"

#include <cmath>
#include <vector>

#include "ctsparse/core/rng.hpp"

namespace ctsparse {
namespace {

constexpr double kPi = 3.14159265358979323846;

struct Ellipse {
  double value;   // additive intensity
  double a, b;    // semi-axes along the (rotated) x and y directions
  double cx, cy;  // centre
  double phi;     // rotation, radians, counter-clockwise
};

// Classic head phantom (angles in degrees here, converted below). Intensities
// are the original ones -- dense skull shell at 1.0, interior contrasts of
// 0.01-0.02 -- so the summed image stays inside [0, 1].
constexpr double kHead[10][6] = {
    {1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0},
    {-0.98, 0.6624, 0.8740, 0.00, -0.0184, 0.0},
    {-0.02, 0.1100, 0.3100, 0.22, 0.0000, -18.0},
    {-0.02, 0.1600, 0.4100, -0.22, 0.0000, 18.0},
    {0.01, 0.2100, 0.2500, 0.00, 0.3500, 0.0},
    {0.01, 0.0460, 0.0460, 0.00, 0.1000, 0.0},
    {0.01, 0.0460, 0.0460, 0.00, -0.1000, 0.0},
    {0.01, 0.0460, 0.0230, -0.08, -0.6050, 0.0},
    {0.01, 0.0230, 0.0230, 0.00, -0.6060, 0.0},
    {0.01, 0.0230, 0.0460, 0.06, -0.6050, 0.0},
};

void render(Image& im, const std::vector<Ellipse>& es) {
  const int n = im.height;
  const double half = 0.5 * (n - 1);
  for (int r = 0; r < n; ++r) {
    // y grows upward in the phantom frame, row index grows downward
    const double y = (half - r) / half;
    for (int c = 0; c < n; ++c) {
      const double x = (c - half) / half;
      if (x * x + y * y > 1.0) continue;  // clip to the inscribed circle
      double v = 0.0;
      for (const Ellipse& e : es) {
        const double co = std::cos(e.phi);
        const double si = std::sin(e.phi);
        const double dx = x - e.cx;
        const double dy = y - e.cy;
        const double u = (dx * co + dy * si) / e.a;
        const double w = (-dx * si + dy * co) / e.b;
        if (u * u + w * w <= 1.0) v += e.value;
      }
      im.at(r, c) = v;
    }
  }
}

}  // namespace

Image make_phantom(const PhantomSpec& spec) {
  if (spec.size < 16 || spec.size % 16 != 0)
    throw ConfigError("phantom: size must be a positive multiple of 16");
  Image im = Image::zeros(spec.size, spec.size);

  std::vector<Ellipse> es;
  if (spec.kind == PhantomKind::SheppLogan) {
    for (const auto& row : kHead)
      es.push_back({row[0], row[1], row[2], row[3], row[4], row[5] * kPi / 180.0});
    render(im, es);
  } else {
    if (spec.ellipse_count < 1) throw ConfigError("phantom: ellipse count must be >= 1");
    Rng rng(spec.seed);
    es.resize(spec.ellipse_count);
    for (auto& e : es) {
      // centres inside radius 0.5, semi-axes <= 0.4: features land inside the
      // unit circle on their own; rendering clips to it regardless
      const double ang = rng.uniform(0.0, 2.0 * kPi);
      const double rad = 0.5 * std::sqrt(rng.uniform());
      e.cx = rad * std::cos(ang);
      e.cy = rad * std::sin(ang);
      e.a = rng.uniform(0.06, 0.40);
      e.b = rng.uniform(0.06, 0.40);
      e.phi = rng.uniform(0.0, kPi);
      e.value = rng.uniform(0.15, 0.50);
    }
    render(im, es);
    for (auto& v : im.pixels) {
      if (v < 0.0) v = 0.0;
      if (v > 1.0) v = 1.0;
    }
  }
  return im;
}

}  // namespace ctsparse
