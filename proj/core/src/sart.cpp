#include "ctsparse/tomo/sart.hpp"

#include <cmath>
#include <string>

#include "ctsparse/tomo/projector.hpp"

namespace ctsparse::tomo {
namespace {

constexpr double kTvSmooth = 1e-8;
constexpr double kTvStep = 1e-4;

// Flat, pass-structured TV gradient so every loop auto-vectorises (the sqrt
// pass is the hot spot of the whole solver). `d` is scratch of >= h*w.
void tv_gradient_flat(const double* p, int h, int w, double* g, double* d) {
  const int64_t npix = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < npix; ++i) g[i] = 0.0;

  const int64_t nv = npix - w;  // vertical neighbour differences
  for (int64_t i = 0; i < nv; ++i) d[i] = p[i + w] - p[i];
  for (int64_t i = 0; i < nv; ++i) d[i] /= std::sqrt(d[i] * d[i] + kTvSmooth);
  for (int64_t i = 0; i < nv; ++i) g[i] -= d[i];
  for (int64_t i = 0; i < nv; ++i) g[i + w] += d[i];

  for (int r = 0; r < h; ++r) {  // horizontal, per row
    const double* pr = p + static_cast<int64_t>(r) * w;
    double* gr = g + static_cast<int64_t>(r) * w;
    for (int c = 0; c < w - 1; ++c) d[c] = pr[c + 1] - pr[c];
    for (int c = 0; c < w - 1; ++c) d[c] /= std::sqrt(d[c] * d[c] + kTvSmooth);
    for (int c = 0; c < w - 1; ++c) gr[c] -= d[c];
    for (int c = 0; c < w - 1; ++c) gr[c + 1] += d[c];
  }
}

}  // namespace

double tv_value(const Image& im) {
  double tv = 0.0;
  for (int r = 0; r < im.height; ++r)
    for (int c = 0; c < im.width; ++c) {
      if (r + 1 < im.height) {
        const double d = im.at(r + 1, c) - im.at(r, c);
        tv += std::sqrt(d * d + kTvSmooth);
      }
      if (c + 1 < im.width) {
        const double d = im.at(r, c + 1) - im.at(r, c);
        tv += std::sqrt(d * d + kTvSmooth);
      }
    }
  return tv;
}

void tv_gradient(const Image& im, Image& grad) {
  grad.height = im.height;
  grad.width = im.width;
  grad.pixels.resize(im.pixels.size());
  std::vector<double> scratch(im.pixels.size());
  tv_gradient_flat(im.pixels.data(), im.height, im.width, grad.pixels.data(), scratch.data());
}

Image sart_tv(const Sinogram& sino, int image_size, const SartConfig& cfg, const Image* init) {
  sino.validate();
  if (sino.detectors != image_size)
    throw GeometryError("sart: detector count must equal image size");
  Geometry geo{image_size, sino.angles_deg};
  geo.validate();
  if (cfg.iterations < 0 || cfg.relaxation <= 0.0)
    throw ConfigError("sart: bad iteration count or relaxation");

  const int n = image_size;
  const size_t npix = static_cast<size_t>(n) * n;
  const int views = sino.views();
  const std::vector<double> rad = to_radians(sino.angles_deg);

  // row sums: projection of an all-ones FOV; col sums: adjoint of all-ones
  std::vector<double> ones_img(npix, 1.0), masked(npix);
  mask_to_fov(ones_img.data(), n, masked.data());
  std::vector<double> row_sums(static_cast<size_t>(views) * n, 0.0);
  forward_kernel(masked.data(), n, rad.data(), views, row_sums.data());

  std::vector<double> ones_sino(static_cast<size_t>(views) * n, 1.0);
  std::vector<double> col_acc(npix, 0.0), col_sums(npix);
  adjoint_kernel(ones_sino.data(), n, rad.data(), views, col_acc.data());
  mask_to_fov(col_acc.data(), n, col_sums.data());

  if (init) {
    init->validate();
    if (init->height != n || init->width != n) throw ShapeError("sart: init image size mismatch");
  }
  Image x = init ? *init : Image::zeros(n, n);

  std::vector<double> proj(static_cast<size_t>(views) * n);
  std::vector<double> resid(proj.size());
  std::vector<double> upd_acc(npix), upd(npix), xmask(npix);
  std::vector<double> tvg(npix), tvd(npix);

  constexpr double kTiny = 1e-12;
  for (int it = 0; it < cfg.iterations; ++it) {
    mask_to_fov(x.pixels.data(), n, xmask.data());
    std::fill(proj.begin(), proj.end(), 0.0);
    forward_kernel(xmask.data(), n, rad.data(), views, proj.data());
    for (size_t i = 0; i < proj.size(); ++i) {
      const double rs = row_sums[i];
      resid[i] = rs > kTiny ? (sino.samples[i] - proj[i]) / rs : 0.0;
    }
    std::fill(upd_acc.begin(), upd_acc.end(), 0.0);
    adjoint_kernel(resid.data(), n, rad.data(), views, upd_acc.data());
    mask_to_fov(upd_acc.data(), n, upd.data());
    for (size_t i = 0; i < npix; ++i) {
      const double cs = col_sums[i];
      x.pixels[i] += cs > kTiny ? cfg.relaxation * upd[i] / cs : 0.0;
      if (x.pixels[i] < 0.0) x.pixels[i] = 0.0;
    }

    if (cfg.tv_weight > 0.0 && cfg.tv_max_iterations > 0) {
      const double step = kTvStep * cfg.tv_weight;
      for (int k = 0; k < cfg.tv_max_iterations; ++k) {
        tv_gradient_flat(x.pixels.data(), n, n, tvg.data(), tvd.data());
        double g2 = 0.0, x2 = 0.0;
        for (size_t i = 0; i < npix; ++i) {
          x.pixels[i] -= step * tvg[i];
          g2 += tvg[i] * tvg[i];
          x2 += x.pixels[i] * x.pixels[i];
        }
        // stop once the relative image change per step becomes negligible
        if (step * std::sqrt(g2) < cfg.tv_epsilon * (std::sqrt(x2) + kTiny)) break;
      }
    }

    for (double v : x.pixels)
      if (!std::isfinite(v))
        throw NumericalError("sart: non-finite image at sweep " + std::to_string(it));
  }
  return x;
}

}  // namespace ctsparse::tomo
