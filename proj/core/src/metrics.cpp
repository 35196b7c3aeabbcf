#include "ctsparse/objectives/metrics.hpp"

#include <cmath>
#include <limits>

namespace ctsparse::objectives {
namespace {

// horizontal then vertical valid-mode pass with the same taps
void separable_blur(const std::vector<double>& src, int h, int w, const std::vector<double>& taps,
                    std::vector<double>& tmp, std::vector<double>& dst) {
  const int k = static_cast<int>(taps.size());
  const int wv = w - k + 1;
  const int hv = h - k + 1;
  tmp.assign(static_cast<size_t>(h) * wv, 0.0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < wv; ++c) {
      double s = 0.0;
      const double* p = src.data() + static_cast<size_t>(r) * w + c;
      for (int i = 0; i < k; ++i) s += taps[i] * p[i];
      tmp[static_cast<size_t>(r) * wv + c] = s;
    }
  dst.assign(static_cast<size_t>(hv) * wv, 0.0);
  for (int r = 0; r < hv; ++r)
    for (int c = 0; c < wv; ++c) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += taps[i] * tmp[static_cast<size_t>(r + i) * wv + c];
      dst[static_cast<size_t>(r) * wv + c] = s;
    }
}

}  // namespace

std::vector<double> gaussian_taps(int window, double sigma) {
  if (window < 1 || window % 2 == 0) throw ConfigError("ssim: window must be odd and positive");
  if (!(sigma > 0.0)) throw ConfigError("ssim: sigma must be positive");
  std::vector<double> taps(window);
  const double c = (window - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - c;
    taps[i] = std::exp(-0.5 * d * d / (sigma * sigma));
    sum += taps[i];
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

double psnr_from_mse(double data_range, double mse) {
  if (!(data_range > 0.0)) throw UsageError("psnr: data range must be positive");
  if (!(mse >= 0.0)) throw UsageError("psnr: mse must be non-negative");
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

double psnr(const std::vector<double>& a, const std::vector<double>& b, double data_range,
            const std::vector<uint8_t>* mask) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("psnr: size mismatch");
  if (mask && mask->size() != a.size()) throw ShapeError("psnr: mask size mismatch");
  double se = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    const double d = a[i] - b[i];
    se += d * d;
    ++count;
  }
  if (count == 0) throw UsageError("psnr: empty mask");
  return psnr_from_mse(data_range, se / static_cast<double>(count));
}

double psnr(const Image& a, const Image& b, double data_range, bool fov_only) {
  if (a.height != b.height || a.width != b.width) throw ShapeError("psnr: image size mismatch");
  if (!fov_only) return psnr(a.pixels, b.pixels, data_range);
  std::vector<uint8_t> mask(a.pixels.size());
  for (int r = 0; r < a.height; ++r)
    for (int c = 0; c < a.width; ++c)
      mask[static_cast<size_t>(r) * a.width + c] = in_fov(r, c, a.height) ? 1 : 0;
  return psnr(a.pixels, b.pixels, data_range, &mask);
}

double ssim(const Image& a, const Image& b, double data_range, const SsimConfig& cfg) {
  if (a.height != b.height || a.width != b.width) throw ShapeError("ssim: image size mismatch");
  if (a.height < cfg.window || a.width < cfg.window)
    throw ShapeError("ssim: image smaller than the window");
  if (!(data_range > 0.0)) throw UsageError("ssim: data range must be positive");

  const int h = a.height, w = a.width;
  const std::vector<double> taps = gaussian_taps(cfg.window, cfg.sigma);

  std::vector<double> xx(a.pixels.size()), yy(a.pixels.size()), xy(a.pixels.size());
  for (size_t i = 0; i < a.pixels.size(); ++i) {
    xx[i] = a.pixels[i] * a.pixels[i];
    yy[i] = b.pixels[i] * b.pixels[i];
    xy[i] = a.pixels[i] * b.pixels[i];
  }

  std::vector<double> tmp, mx, my, mxx, myy, mxy;
  separable_blur(a.pixels, h, w, taps, tmp, mx);
  separable_blur(b.pixels, h, w, taps, tmp, my);
  separable_blur(xx, h, w, taps, tmp, mxx);
  separable_blur(yy, h, w, taps, tmp, myy);
  separable_blur(xy, h, w, taps, tmp, mxy);

  const double c1 = cfg.k1 * data_range * cfg.k1 * data_range;
  const double c2 = cfg.k2 * data_range * cfg.k2 * data_range;
  double acc = 0.0;
  for (size_t i = 0; i < mx.size(); ++i) {
    const double vx = mxx[i] - mx[i] * mx[i];
    const double vy = myy[i] - my[i] * my[i];
    const double cov = mxy[i] - mx[i] * my[i];
    const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
    acc += num / den;
  }
  return acc / static_cast<double>(mx.size());
}

}  // namespace ctsparse::objectives
