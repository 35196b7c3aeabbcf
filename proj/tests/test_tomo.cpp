#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <cstdio>
#include <vector>

#include "ctsparse/core/phantom.hpp"
#include "ctsparse/core/rng.hpp"
#include "ctsparse/objectives/metrics.hpp"
#include "ctsparse/tomo/fbp.hpp"
#include "ctsparse/tomo/fft.hpp"
#include "ctsparse/tomo/projector.hpp"
#include "ctsparse/tomo/sart.hpp"

using namespace ctsparse;
using namespace ctsparse::tomo;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<double> uniform_angles(int views) {
  std::vector<double> a(views);
  for (int i = 0; i < views; ++i) a[i] = 180.0 * i / views;
  return a;
}

// uniform unit disk of radius R pixels, centred on the grid
Image make_disk(int n, double radius) {
  Image im = Image::zeros(n, n);
  const double half = 0.5 * (n - 1);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const double dx = c - half, dy = r - half;
      if (dx * dx + dy * dy <= radius * radius) im.at(r, c) = 1.0;
    }
  return im;
}

}  // namespace

TEST_CASE("fft: unitary impulse response and exact round trip") {
  const int n = 8;
  std::vector<std::complex<double>> buf(n, {0.0, 0.0});
  buf[0] = {1.0, 0.0};
  fft_inplace(buf.data(), n, false);
  const double expect = 1.0 / std::sqrt(8.0);
  for (const auto& z : buf) {
    CHECK(z.real() == doctest::Approx(expect).epsilon(1e-14));
    CHECK(z.imag() == doctest::Approx(0.0).scale(1).epsilon(1e-14));
  }

  Rng rng(3);
  std::vector<std::complex<double>> sig(64), orig;
  for (auto& z : sig) z = {rng.normal(), rng.normal()};
  orig = sig;
  double e0 = 0.0, e1 = 0.0;
  for (const auto& z : sig) e0 += std::norm(z);
  fft_inplace(sig.data(), 64, false);
  for (const auto& z : sig) e1 += std::norm(z);
  CHECK(e1 == doctest::Approx(e0).epsilon(1e-12));  // unitary scaling
  fft_inplace(sig.data(), 64, true);
  for (size_t i = 0; i < sig.size(); ++i)
    CHECK(std::abs(sig[i] - orig[i]) < 1e-12);

  CHECK_THROWS_AS(fft_inplace(sig.data(), 48, false), ShapeError);
}

TEST_CASE("projector: disk projections match the analytic chord length") {
  const int n = 64;
  const double R = 16.0;
  const Image disk = make_disk(n, R);
  std::vector<double> angles;
  for (double a = 0.0; a < 180.0; a += 7.5) angles.push_back(a);

  const Sinogram sino = radon_forward(disk, angles);
  const double centre = 0.5 * (n - 1);
  double se = 0.0;
  int count = 0;
  for (int v = 0; v < sino.views(); ++v)
    for (int d = 0; d < n; ++d) {
      const double s = d - centre;
      const double chord = s * s < R * R ? 2.0 * std::sqrt(R * R - s * s) : 0.0;
      const double diff = sino.at(v, d) - chord;
      se += diff * diff;
      ++count;
    }
  const double rms_rel = std::sqrt(se / count) / (2.0 * R);
  CHECK(rms_rel < 0.02);

  // a centred disk projects the same mass at every angle
  double mass = 0.0;
  for (double p : disk.pixels) mass += p;
  for (int v = 0; v < sino.views(); ++v) {
    double view_mass = 0.0;
    for (int d = 0; d < n; ++d) view_mass += sino.at(v, d);
    CHECK(view_mass == doctest::Approx(mass).epsilon(0.01));
  }
}

TEST_CASE("projector: forward and backproject are exact transposes") {
  const int n = 32;
  const std::vector<double> angles = {0.0, 13.7, 45.0, 77.3, 90.0, 120.5, 166.25};
  Rng rng(17);

  Image x = Image::zeros(n, n);
  for (auto& v : x.pixels) v = rng.normal();
  Sinogram y = Sinogram::zeros(angles, n);
  for (auto& v : y.samples) v = rng.normal();

  const Sinogram ax = radon_forward(x, angles);
  const Image aty = backproject(y, n);

  double lhs = 0.0, rhs = 0.0;
  for (size_t i = 0; i < ax.samples.size(); ++i) lhs += ax.samples[i] * y.samples[i];
  for (size_t i = 0; i < x.pixels.size(); ++i) rhs += x.pixels[i] * aty.pixels[i];
  CHECK(std::fabs(lhs - rhs) <= 1e-10 * std::max(std::fabs(lhs), std::fabs(rhs)));
}

TEST_CASE("projector: geometry validation") {
  Geometry g;
  CHECK_THROWS_AS(g.validate(), GeometryError);  // empty
  g.image_size = 8;
  g.angles_deg = {0.0, 180.0};
  CHECK_THROWS_AS(g.validate(), GeometryError);  // out of range
  g.angles_deg = {10.0, 5.0};
  CHECK_THROWS_AS(g.validate(), GeometryError);  // not increasing
  g.angles_deg = {5.0, 5.0};
  CHECK_THROWS_AS(g.validate(), GeometryError);  // duplicate

  Image rect = Image::zeros(8, 9);
  CHECK_THROWS_AS(radon_forward(rect, {0.0}), GeometryError);

  Sinogram s = Sinogram::zeros({0.0, 90.0}, 16);
  CHECK_THROWS_AS(backproject(s, 8), GeometryError);  // detector/size mismatch
}

TEST_CASE("fbp: angular weights cover the half turn") {
  const auto w180 = angle_weights(uniform_angles(180));
  for (double w : w180) CHECK(w == doctest::Approx(kPi / 180.0).epsilon(1e-12));

  const auto w45 = angle_weights(uniform_angles(45));
  for (double w : w45) CHECK(w == doctest::Approx(kPi / 45.0).epsilon(1e-12));

  CHECK(angle_weights({42.0})[0] == doctest::Approx(kPi).epsilon(1e-12));

  const auto irregular = angle_weights({0.0, 10.0, 90.0});
  CHECK(irregular[0] == doctest::Approx(50.0 * kPi / 180.0).epsilon(1e-12));
  CHECK(irregular[1] == doctest::Approx(45.0 * kPi / 180.0).epsilon(1e-12));
  CHECK(irregular[2] == doctest::Approx(85.0 * kPi / 180.0).epsilon(1e-12));
  double sum = 0.0;
  for (double w : irregular) sum += w;
  CHECK(sum == doctest::Approx(kPi).epsilon(1e-12));
}

TEST_CASE("fbp: head phantom round trip recovers the image") {
  const int n = 64;
  PhantomSpec spec;
  spec.size = n;
  const Image gt = make_phantom(spec);
  const Sinogram sino = radon_forward(gt, uniform_angles(180));

  const Image rec = fbp(sino, n);
  const double db = objectives::psnr(rec, gt, 1.0, /*fov_only=*/true);
  MESSAGE("fbp 180-view psnr: ", db);
  // Recorded from the first oracle run (20.54 dB). The thin full-intensity
  // shell dominates the error at 64x64; a widely used reference FBP scores
  // 20.08 dB on identical data, so >= 20 is the honest bar at this size.
  CHECK(db >= 20.0);

  // outside the FOV circle the reconstruction is identically zero
  CHECK(rec.at(0, 0) == 0.0);
  CHECK(rec.at(n - 1, n - 1) == 0.0);

  // linearity: fbp(radon(c*img)) = c*fbp(radon(img))
  Image scaled = gt;
  for (auto& v : scaled.pixels) v *= 3.5;
  const Image rec3 = fbp(radon_forward(scaled, uniform_angles(180)), n);
  for (size_t i = 0; i < rec.pixels.size(); ++i)
    CHECK(rec3.pixels[i] == doctest::Approx(3.5 * rec.pixels[i]).epsilon(1e-5).scale(1.0));

  // zero sinogram -> zero image
  const Image rec0 = fbp(Sinogram::zeros(uniform_angles(16), n), n);
  for (double v : rec0.pixels) CHECK(v == 0.0);
}

TEST_CASE("fbp: hann window attenuates relative to the plain ramp") {
  const int views = 8, det = 64;
  Rng rng(5);
  std::vector<double> noise(static_cast<size_t>(views) * det);
  for (auto& v : noise) v = rng.normal();

  std::vector<double> ram = noise, han = noise;
  filter_rows(ram.data(), views, det, FbpWindow::RamLak);
  filter_rows(han.data(), views, det, FbpWindow::Hann);

  double e_ram = 0.0, e_han = 0.0;
  for (double v : ram) e_ram += v * v;
  for (double v : han) e_han += v * v;
  CHECK(e_han < e_ram);  // hann response <= ramp at every frequency
  CHECK(e_han > 0.0);
}

TEST_CASE("fbp: input validation") {
  Sinogram s = Sinogram::zeros({0.0, 90.0}, 16);
  CHECK_THROWS_AS(fbp(s, 8), GeometryError);  // detectors != image size
  s.angles_deg = {90.0, 0.0};
  CHECK_THROWS_AS(fbp(s, 16), GeometryError);
}

TEST_CASE("tv: gradient matches finite differences of the value") {
  const int n = 12;
  Rng rng(9);
  Image im = Image::zeros(n, n);
  for (auto& v : im.pixels) v = rng.uniform();

  Image g;
  tv_gradient(im, g);
  const double h = 1e-6;
  for (int probe : {0, 5, 37, 71, 88, 143}) {
    Image p = im, m = im;
    p.pixels[probe] += h;
    m.pixels[probe] -= h;
    const double fd = (tv_value(p) - tv_value(m)) / (2.0 * h);
    CHECK(g.pixels[probe] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("sart: one ray, one pixel hand calculation") {
  // A is the 1x1 identity, b = 2, relaxation 0.2: one sweep moves x from 0 to
  // 0.2 * (2 - 0) / 1 = 0.4 exactly.
  Sinogram b = Sinogram::zeros({0.0}, 1);
  b.samples[0] = 2.0;
  SartConfig cfg;
  cfg.iterations = 1;
  cfg.tv_weight = 0.0;
  cfg.relaxation = 0.2;
  const Image x = sart_tv(b, 1, cfg);
  CHECK(x.at(0, 0) == 0.4);

  cfg.iterations = 2;  // second sweep: 0.4 + 0.2*(2 - 0.4) = 0.72
  const Image x2 = sart_tv(b, 1, cfg);
  CHECK(x2.at(0, 0) == doctest::Approx(0.72).epsilon(1e-15));
}

TEST_CASE("sart: projection residual shrinks and never rises early") {
  const int n = 32;
  PhantomSpec spec;
  spec.size = 32;
  spec.kind = PhantomKind::RandomEllipses;
  spec.ellipse_count = 3;
  spec.seed = 2;
  const Image gt = make_phantom(spec);
  const Sinogram sino = radon_forward(gt, uniform_angles(24));

  SartConfig cfg;
  cfg.tv_weight = 0.0;
  auto resid_norm = [&](const Image& im) {
    const Sinogram p = radon_forward(im, sino.angles_deg);
    double num = 0.0;
    for (size_t i = 0; i < p.samples.size(); ++i) {
      const double d = p.samples[i] - sino.samples[i];
      num += d * d;
    }
    return std::sqrt(num);
  };

  // monotonic over the first 10 sweeps on noiseless data
  double prev = resid_norm(Image::zeros(n, n));
  for (int it = 1; it <= 10; ++it) {
    cfg.iterations = it;
    const double cur = resid_norm(sart_tv(sino, n, cfg));
    CHECK(cur <= prev + 1e-9);
    prev = cur;
  }

  // relaxed sweeps whittle the residual down slowly but surely: from 1.0
  // relative to below 4% after 200 sweeps on this consistent system
  cfg.iterations = 200;
  const Image rec = sart_tv(sino, n, cfg);
  double den = 0.0;
  for (double v : sino.samples) den += v * v;
  CHECK(resid_norm(rec) / std::sqrt(den) < 0.05);
  for (double v : rec.pixels) CHECK(v >= 0.0);

  // zero data, zero seed: exact fixed point
  const Image z = sart_tv(Sinogram::zeros(uniform_angles(8), n), n, cfg);
  for (double v : z.pixels) CHECK(v == 0.0);
}

TEST_CASE("sart-tv: higher ssim than fbp on a 45-view scan") {
  const int n = 64;
  PhantomSpec spec;
  spec.size = n;
  const Image gt = make_phantom(spec);
  const Sinogram sparse = radon_forward(gt, uniform_angles(45));

  const Image rec_fbp = fbp(sparse, n);
  const Image rec_sart = sart_tv(sparse, n, SartConfig{});  // stock settings

  const double ssim_fbp = objectives::ssim(rec_fbp, gt, 1.0);
  const double ssim_sart = objectives::ssim(rec_sart, gt, 1.0);
  MESSAGE("45-view fbp ssim: ", ssim_fbp, ", sart-tv ssim: ", ssim_sart);
  CHECK(ssim_sart > ssim_fbp);
}

TEST_CASE("sart: configuration validation") {
  Sinogram b = Sinogram::zeros({0.0}, 4);
  SartConfig cfg;
  cfg.relaxation = 0.0;
  CHECK_THROWS_AS(sart_tv(b, 4, cfg), ConfigError);
  cfg.relaxation = 0.2;
  CHECK_THROWS_AS(sart_tv(b, 8, cfg), GeometryError);  // detector mismatch

  Image wrong = Image::zeros(3, 3);
  CHECK_THROWS_AS(sart_tv(b, 4, SartConfig{}, &wrong), ShapeError);
}
