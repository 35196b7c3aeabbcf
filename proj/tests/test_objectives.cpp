#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "ctsparse/ad/grad_check.hpp"
#include "ctsparse/core/rng.hpp"
#include "ctsparse/objectives/losses.hpp"
#include "ctsparse/objectives/metrics.hpp"

using namespace ctsparse;
using namespace ctsparse::objectives;
using Td = ad::Tensor<double>;

namespace {

Image random_image(int h, int w, uint64_t seed) {
  Image im = Image::zeros(h, w);
  Rng rng(seed);
  for (auto& p : im.pixels) p = rng.uniform();
  return im;
}

Image noisy_copy(const Image& src, double sigma, uint64_t seed) {
  Image im = src;
  Rng rng(seed);
  for (auto& p : im.pixels) p += sigma * rng.normal();
  return im;
}

Td image_tensor(const Image& im) {
  std::vector<double> v = im.pixels;
  return Td::from({1, 1, im.height, im.width}, std::move(v));
}

// Independent SSIM oracle: explicit per-window loops with two-pass weighted
// statistics (variance as sum of squared deviations from the window mean),
// no separable filtering and no E[x^2]-E[x]^2 shortcut.
double naive_ssim(const Image& a, const Image& b, double range, int win = 11,
                  double sigma = 1.5) {
  std::vector<double> t(static_cast<size_t>(win));
  const double c0 = (win - 1) / 2.0;
  double norm = 0.0;
  for (int i = 0; i < win; ++i) {
    t[static_cast<size_t>(i)] = std::exp(-0.5 * (i - c0) * (i - c0) / (sigma * sigma));
    norm += t[static_cast<size_t>(i)];
  }
  for (auto& v : t) v /= norm;

  const double c1 = 0.01 * range * 0.01 * range;
  const double c2 = 0.03 * range * 0.03 * range;
  double acc = 0.0;
  int count = 0;
  for (int r0 = 0; r0 + win <= a.height; ++r0)
    for (int c0i = 0; c0i + win <= a.width; ++c0i) {
      double mx = 0.0, my = 0.0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double wt = t[static_cast<size_t>(i)] * t[static_cast<size_t>(j)];
          mx += wt * a.at(r0 + i, c0i + j);
          my += wt * b.at(r0 + i, c0i + j);
        }
      double vx = 0.0, vy = 0.0, cov = 0.0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double wt = t[static_cast<size_t>(i)] * t[static_cast<size_t>(j)];
          const double dx = a.at(r0 + i, c0i + j) - mx;
          const double dy = b.at(r0 + i, c0i + j) - my;
          vx += wt * dx * dx;
          vy += wt * dy * dy;
          cov += wt * dx * dy;
        }
      acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
             ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return acc / count;
}

void expect_pass(const char* what, const ad::GradCheckResult& r) {
  CHECK_MESSAGE(r.pass, what, ": max rel err ", r.max_rel_err, " at ", r.worst);
}

}  // namespace

// ---------------------------------------------------------------------------
// PSNR
// ---------------------------------------------------------------------------

TEST_CASE("psnr: dB formula exactness and hand values") {
  // range 1 at MSE 0.01 is exactly 20 dB: 1/0.01 rounds to 100.0 and
  // log10(100.0) is exactly 2
  CHECK(psnr_from_mse(1.0, 0.01) == 20.0);
  CHECK(psnr_from_mse(1.0, 1.0) == 0.0);
  CHECK(psnr_from_mse(1.0, 0.0) == std::numeric_limits<double>::infinity());

  // doubling the range adds 20*log10(2) ~ 6.02 dB at any MSE
  const double shift = 20.0 * std::log10(2.0);
  for (double mse : {0.01, 0.3, 2.0})
    CHECK(psnr_from_mse(2.0, mse) - psnr_from_mse(1.0, mse) ==
          doctest::Approx(shift).epsilon(1e-13));

  CHECK_THROWS_AS(psnr_from_mse(0.0, 0.01), UsageError);
  CHECK_THROWS_AS(psnr_from_mse(1.0, -1e-3), UsageError);

  // buffer route: constant difference 0.1 over 100 samples
  std::vector<double> a(100, 0.0), b(100, 0.1);
  CHECK(psnr(a, b, 1.0) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(psnr(a, a, 1.0) == std::numeric_limits<double>::infinity());

  // hand MSE: one of four samples off by 2 at range 3 -> 10*log10(9/1)
  std::vector<double> c{1, 2, 3, 4}, d{1, 2, 3, 6};
  CHECK(psnr(c, d, 3.0) == doctest::Approx(10.0 * std::log10(9.0)).epsilon(1e-13));

  // mask restricts the MSE to selected samples: keep only the matching ones
  std::vector<uint8_t> keep{1, 1, 1, 0};
  CHECK(psnr(c, d, 3.0, &keep) == std::numeric_limits<double>::infinity());
  std::vector<uint8_t> only_last{0, 0, 0, 1};
  CHECK(psnr(c, d, 3.0, &only_last) == doctest::Approx(10.0 * std::log10(9.0 / 4.0)));

  CHECK_THROWS_AS(psnr(c, std::vector<double>{1, 2}, 1.0), ShapeError);
  CHECK_THROWS_AS(psnr(std::vector<double>{}, std::vector<double>{}, 1.0), ShapeError);
  CHECK_THROWS_AS(psnr(c, d, -1.0), UsageError);
  std::vector<uint8_t> bad_mask{1, 1};
  CHECK_THROWS_AS(psnr(c, d, 1.0, &bad_mask), ShapeError);
  std::vector<uint8_t> empty_mask{0, 0, 0, 0};
  CHECK_THROWS_AS(psnr(c, d, 1.0, &empty_mask), UsageError);
}

TEST_CASE("psnr: image overload and circular-mask evaluation") {
  Image a = random_image(16, 16, 601);
  Image b = noisy_copy(a, 0.05, 602);
  CHECK(psnr(a, b, 1.0, false) == psnr(a.pixels, b.pixels, 1.0));

  // a corner pixel lies outside the inscribed circle: the masked metric
  // ignores it, the full-frame metric does not
  Image c = a;
  c.at(0, 0) += 10.0;
  CHECK(std::isfinite(psnr(a, c, 1.0, false)));
  CHECK(psnr(a, c, 1.0, true) == std::numeric_limits<double>::infinity());

  Image small = Image::zeros(8, 8);
  CHECK_THROWS_AS(psnr(a, small, 1.0, false), ShapeError);
}

// ---------------------------------------------------------------------------
// SSIM
// ---------------------------------------------------------------------------

TEST_CASE("ssim: self-similarity, oracle agreement, ordering") {
  Image a = random_image(32, 32, 611);

  // identical inputs score exactly 1 (numerator and denominator are the same
  // expression, window by window)
  CHECK(std::abs(ssim(a, a, 1.0) - 1.0) <= 1e-12);

  // agreement with an independent two-pass windowed oracle
  for (double sigma : {0.05, 0.3}) {
    Image b = noisy_copy(a, sigma, 612 + static_cast<uint64_t>(sigma * 100));
    const double lib = ssim(a, b, 1.0);
    const double ora = naive_ssim(a, b, 1.0);
    CHECK(std::abs(lib - ora) <= 1e-8);
    CHECK(lib > 0.0);
    CHECK(lib < 1.0);
  }

  // more noise scores lower
  CHECK(ssim(a, noisy_copy(a, 0.05, 613), 1.0) > ssim(a, noisy_copy(a, 0.3, 614), 1.0));

  // symmetry
  Image b = noisy_copy(a, 0.1, 615);
  CHECK(ssim(a, b, 1.0) == doctest::Approx(ssim(b, a, 1.0)).epsilon(1e-13));

  // constant images reduce to the closed-form luminance term:
  // (2*x*y + c1) / (x^2 + y^2 + c1) with zero variances
  Image cx = Image::zeros(16, 16), cy = Image::zeros(16, 16);
  for (auto& p : cx.pixels) p = 0.4;
  for (auto& p : cy.pixels) p = 0.6;
  const double c1 = 0.01 * 0.01;
  const double lum = (2.0 * 0.4 * 0.6 + c1) / (0.4 * 0.4 + 0.6 * 0.6 + c1);
  CHECK(ssim(cx, cy, 1.0) == doctest::Approx(lum).epsilon(1e-10));
}

TEST_CASE("ssim: window taps and argument validation") {
  const auto taps = gaussian_taps(11, 1.5);
  REQUIRE(taps.size() == 11);
  double sum = 0.0;
  for (double t : taps) sum += t;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  for (int i = 0; i < 5; ++i) CHECK(taps[static_cast<size_t>(i)] ==
                                    doctest::Approx(taps[static_cast<size_t>(10 - i)]).epsilon(1e-15));
  for (int i = 0; i < 10; ++i)
    CHECK(taps[5] >= taps[static_cast<size_t>(i)]);

  CHECK_THROWS_AS(gaussian_taps(10, 1.5), ConfigError);
  CHECK_THROWS_AS(gaussian_taps(-3, 1.5), ConfigError);
  CHECK_THROWS_AS(gaussian_taps(11, 0.0), ConfigError);

  Image a = random_image(16, 16, 620);
  Image b = random_image(16, 16, 621);
  CHECK_THROWS_AS(ssim(a, random_image(16, 15, 622), 1.0), ShapeError);
  CHECK_THROWS_AS(ssim(random_image(8, 8, 623), random_image(8, 8, 624), 1.0), ShapeError);
  CHECK_THROWS_AS(ssim(a, b, 0.0), UsageError);
}

TEST_CASE("ssim: graph evaluation matches the reference metric") {
  Image a = random_image(16, 16, 631);
  Image b = noisy_copy(a, 0.1, 632);
  const double ref = ssim(a, b, 1.0);
  ad::NoGradGuard ng;
  const Td sv = ssim_value(image_tensor(a), image_tensor(b), 1.0);
  CHECK(sv.item() == doctest::Approx(ref).epsilon(1e-10));

  // a batch of two images averages both window maps; so does the mean of the
  // per-image metrics (equal window counts)
  Image c = random_image(16, 16, 633);
  Image d = noisy_copy(c, 0.2, 634);
  std::vector<double> batched = a.pixels;
  batched.insert(batched.end(), c.pixels.begin(), c.pixels.end());
  std::vector<double> batched_t = b.pixels;
  batched_t.insert(batched_t.end(), d.pixels.begin(), d.pixels.end());
  const Td sv2 = ssim_value(Td::from({2, 1, 16, 16}, std::move(batched)),
                            Td::from({2, 1, 16, 16}, std::move(batched_t)), 1.0);
  CHECK(sv2.item() ==
        doctest::Approx(0.5 * (ssim(a, b, 1.0) + ssim(c, d, 1.0))).epsilon(1e-10));
}

// ---------------------------------------------------------------------------
// differentiable losses
// ---------------------------------------------------------------------------

TEST_CASE("mse loss: value and gradients") {
  {
    ad::NoGradGuard ng;
    Td p = Td::from({1, 1, 1, 2}, {1.0, 2.0});
    Td t = Td::from({1, 1, 1, 2}, {0.0, 0.0});
    CHECK(mse_loss(p, t).item() == 2.5);
    CHECK(mse_loss(t, t).item() == 0.0);
  }

  expect_pass("mse", ad::grad_check(
                         [](std::vector<Td>& in) { return mse_loss(in[0], in[1]); },
                         [] {
                           Rng rng(640);
                           std::vector<double> p2(24), t2(24);
                           for (auto& v : p2) v = rng.uniform();
                           for (auto& v : t2) v = rng.uniform();
                           return std::vector<Td>{Td::from({2, 1, 3, 4}, std::move(p2)),
                                                  Td::from({2, 1, 3, 4}, std::move(t2))};
                         }()));
}

TEST_CASE("ssim loss: perfect match, values, gradients") {
  Image a = random_image(13, 13, 641);
  Image b = noisy_copy(a, 0.1, 642);
  {
    ad::NoGradGuard ng;
    CHECK(std::abs(ssim_loss(image_tensor(a), image_tensor(a), 1.0).item()) <= 1e-12);
    CHECK(ssim_loss(image_tensor(a), image_tensor(b), 1.0).item() ==
          doctest::Approx(1.0 - ssim(a, b, 1.0)).epsilon(1e-10));
    CHECK_THROWS_AS(ssim_value(Td::from({4}, {1, 2, 3, 4}), Td::from({4}, {1, 2, 3, 4}), 1.0),
                    ShapeError);
    CHECK_THROWS_AS(
        ssim_value(Td::zeros({1, 1, 8, 8}), Td::zeros({1, 1, 8, 8}), 1.0),
        ShapeError);
  }

  // composite check: corner pixels enter single windows through tap products
  // ~1e-6, leaving gradients of ~1e-7 near the difference-quotient roundoff
  // floor, while interior elements are truncation-limited; h=1e-4 balances
  // the two at ~1e-5 achievable agreement (each primitive op is separately
  // verified at 1e-6)
  expect_pass("ssim_value",
              ad::grad_check(
                  [](std::vector<Td>& in) { return ssim_value(in[0], in[1], 1.0); },
                  {image_tensor(a), image_tensor(b)}, 1e-4, 1e-4));
}

TEST_CASE("tv loss: hand value, invariances, gradients") {
  {
    ad::NoGradGuard ng;
    // [[0,1],[3,6]]: vertical steps 3 and 5, horizontal steps 1 and 3
    Td x = Td::from({1, 1, 2, 2}, {0, 1, 3, 6});
    CHECK(tv_loss(x).item() == doctest::Approx(3.0).epsilon(1e-7));

    // shifting by a constant does not change the variation
    Td xs = Td::from({1, 1, 2, 2}, {10, 11, 13, 16});
    CHECK(tv_loss(xs).item() == doctest::Approx(tv_loss(x).item()).epsilon(1e-12));

    // a constant image sits at the smoothing floor sqrt(eps)
    Td flat = Td::filled({1, 1, 2, 2}, 5.0);
    CHECK(tv_loss(flat).item() == doctest::Approx(std::sqrt(1e-8)).epsilon(1e-10));

    CHECK_THROWS_AS(tv_loss(Td::from({4}, {1, 2, 3, 4})), ShapeError);
    CHECK_THROWS_AS(tv_loss(Td::zeros({1, 1, 1, 4})), ShapeError);
  }

  // wide smoothing keeps the objective well-conditioned for the difference
  // quotient; the analytic path is the same at any eps
  auto tv_fn = [](std::vector<Td>& in) { return tv_loss(in[0], 1e-2); };
  Rng rng(650);
  std::vector<double> v(32);
  for (auto& e : v) e = rng.normal();
  expect_pass("tv_loss", ad::grad_check(tv_fn, {Td::from({2, 1, 4, 4}, std::move(v))}));
}

TEST_CASE("adversarial and discriminator objectives") {
  {
    ad::NoGradGuard ng;
    Td fake = Td::filled({4, 1}, 0.3);
    CHECK(adversarial_loss(fake).item() == doctest::Approx(0.7).epsilon(1e-15));

    Td real = Td::filled({4, 1}, 0.8);
    // linear form: 1 - mean(D(real)) + mean(D(fake))
    CHECK(discriminator_loss(real, fake).item() == doctest::Approx(0.5).epsilon(1e-15));
    // a perfect discriminator scores 0, a fully fooled one scores 2
    CHECK(discriminator_loss(Td::filled({2, 1}, 1.0), Td::filled({2, 1}, 0.0)).item() ==
          doctest::Approx(0.0));
    CHECK(discriminator_loss(Td::filled({2, 1}, 0.0), Td::filled({2, 1}, 1.0)).item() ==
          doctest::Approx(2.0));

    // saturating form: -log D(real) - log(1 - D(fake))
    CHECK(discriminator_loss(real, fake, true).item() ==
          doctest::Approx(-std::log(0.8) - std::log(0.7)).epsilon(1e-14));
    CHECK(discriminator_loss(Td::filled({2, 1}, 1.0), Td::filled({2, 1}, 0.0), true).item() ==
          doctest::Approx(0.0));
  }

  auto mk = [](uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(6);
    for (auto& e : v) e = 0.2 + 0.6 * rng.uniform();
    return Td::from({6, 1}, std::move(v));
  };
  expect_pass("adversarial", ad::grad_check(
                                 [](std::vector<Td>& in) { return adversarial_loss(in[0]); },
                                 {mk(651)}));
  expect_pass("discriminator linear",
              ad::grad_check(
                  [](std::vector<Td>& in) { return discriminator_loss(in[0], in[1]); },
                  {mk(652), mk(653)}));
  expect_pass("discriminator log",
              ad::grad_check(
                  [](std::vector<Td>& in) { return discriminator_loss(in[0], in[1], true); },
                  {mk(654), mk(655)}));
}

TEST_CASE("generator objective composes the weighted terms") {
  const LossWeights def{};
  CHECK(def.mse == 1.0);
  CHECK(def.ssim == 1.0);
  CHECK(def.adversarial == 1e-3);
  CHECK(def.tv == 1e-1);

  Image a = random_image(13, 13, 660);
  Image b = noisy_copy(a, 0.1, 661);
  Td pred = image_tensor(a), target = image_tensor(b);
  Td d_fake = Td::from({2, 1}, {0.4, 0.7});

  {
    ad::NoGradGuard ng;
    const double parts = def.mse * mse_loss(pred, target).item() +
                         def.ssim * ssim_loss(pred, target, 1.0).item() +
                         def.adversarial * adversarial_loss(d_fake).item() +
                         def.tv * tv_loss(pred).item();
    CHECK(generator_loss(pred, target, d_fake, def, 1.0).item() ==
          doctest::Approx(parts).epsilon(1e-12));

    // dropping the adversarial term: zero weight and undefined input agree
    LossWeights no_adv = def;
    no_adv.adversarial = 0.0;
    Td none;
    CHECK(generator_loss(pred, target, d_fake, no_adv, 1.0).item() ==
          doctest::Approx(generator_loss(pred, target, none, def, 1.0).item())
              .epsilon(1e-14));

    // zero TV weight removes that term
    LossWeights no_tv = def;
    no_tv.tv = 0.0;
    const double without_tv = def.mse * mse_loss(pred, target).item() +
                              def.ssim * ssim_loss(pred, target, 1.0).item() +
                              def.adversarial * adversarial_loss(d_fake).item();
    CHECK(generator_loss(pred, target, d_fake, no_tv, 1.0).item() ==
          doctest::Approx(without_tv).epsilon(1e-12));
  }

  // end-to-end gradient through MSE + SSIM + adversarial (TV checked on its
  // own with a wide smoothing eps)
  LossWeights w = def;
  w.tv = 0.0;
  expect_pass("generator_loss",
              ad::grad_check(
                  [&w](std::vector<Td>& in) {
                    return generator_loss(in[0], in[1], in[2], w, 1.0);
                  },
                  {pred, target, d_fake}, 1e-4, 1e-4));
}
