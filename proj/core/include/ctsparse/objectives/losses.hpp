#pragma once

// Training objectives, composed from autodiff ops so every term
// backpropagates. The weighted generator objective is
//   w.mse * MSE + w.ssim * (1 - SSIM) + w.adversarial * (1 - D(fake))
//   + w.tv * TV
// and the discriminator target is the linear pair 1 - D(real) + D(fake)
// (a saturating log form is available behind a flag).

#include "ctsparse/ad/nn_ops.hpp"
#include "ctsparse/objectives/metrics.hpp"

namespace ctsparse::objectives {

struct LossWeights {
  double mse = 1.0;
  double ssim = 1.0;
  double adversarial = 1e-3;
  double tv = 1e-1;
};

template <typename T>
ad::Tensor<T> mse_loss(const ad::Tensor<T>& pred, const ad::Tensor<T>& target) {
  auto d = ad::sub(pred, target);
  return ad::mean(ad::mul(d, d));
}

// Gaussian-window SSIM as a graph op; returns the mean SSIM map value.
template <typename T>
ad::Tensor<T> ssim_value(const ad::Tensor<T>& pred, const ad::Tensor<T>& target, T data_range,
                         const SsimConfig& cfg = {}) {
  if (pred.rank() != 4) throw ShapeError("ssim: expected NCHW");
  if (pred.dim(2) < cfg.window || pred.dim(3) < cfg.window)
    throw ShapeError("ssim: image smaller than the window");
  const int64_t c = pred.dim(1);

  // constant depthwise kernel [C,1,win,win]
  const std::vector<double> taps = gaussian_taps(cfg.window, cfg.sigma);
  std::vector<T> kv(static_cast<size_t>(c) * cfg.window * cfg.window);
  for (int64_t ch = 0; ch < c; ++ch)
    for (int i = 0; i < cfg.window; ++i)
      for (int j = 0; j < cfg.window; ++j)
        kv[static_cast<size_t>((ch * cfg.window + i) * cfg.window + j)] =
            static_cast<T>(taps[i] * taps[j]);
  auto kernel = ad::Tensor<T>::from({c, 1, cfg.window, cfg.window}, std::move(kv));
  ad::Tensor<T> none;
  const int g = static_cast<int>(c);
  auto blur = [&](const ad::Tensor<T>& t) { return ad::conv2d(t, kernel, none, 1, 0, g); };

  auto mx = blur(pred);
  auto my = blur(target);
  auto mxy = ad::mul(mx, my);
  auto vx = ad::sub(blur(ad::mul(pred, pred)), ad::mul(mx, mx));
  auto vy = ad::sub(blur(ad::mul(target, target)), ad::mul(my, my));
  auto cov = ad::sub(blur(ad::mul(pred, target)), mxy);

  const T c1 = static_cast<T>(cfg.k1 * data_range) * static_cast<T>(cfg.k1 * data_range);
  const T c2 = static_cast<T>(cfg.k2 * data_range) * static_cast<T>(cfg.k2 * data_range);
  auto num = ad::mul(ad::axpb(mxy, T(2), c1), ad::axpb(cov, T(2), c2));
  auto den = ad::mul(ad::axpb(ad::add(ad::mul(mx, mx), ad::mul(my, my)), T(1), c1),
                     ad::axpb(ad::add(vx, vy), T(1), c2));
  return ad::mean(ad::div(num, den));
}

template <typename T>
ad::Tensor<T> ssim_loss(const ad::Tensor<T>& pred, const ad::Tensor<T>& target, T data_range,
                        const SsimConfig& cfg = {}) {
  return ad::axpb(ssim_value(pred, target, data_range, cfg), T(-1), T(1));
}

// Smoothed anisotropic total variation, averaged over the element count.
template <typename T>
ad::Tensor<T> tv_loss(const ad::Tensor<T>& x, T eps = static_cast<T>(1e-8)) {
  if (x.rank() != 4) throw ShapeError("tv_loss: expected NCHW");
  const int64_t h = x.dim(2), w = x.dim(3);
  if (h < 2 || w < 2) throw ShapeError("tv_loss: spatial dims must be >= 2");
  auto dv = ad::sub(ad::slice_axis(x, 2, 1, h - 1), ad::slice_axis(x, 2, 0, h - 1));
  auto dh = ad::sub(ad::slice_axis(x, 3, 1, w - 1), ad::slice_axis(x, 3, 0, w - 1));
  auto s = ad::add(ad::sum(ad::smooth_abs(dv, eps)), ad::sum(ad::smooth_abs(dh, eps)));
  return ad::axpb(s, static_cast<T>(1.0 / static_cast<double>(x.numel())), T(0));
}

// Generator's adversarial term: 1 - mean(D(fake)).
template <typename T>
ad::Tensor<T> adversarial_loss(const ad::Tensor<T>& d_fake) {
  return ad::axpb(ad::mean(d_fake), T(-1), T(1));
}

// Discriminator objective. The default is the linear form
// 1 - mean(D(real)) + mean(D(fake)); log_form switches to the saturating
// -log D(real) - log(1 - D(fake)) variant.
template <typename T>
ad::Tensor<T> discriminator_loss(const ad::Tensor<T>& d_real, const ad::Tensor<T>& d_fake,
                                 bool log_form = false) {
  if (!log_form)
    return ad::add(ad::axpb(ad::mean(d_real), T(-1), T(1)), ad::mean(d_fake));
  auto real_term = ad::axpb(ad::mean(ad::log_op(d_real)), T(-1), T(0));
  auto fake_term = ad::axpb(ad::mean(ad::log_op(ad::axpb(d_fake, T(-1), T(1)))), T(-1), T(0));
  return ad::add(real_term, fake_term);
}

// Full weighted generator objective. Pass an undefined d_fake (or zero
// adversarial weight) to drop the adversarial term.
template <typename T>
ad::Tensor<T> generator_loss(const ad::Tensor<T>& pred, const ad::Tensor<T>& target,
                             const ad::Tensor<T>& d_fake, const LossWeights& w, T data_range,
                             const SsimConfig& ssim_cfg = {}) {
  auto loss = ad::axpb(mse_loss(pred, target), static_cast<T>(w.mse), T(0));
  loss = ad::add(loss, ad::axpb(ssim_loss(pred, target, data_range, ssim_cfg),
                                static_cast<T>(w.ssim), T(0)));
  if (d_fake.defined() && w.adversarial != 0.0)
    loss = ad::add(loss, ad::axpb(adversarial_loss(d_fake), static_cast<T>(w.adversarial), T(0)));
  if (w.tv != 0.0) loss = ad::add(loss, ad::axpb(tv_loss(pred), static_cast<T>(w.tv), T(0)));
  return loss;
}

}  // namespace ctsparse::objectives
