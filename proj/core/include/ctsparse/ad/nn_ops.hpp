#pragma once

// Neural-net ops: convolutions, norms, pooling and the attention gates.
// Convolutions run through im2col plus an accumulate-ordered GEMM whose inner
// loops are contiguous, so they vectorise well and stay bit-deterministic.

#include "ctsparse/ad/ops.hpp"

namespace ctsparse::ad {

namespace detail {

template <typename T>
void im2col(const T* x, int64_t c, int64_t h, int64_t w, int kh, int kw, int stride, int pad,
            int64_t ho, int64_t wo, T* col) {
  const int64_t p = ho * wo;
  for (int64_t ci = 0; ci < c; ++ci)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj) {
        T* crow = col + ((ci * kh + ki) * kw + kj) * p;
        for (int64_t oy = 0; oy < ho; ++oy) {
          const int64_t iy = oy * stride - pad + ki;
          T* dst = crow + oy * wo;
          if (iy < 0 || iy >= h) {
            for (int64_t ox = 0; ox < wo; ++ox) dst[ox] = T(0);
            continue;
          }
          const T* srow = x + (ci * h + iy) * w;
          for (int64_t ox = 0; ox < wo; ++ox) {
            const int64_t ix = ox * stride - pad + kj;
            dst[ox] = (ix >= 0 && ix < w) ? srow[ix] : T(0);
          }
        }
      }
}

template <typename T>
void col2im_acc(const T* col, int64_t c, int64_t h, int64_t w, int kh, int kw, int stride, int pad,
                int64_t ho, int64_t wo, T* x) {
  const int64_t p = ho * wo;
  for (int64_t ci = 0; ci < c; ++ci)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj) {
        const T* crow = col + ((ci * kh + ki) * kw + kj) * p;
        for (int64_t oy = 0; oy < ho; ++oy) {
          const int64_t iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          T* xrow = x + (ci * h + iy) * w;
          for (int64_t ox = 0; ox < wo; ++ox) {
            const int64_t ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < w) xrow[ix] += crow[oy * wo + ox];
          }
        }
      }
}

}  // namespace detail

// 2-D convolution, NCHW, square kernel, symmetric zero padding, grouped.
// w is [Cout, Cin/groups, k, k]; bias (may be an undefined Tensor) is [Cout].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride, int pad,
                 int groups) {
  if (x.rank() != 4 || w.rank() != 4) throw ShapeError("conv2d: expected 4-D input and weight");
  if (stride < 1 || pad < 0 || groups < 1) throw ConfigError("conv2d: bad stride/pad/groups");
  const int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), win = x.dim(3);
  const int64_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (cin % groups != 0 || cout % groups != 0)
    throw ShapeError("conv2d: groups must divide both channel counts");
  if (w.dim(1) != cin / groups)
    throw ShapeError("conv2d: weight channel dim mismatch (got " + shape_str(w.dims()) + ")");
  const bool has_bias = b.defined();
  if (has_bias && (b.rank() != 1 || b.dim(0) != cout)) throw ShapeError("conv2d: bad bias shape");
  const int64_t ho = (h + 2 * pad - kh) / stride + 1;
  const int64_t wo = (win + 2 * pad - kw) / stride + 1;
  if (h + 2 * pad < kh || win + 2 * pad < kw)
    throw ShapeError("conv2d: kernel larger than padded input");

  const int64_t kall = cin * kh * kw;     // col rows, all groups
  const int64_t kg = kall / groups;       // col rows per group
  const int64_t mg = cout / groups;       // output channels per group
  const int64_t p = ho * wo;
  const bool one_by_one = (kh == 1 && kw == 1 && stride == 1 && pad == 0);

  std::vector<T> out(static_cast<size_t>(n * cout * p), T(0));
  {
    std::vector<T> col;
    if (!one_by_one) col.resize(static_cast<size_t>(kall * p));
    for (int64_t bi = 0; bi < n; ++bi) {
      const T* xs = x.data() + bi * cin * h * win;
      const T* cptr = xs;  // 1x1 stride-1 conv reads the input as its own col
      if (!one_by_one) {
        detail::im2col(xs, cin, h, win, static_cast<int>(kh), static_cast<int>(kw), stride, pad,
                       ho, wo, col.data());
        cptr = col.data();
      }
      for (int g = 0; g < groups; ++g)
        detail::gemm_acc(w.data() + g * mg * kg, cptr + g * kg * p,
                         out.data() + (bi * cout + g * mg) * p, mg, kg, p);
    }
    if (has_bias)
      for (int64_t bi = 0; bi < n; ++bi)
        for (int64_t co = 0; co < cout; ++co) {
          T* row = out.data() + (bi * cout + co) * p;
          const T bv = b.values()[static_cast<size_t>(co)];
          for (int64_t i = 0; i < p; ++i) row[i] += bv;
        }
  }

  std::vector<Tensor<T>> inputs = has_bias ? std::vector<Tensor<T>>{x, w, b}
                                           : std::vector<Tensor<T>>{x, w};
  auto bwd = [n, cin, h, win, cout, kh, kw, stride, pad, groups, ho, wo, kall, kg, mg, p,
              one_by_one, has_bias](Node<T>& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];

    if (has_bias && self.parents[2]->requires_grad) {
      auto& pb = self.parents[2];
      pb->ensure_grad();
      for (int64_t bi = 0; bi < n; ++bi)
        for (int64_t co = 0; co < cout; ++co) {
          const T* row = self.grad.data() + (bi * cout + co) * p;
          T s = 0;
          for (int64_t i = 0; i < p; ++i) s += row[i];
          pb->grad[static_cast<size_t>(co)] += s;
        }
    }

    const bool need_w = pw->requires_grad;
    const bool need_x = px->requires_grad;
    if (!need_w && !need_x) return;
    if (need_w) pw->ensure_grad();
    if (need_x) px->ensure_grad();

    std::vector<T> col, colt, dcol;
    if (!one_by_one) col.resize(static_cast<size_t>(kall * p));
    if (need_w) colt.resize(static_cast<size_t>(kall * p));
    if (need_x && !one_by_one) dcol.resize(static_cast<size_t>(kall * p));

    for (int64_t bi = 0; bi < n; ++bi) {
      const T* xs = px->values.data() + bi * cin * h * win;
      const T* cptr = xs;
      if (!one_by_one) {
        detail::im2col(xs, cin, h, win, static_cast<int>(kh), static_cast<int>(kw), stride, pad,
                       ho, wo, col.data());
        cptr = col.data();
      }
      const T* dout = self.grad.data() + bi * cout * p;

      if (need_w) {
        // transpose col so the K axis is contiguous for the axpy update
        for (int64_t k = 0; k < kall; ++k)
          for (int64_t i = 0; i < p; ++i) colt[i * kall + k] = cptr[k * p + i];
        for (int g = 0; g < groups; ++g)
          for (int64_t co = 0; co < mg; ++co) {
            T* dwrow = pw->grad.data() + (g * mg + co) * kg;
            const T* drow = dout + (g * mg + co) * p;
            for (int64_t i = 0; i < p; ++i) {
              const T dv = drow[i];
              const T* ct = colt.data() + i * kall + g * kg;
              for (int64_t k = 0; k < kg; ++k) dwrow[k] += dv * ct[k];
            }
          }
      }

      if (need_x) {
        T* dx = one_by_one ? px->grad.data() + bi * cin * h * win : dcol.data();
        if (!one_by_one) std::fill(dcol.begin(), dcol.end(), T(0));
        for (int g = 0; g < groups; ++g)
          for (int64_t co = 0; co < mg; ++co) {
            const T* wrow = pw->values.data() + (g * mg + co) * kg;
            const T* drow = dout + (g * mg + co) * p;
            for (int64_t k = 0; k < kg; ++k) {
              const T wv = wrow[k];
              T* drow2 = dx + (g * kg + k) * p;
              for (int64_t i = 0; i < p; ++i) drow2[i] += wv * drow[i];
            }
          }
        if (!one_by_one)
          detail::col2im_acc(dcol.data(), cin, h, win, static_cast<int>(kh),
                             static_cast<int>(kw), stride, pad, ho, wo,
                             px->grad.data() + bi * cin * h * win);
      }
    }
  };
  return make_result<T>({n, cout, ho, wo}, std::move(out), std::move(inputs), std::move(bwd));
}

// Transposed convolution with kernel == stride (non-overlapping upsampling).
// w is [Cin, Cout, k, k], bias [Cout] (may be undefined).
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           int stride) {
  if (x.rank() != 4 || w.rank() != 4)
    throw ShapeError("conv_transpose2d: expected 4-D input and weight");
  const int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), win = x.dim(3);
  const int64_t cout = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(0) != cin) throw ShapeError("conv_transpose2d: weight input-channel mismatch");
  if (kh != stride || kw != stride)
    throw ShapeError("conv_transpose2d: kernel must equal stride");
  const bool has_bias = b.defined();
  if (has_bias && (b.rank() != 1 || b.dim(0) != cout))
    throw ShapeError("conv_transpose2d: bad bias shape");

  const int64_t ho = h * stride, wo = win * stride;
  const int64_t p = h * win;
  const int64_t kk = static_cast<int64_t>(kh) * kw;

  std::vector<T> out(static_cast<size_t>(n * cout * ho * wo), T(0));
  {
    std::vector<T> y(static_cast<size_t>(cout * p));
    for (int64_t bi = 0; bi < n; ++bi) {
      const T* xs = x.data() + bi * cin * p;
      for (int64_t ab = 0; ab < kk; ++ab) {
        std::fill(y.begin(), y.end(), T(0));
        for (int64_t co = 0; co < cout; ++co) {
          T* yrow = y.data() + co * p;
          for (int64_t ci = 0; ci < cin; ++ci) {
            const T wv = w.values()[static_cast<size_t>((ci * cout + co) * kk + ab)];
            const T* xrow = xs + ci * p;
            for (int64_t i = 0; i < p; ++i) yrow[i] += wv * xrow[i];
          }
        }
        const int64_t a = ab / kw, bb = ab % kw;
        for (int64_t co = 0; co < cout; ++co) {
          const T bv = has_bias ? b.values()[static_cast<size_t>(co)] : T(0);
          for (int64_t i = 0; i < h; ++i) {
            T* orow = out.data() + ((bi * cout + co) * ho + i * stride + a) * wo + bb;
            const T* yrow = y.data() + co * p + i * win;
            for (int64_t j = 0; j < win; ++j) orow[j * stride] = yrow[j] + bv;
          }
        }
      }
    }
  }

  std::vector<Tensor<T>> inputs = has_bias ? std::vector<Tensor<T>>{x, w, b}
                                           : std::vector<Tensor<T>>{x, w};
  auto bwd = [n, cin, h, win, cout, kh, kw, stride, p, kk, ho, wo, has_bias](Node<T>& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    const bool need_x = px->requires_grad;
    const bool need_w = pw->requires_grad;
    if (need_x) px->ensure_grad();
    if (need_w) pw->ensure_grad();

    if (has_bias && self.parents[2]->requires_grad) {
      auto& pb = self.parents[2];
      pb->ensure_grad();
      for (int64_t bi = 0; bi < n; ++bi)
        for (int64_t co = 0; co < cout; ++co) {
          const T* row = self.grad.data() + (bi * cout + co) * ho * wo;
          T s = 0;
          for (int64_t i = 0; i < ho * wo; ++i) s += row[i];
          pb->grad[static_cast<size_t>(co)] += s;
        }
    }
    if (!need_x && !need_w) return;

    std::vector<T> dy(static_cast<size_t>(cout * p));
    for (int64_t bi = 0; bi < n; ++bi) {
      const T* xs = px->values.data() + bi * cin * p;
      T* dxs = need_x ? px->grad.data() + bi * cin * p : nullptr;
      for (int64_t ab = 0; ab < kk; ++ab) {
        const int64_t a = ab / kw, bb = ab % kw;
        for (int64_t co = 0; co < cout; ++co)  // gather the (a, b) sublattice
          for (int64_t i = 0; i < h; ++i) {
            const T* grow = self.grad.data() + ((bi * cout + co) * ho + i * stride + a) * wo + bb;
            T* dyrow = dy.data() + co * p + i * win;
            for (int64_t j = 0; j < win; ++j) dyrow[j] = grow[j * stride];
          }
        if (need_w)
          for (int64_t ci = 0; ci < cin; ++ci) {
            const T* xrow = xs + ci * p;
            for (int64_t co = 0; co < cout; ++co) {
              const T* dyrow = dy.data() + co * p;
              T s = 0;
              for (int64_t i = 0; i < p; ++i) s += xrow[i] * dyrow[i];
              pw->grad[static_cast<size_t>((ci * cout + co) * kk + ab)] += s;
            }
          }
        if (need_x)
          for (int64_t ci = 0; ci < cin; ++ci) {
            T* dxrow = dxs + ci * p;
            for (int64_t co = 0; co < cout; ++co) {
              const T wv = pw->values[static_cast<size_t>((ci * cout + co) * kk + ab)];
              const T* dyrow = dy.data() + co * p;
              for (int64_t i = 0; i < p; ++i) dxrow[i] += wv * dyrow[i];
            }
          }
      }
    }
  };
  return make_result<T>({n, cout, ho, wo}, std::move(out), std::move(inputs), std::move(bwd));
}

// 2x2 stride-2 max pooling; ties resolve to the first maximum in row-major
// window order, and the gradient routes to exactly that element.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("maxpool2d: expected NCHW");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("maxpool2d: spatial dims must be even");
  const int64_t ho = h / 2, wo = w / 2;

  std::vector<T> out(static_cast<size_t>(n * c * ho * wo));
  auto argmax = std::make_shared<std::vector<int32_t>>(out.size());
  for (int64_t pl = 0; pl < n * c; ++pl) {
    const T* src = x.data() + pl * h * w;
    T* dst = out.data() + pl * ho * wo;
    int32_t* am = argmax->data() + pl * ho * wo;
    for (int64_t oy = 0; oy < ho; ++oy)
      for (int64_t ox = 0; ox < wo; ++ox) {
        const int64_t base = (2 * oy) * w + 2 * ox;
        int64_t best = base;
        T bv = src[base];
        const int64_t cand[3] = {base + 1, base + w, base + w + 1};
        for (int64_t idx : cand)
          if (src[idx] > bv) {
            bv = src[idx];
            best = idx;
          }
        dst[oy * wo + ox] = bv;
        am[oy * wo + ox] = static_cast<int32_t>(best);
      }
  }
  return make_result<T>({n, c, ho, wo}, std::move(out), {x},
                        [n, c, h, w, ho, wo, argmax](Node<T>& self) {
                          auto& px = self.parents[0];
                          if (!px->requires_grad) return;
                          px->ensure_grad();
                          for (int64_t pl = 0; pl < n * c; ++pl) {
                            const T* g = self.grad.data() + pl * ho * wo;
                            const int32_t* am = argmax->data() + pl * ho * wo;
                            T* dx = px->grad.data() + pl * h * w;
                            for (int64_t i = 0; i < ho * wo; ++i) dx[am[i]] += g[i];
                          }
                        });
}

// --- normalisation -----------------------------------------------------------

// Group normalisation over (channels/groups, H, W) per sample. gamma and beta
// are per-channel. groups must divide the channel count.
template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     int groups, T eps = static_cast<T>(1e-5)) {
  if (x.rank() != 4) throw ShapeError("group_norm: expected NCHW");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (groups < 1 || c % groups != 0) throw ShapeError("group_norm: groups must divide channels");
  if (gamma.numel() != c || beta.numel() != c)
    throw ShapeError("group_norm: gamma/beta must be per-channel");
  const int64_t cpg = c / groups;
  const int64_t m = cpg * hw;

  auto xhat = std::make_shared<std::vector<T>>(x.values().size());
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(n * groups));
  std::vector<T> out(x.values().size());

  for (int64_t bi = 0; bi < n; ++bi)
    for (int64_t g = 0; g < groups; ++g) {
      const T* xs = x.data() + (bi * c + g * cpg) * hw;
      T mean = 0;
      for (int64_t i = 0; i < m; ++i) mean += xs[i];
      mean /= static_cast<T>(m);
      T var = 0;
      for (int64_t i = 0; i < m; ++i) {
        const T d = xs[i] - mean;
        var += d * d;
      }
      var /= static_cast<T>(m);
      const T inv = T(1) / std::sqrt(var + eps);
      (*inv_std)[static_cast<size_t>(bi * groups + g)] = inv;
      T* xh = xhat->data() + (bi * c + g * cpg) * hw;
      T* o = out.data() + (bi * c + g * cpg) * hw;
      for (int64_t ci = 0; ci < cpg; ++ci) {
        const T ga = gamma.values()[static_cast<size_t>(g * cpg + ci)];
        const T be = beta.values()[static_cast<size_t>(g * cpg + ci)];
        for (int64_t i = 0; i < hw; ++i) {
          const T v = (xs[ci * hw + i] - mean) * inv;
          xh[ci * hw + i] = v;
          o[ci * hw + i] = ga * v + be;
        }
      }
    }

  auto bwd = [n, c, hw, groups, cpg, m, xhat, inv_std](Node<T>& self) {
    auto& px = self.parents[0];
    auto& pg = self.parents[1];
    auto& pb = self.parents[2];
    if (pg->requires_grad || pb->requires_grad) {
      if (pg->requires_grad) pg->ensure_grad();
      if (pb->requires_grad) pb->ensure_grad();
      for (int64_t ch = 0; ch < c; ++ch) {
        T sg = 0, sb = 0;
        for (int64_t bi = 0; bi < n; ++bi) {
          const T* g = self.grad.data() + (bi * c + ch) * hw;
          const T* xh = xhat->data() + (bi * c + ch) * hw;
          for (int64_t i = 0; i < hw; ++i) {
            sg += g[i] * xh[i];
            sb += g[i];
          }
        }
        if (pg->requires_grad) pg->grad[static_cast<size_t>(ch)] += sg;
        if (pb->requires_grad) pb->grad[static_cast<size_t>(ch)] += sb;
      }
    }
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (int64_t bi = 0; bi < n; ++bi)
      for (int64_t g = 0; g < groups; ++g) {
        const T inv = (*inv_std)[static_cast<size_t>(bi * groups + g)];
        const T* go = self.grad.data() + (bi * c + g * cpg) * hw;
        const T* xh = xhat->data() + (bi * c + g * cpg) * hw;
        T s1 = 0, s2 = 0;
        for (int64_t ci = 0; ci < cpg; ++ci) {
          const T ga = pg->values[static_cast<size_t>(g * cpg + ci)];
          for (int64_t i = 0; i < hw; ++i) {
            const T dxh = go[ci * hw + i] * ga;
            s1 += dxh;
            s2 += dxh * xh[ci * hw + i];
          }
        }
        s1 /= static_cast<T>(m);
        s2 /= static_cast<T>(m);
        T* dx = px->grad.data() + (bi * c + g * cpg) * hw;
        for (int64_t ci = 0; ci < cpg; ++ci) {
          const T ga = pg->values[static_cast<size_t>(g * cpg + ci)];
          for (int64_t i = 0; i < hw; ++i) {
            const T dxh = go[ci * hw + i] * ga;
            dx[ci * hw + i] += inv * (dxh - s1 - xh[ci * hw + i] * s2);
          }
        }
      }
  };
  return make_result<T>(x.dims(), std::move(out), {x, gamma, beta}, std::move(bwd));
}

// Batch normalisation. In training mode (batch >= 2) it normalises with batch
// statistics and updates running_mean/var in place (momentum mixing, unbiased
// running variance); in eval mode it applies the stored statistics and the
// gradient treats them as constants.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                     T momentum = static_cast<T>(0.1), T eps = static_cast<T>(1e-5)) {
  if (x.rank() != 4) throw ShapeError("batch_norm: expected NCHW");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c ||
      running_var.numel() != c)
    throw ShapeError("batch_norm: per-channel parameter shape mismatch");
  if (training && n < 2) throw ShapeError("batch_norm: degenerate batch of 1 in training mode");

  const int64_t m = n * hw;
  std::vector<T> out(x.values().size());

  if (!training) {
    // subtract the mean before scaling so an input equal to the running mean
    // maps to beta exactly
    std::vector<T> scale(static_cast<size_t>(c));
    for (int64_t ch = 0; ch < c; ++ch) {
      const T inv = T(1) / std::sqrt(running_var.values()[static_cast<size_t>(ch)] + eps);
      scale[static_cast<size_t>(ch)] = gamma.values()[static_cast<size_t>(ch)] * inv;
    }
    for (int64_t bi = 0; bi < n; ++bi)
      for (int64_t ch = 0; ch < c; ++ch) {
        const T sc = scale[static_cast<size_t>(ch)];
        const T mu = running_mean.values()[static_cast<size_t>(ch)];
        const T bt = beta.values()[static_cast<size_t>(ch)];
        const T* xs = x.data() + (bi * c + ch) * hw;
        T* o = out.data() + (bi * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) o[i] = sc * (xs[i] - mu) + bt;
      }
    auto rm = running_mean, rv = running_var;  // captured as constants
    auto bwd = [n, c, hw, eps, rm, rv](Node<T>& self) {
      auto& px = self.parents[0];
      auto& pg = self.parents[1];
      auto& pb = self.parents[2];
      for (int64_t ch = 0; ch < c; ++ch) {
        const T inv = T(1) / std::sqrt(rv.values()[static_cast<size_t>(ch)] + eps);
        const T mu = rm.values()[static_cast<size_t>(ch)];
        const T ga = pg->values[static_cast<size_t>(ch)];
        T sg = 0, sb = 0;
        for (int64_t bi = 0; bi < n; ++bi) {
          const T* g = self.grad.data() + (bi * c + ch) * hw;
          const T* xs = px->values.data() + (bi * c + ch) * hw;
          if (px->requires_grad) {
            px->ensure_grad();
            T* dx = px->grad.data() + (bi * c + ch) * hw;
            for (int64_t i = 0; i < hw; ++i) dx[i] += g[i] * ga * inv;
          }
          for (int64_t i = 0; i < hw; ++i) {
            sg += g[i] * (xs[i] - mu) * inv;
            sb += g[i];
          }
        }
        if (pg->requires_grad) {
          pg->ensure_grad();
          pg->grad[static_cast<size_t>(ch)] += sg;
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          pb->grad[static_cast<size_t>(ch)] += sb;
        }
      }
    };
    return make_result<T>(x.dims(), std::move(out), {x, gamma, beta}, std::move(bwd));
  }

  auto xhat = std::make_shared<std::vector<T>>(x.values().size());
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(c));
  for (int64_t ch = 0; ch < c; ++ch) {
    T mean = 0;
    for (int64_t bi = 0; bi < n; ++bi) {
      const T* xs = x.data() + (bi * c + ch) * hw;
      for (int64_t i = 0; i < hw; ++i) mean += xs[i];
    }
    mean /= static_cast<T>(m);
    T var = 0;
    for (int64_t bi = 0; bi < n; ++bi) {
      const T* xs = x.data() + (bi * c + ch) * hw;
      for (int64_t i = 0; i < hw; ++i) {
        const T d = xs[i] - mean;
        var += d * d;
      }
    }
    var /= static_cast<T>(m);
    const T inv = T(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(ch)] = inv;

    running_mean.values()[static_cast<size_t>(ch)] =
        (T(1) - momentum) * running_mean.values()[static_cast<size_t>(ch)] + momentum * mean;
    const T var_unbiased = var * static_cast<T>(m) / static_cast<T>(m - 1);
    running_var.values()[static_cast<size_t>(ch)] =
        (T(1) - momentum) * running_var.values()[static_cast<size_t>(ch)] + momentum * var_unbiased;

    const T ga = gamma.values()[static_cast<size_t>(ch)];
    const T be = beta.values()[static_cast<size_t>(ch)];
    for (int64_t bi = 0; bi < n; ++bi) {
      const T* xs = x.data() + (bi * c + ch) * hw;
      T* xh = xhat->data() + (bi * c + ch) * hw;
      T* o = out.data() + (bi * c + ch) * hw;
      for (int64_t i = 0; i < hw; ++i) {
        const T v = (xs[i] - mean) * inv;
        xh[i] = v;
        o[i] = ga * v + be;
      }
    }
  }

  auto bwd = [n, c, hw, m, xhat, inv_std](Node<T>& self) {
    auto& px = self.parents[0];
    auto& pg = self.parents[1];
    auto& pb = self.parents[2];
    for (int64_t ch = 0; ch < c; ++ch) {
      T sg = 0, sb = 0;
      for (int64_t bi = 0; bi < n; ++bi) {
        const T* g = self.grad.data() + (bi * c + ch) * hw;
        const T* xh = xhat->data() + (bi * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          sg += g[i] * xh[i];
          sb += g[i];
        }
      }
      if (pg->requires_grad) {
        pg->ensure_grad();
        pg->grad[static_cast<size_t>(ch)] += sg;
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        pb->grad[static_cast<size_t>(ch)] += sb;
      }
      if (px->requires_grad) {
        px->ensure_grad();
        const T inv = (*inv_std)[static_cast<size_t>(ch)];
        const T ga = pg->values[static_cast<size_t>(ch)];
        const T s1 = sb * ga / static_cast<T>(m);
        const T s2 = sg * ga / static_cast<T>(m);
        for (int64_t bi = 0; bi < n; ++bi) {
          const T* g = self.grad.data() + (bi * c + ch) * hw;
          const T* xh = xhat->data() + (bi * c + ch) * hw;
          T* dx = px->grad.data() + (bi * c + ch) * hw;
          for (int64_t i = 0; i < hw; ++i)
            dx[i] += inv * (g[i] * ga - s1 - xh[i] * s2);
        }
      }
    }
  };
  return make_result<T>(x.dims(), std::move(out), {x, gamma, beta}, std::move(bwd));
}

// --- pooling to axis vectors (the coordinate-attention encodings) -----------

// mean over W: [N,C,H,W] -> [N,C,H,1]
template <typename T>
Tensor<T> pool_width(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("pool_width: expected NCHW");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<T> out(static_cast<size_t>(n * c * h));
  const T inv = T(1) / static_cast<T>(w);
  for (int64_t p = 0; p < n * c; ++p)
    for (int64_t i = 0; i < h; ++i) {
      const T* row = x.data() + (p * h + i) * w;
      T s = 0;
      for (int64_t j = 0; j < w; ++j) s += row[j];
      out[static_cast<size_t>(p * h + i)] = s * inv;
    }
  return make_result<T>({n, c, h, 1}, std::move(out), {x}, [n, c, h, w, inv](Node<T>& self) {
    auto& px = self.parents[0];
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (int64_t p = 0; p < n * c; ++p)
      for (int64_t i = 0; i < h; ++i) {
        const T g = self.grad[static_cast<size_t>(p * h + i)] * inv;
        T* row = px->grad.data() + (p * h + i) * w;
        for (int64_t j = 0; j < w; ++j) row[j] += g;
      }
  });
}

// mean over H: [N,C,H,W] -> [N,C,1,W]
template <typename T>
Tensor<T> pool_height(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("pool_height: expected NCHW");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<T> out(static_cast<size_t>(n * c * w), T(0));
  const T inv = T(1) / static_cast<T>(h);
  for (int64_t p = 0; p < n * c; ++p) {
    T* o = out.data() + p * w;
    for (int64_t i = 0; i < h; ++i) {
      const T* row = x.data() + (p * h + i) * w;
      for (int64_t j = 0; j < w; ++j) o[j] += row[j];
    }
    for (int64_t j = 0; j < w; ++j) o[j] *= inv;
  }
  return make_result<T>({n, c, 1, w}, std::move(out), {x}, [n, c, h, w, inv](Node<T>& self) {
    auto& px = self.parents[0];
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (int64_t p = 0; p < n * c; ++p) {
      const T* g = self.grad.data() + p * w;
      for (int64_t i = 0; i < h; ++i) {
        T* row = px->grad.data() + (p * h + i) * w;
        for (int64_t j = 0; j < w; ++j) row[j] += g[j] * inv;
      }
    }
  });
}

// mean over H and W: [N,C,H,W] -> [N,C,1,1]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("global_avg_pool: expected NCHW");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> out(static_cast<size_t>(n * c));
  const T inv = T(1) / static_cast<T>(hw);
  for (int64_t p = 0; p < n * c; ++p) {
    const T* s = x.data() + p * hw;
    T acc = 0;
    for (int64_t i = 0; i < hw; ++i) acc += s[i];
    out[static_cast<size_t>(p)] = acc * inv;
  }
  return make_result<T>({n, c, 1, 1}, std::move(out), {x}, [n, c, hw, inv](Node<T>& self) {
    auto& px = self.parents[0];
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (int64_t p = 0; p < n * c; ++p) {
      const T g = self.grad[static_cast<size_t>(p)] * inv;
      T* row = px->grad.data() + p * hw;
      for (int64_t i = 0; i < hw; ++i) row[i] += g;
    }
  });
}

// --- attention gates --------------------------------------------------------

// y[n,c,i,j] = x[n,c,i,j] * gh[n,c,i] * gw[n,c,j]; gh is [N,C,H,1], gw is
// [N,C,1,W]. The per-axis gate products of coordinate attention.
template <typename T>
Tensor<T> coord_gate(const Tensor<T>& x, const Tensor<T>& gh, const Tensor<T>& gw) {
  if (x.rank() != 4 || gh.rank() != 4 || gw.rank() != 4)
    throw ShapeError("coord_gate: expected NCHW operands");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (gh.dim(0) != n || gh.dim(1) != c || gh.dim(2) != h || gh.dim(3) != 1)
    throw ShapeError("coord_gate: gh must be [N,C,H,1]");
  if (gw.dim(0) != n || gw.dim(1) != c || gw.dim(2) != 1 || gw.dim(3) != w)
    throw ShapeError("coord_gate: gw must be [N,C,1,W]");

  std::vector<T> out(x.values().size());
  for (int64_t p = 0; p < n * c; ++p)
    for (int64_t i = 0; i < h; ++i) {
      const T a = gh.values()[static_cast<size_t>(p * h + i)];
      const T* xrow = x.data() + (p * h + i) * w;
      const T* gwp = gw.data() + p * w;
      T* o = out.data() + (p * h + i) * w;
      for (int64_t j = 0; j < w; ++j) o[j] = xrow[j] * a * gwp[j];
    }

  auto bwd = [n, c, h, w](Node<T>& self) {
    auto& px = self.parents[0];
    auto& ph = self.parents[1];
    auto& pw = self.parents[2];
    if (px->requires_grad) px->ensure_grad();
    if (ph->requires_grad) ph->ensure_grad();
    if (pw->requires_grad) pw->ensure_grad();
    for (int64_t p = 0; p < n * c; ++p) {
      const T* gwp = pw->values.data() + p * w;
      for (int64_t i = 0; i < h; ++i) {
        const T a = ph->values[static_cast<size_t>(p * h + i)];
        const T* g = self.grad.data() + (p * h + i) * w;
        const T* xrow = px->values.data() + (p * h + i) * w;
        if (px->requires_grad) {
          T* dx = px->grad.data() + (p * h + i) * w;
          for (int64_t j = 0; j < w; ++j) dx[j] += g[j] * a * gwp[j];
        }
        if (ph->requires_grad) {
          T s = 0;
          for (int64_t j = 0; j < w; ++j) s += g[j] * xrow[j] * gwp[j];
          ph->grad[static_cast<size_t>(p * h + i)] += s;
        }
        if (pw->requires_grad) {
          T* dw = pw->grad.data() + p * w;
          for (int64_t j = 0; j < w; ++j) dw[j] += g[j] * xrow[j] * a;
        }
      }
    }
  };
  return make_result<T>(x.dims(), std::move(out), {x, gh, gw}, std::move(bwd));
}

// y[n,c,i,j] = x[n,c,i,j] * s[n,c]; s is [N,C,1,1]. The squeeze-excite gate.
template <typename T>
Tensor<T> channel_gate(const Tensor<T>& x, const Tensor<T>& s) {
  if (x.rank() != 4 || s.rank() != 4) throw ShapeError("channel_gate: expected NCHW operands");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (s.dim(0) != n || s.dim(1) != c || s.dim(2) != 1 || s.dim(3) != 1)
    throw ShapeError("channel_gate: gate must be [N,C,1,1]");

  std::vector<T> out(x.values().size());
  for (int64_t p = 0; p < n * c; ++p) {
    const T sv = s.values()[static_cast<size_t>(p)];
    const T* xrow = x.data() + p * hw;
    T* o = out.data() + p * hw;
    for (int64_t i = 0; i < hw; ++i) o[i] = xrow[i] * sv;
  }
  auto bwd = [n, c, hw](Node<T>& self) {
    auto& px = self.parents[0];
    auto& ps = self.parents[1];
    if (px->requires_grad) px->ensure_grad();
    if (ps->requires_grad) ps->ensure_grad();
    for (int64_t p = 0; p < n * c; ++p) {
      const T sv = ps->values[static_cast<size_t>(p)];
      const T* g = self.grad.data() + p * hw;
      const T* xrow = px->values.data() + p * hw;
      if (px->requires_grad) {
        T* dx = px->grad.data() + p * hw;
        for (int64_t i = 0; i < hw; ++i) dx[i] += g[i] * sv;
      }
      if (ps->requires_grad) {
        T acc = 0;
        for (int64_t i = 0; i < hw; ++i) acc += g[i] * xrow[i];
        ps->grad[static_cast<size_t>(p)] += acc;
      }
    }
  };
  return make_result<T>(x.dims(), std::move(out), {x, s}, std::move(bwd));
}

}  // namespace ctsparse::ad
