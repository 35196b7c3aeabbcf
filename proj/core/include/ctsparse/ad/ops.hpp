#pragma once

// Differentiable ops over ad::Tensor. Layout convention for the 4-D ops is
// NCHW. Backward closures read parent values straight from the graph (nodes
// are immutable once created) plus whatever small context they capture.

#include <algorithm>
#include <cmath>

#include "ctsparse/ad/tensor.hpp"

namespace ctsparse::ad {

namespace detail {

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.dims() != b.dims())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.dims()) + " vs " +
                     shape_str(b.dims()));
}

// C(M x P) += A(M x K) * B(K x P), all row-major contiguous. axpy ordering:
// the inner loop is a contiguous fused multiply-add the compiler vectorises
// without reassociation licence, so results are bit-stable.
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t p) {
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * p;
    for (int64_t kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      const T* brow = b + kk * p;
      for (int64_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

// --- elementwise -----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<T> v(a.values());
  for (size_t i = 0; i < v.size(); ++i) v[i] += b.values()[i];
  return make_result<T>(a.dims(), std::move(v), {a, b}, [](Node<T>& self) {
    for (int side = 0; side < 2; ++side) {
      auto& p = self.parents[side];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<T> v(a.values());
  for (size_t i = 0; i < v.size(); ++i) v[i] -= b.values()[i];
  return make_result<T>(a.dims(), std::move(v), {a, b}, [](Node<T>& self) {
    if (self.parents[0]->requires_grad) {
      self.parents[0]->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) self.parents[0]->grad[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      self.parents[1]->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) self.parents[1]->grad[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<T> v(a.values());
  for (size_t i = 0; i < v.size(); ++i) v[i] *= b.values()[i];
  return make_result<T>(a.dims(), std::move(v), {a, b}, [](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * pb->values[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i] * pa->values[i];
    }
  });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "div");
  std::vector<T> v(a.values());
  for (size_t i = 0; i < v.size(); ++i) v[i] /= b.values()[i];
  return make_result<T>(a.dims(), std::move(v), {a, b}, [](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] / pb->values[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) {
        const T y = self.values[i];
        pb->grad[i] -= self.grad[i] * y / pb->values[i];
      }
    }
  });
}

// y = a * x + b with scalar a, b
template <typename T>
Tensor<T> axpb(const Tensor<T>& x, T a, T b) {
  std::vector<T> v(x.values());
  for (auto& e : v) e = a * e + b;
  return make_result<T>(x.dims(), std::move(v), {x}, [a](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += a * self.grad[i];
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> v(x.values());
  for (auto& e : v)
    if (e < T(0)) e = T(0);
  return make_result<T>(x.dims(), std::move(v), {x}, [](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (p->values[i] > T(0)) p->grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> v(x.values());
  for (auto& e : v) {
    // sign-split form, stable at both tails
    if (e >= T(0)) {
      e = T(1) / (T(1) + std::exp(-e));
    } else {
      const T z = std::exp(e);
      e = z / (T(1) + z);
    }
  }
  return make_result<T>(x.dims(), std::move(v), {x}, [](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const T y = self.values[i];
      p->grad[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
Tensor<T> log_op(const Tensor<T>& x) {
  std::vector<T> v(x.values());
  for (auto& e : v) {
    if (!(e > T(0))) throw NumericalError("log: non-positive input");
    e = std::log(e);
  }
  return make_result<T>(x.dims(), std::move(v), {x}, [](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] / p->values[i];
  });
}

// sqrt(x^2 + eps): the smoothed |x| used by the TV penalty
template <typename T>
Tensor<T> smooth_abs(const Tensor<T>& x, T eps) {
  std::vector<T> v(x.values());
  for (auto& e : v) e = std::sqrt(e * e + eps);
  return make_result<T>(x.dims(), std::move(v), {x}, [](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      p->grad[i] += self.grad[i] * p->values[i] / self.values[i];
  });
}

// --- reductions --------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T e : x.values()) s += e;
  return make_result<T>({1}, {s}, {x}, [](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const T g = self.grad[0];
    for (auto& e : p->grad) e += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  T s = 0;
  for (T e : x.values()) s += e;
  const T inv = T(1) / static_cast<T>(x.numel());
  return make_result<T>({1}, {s * inv}, {x}, [inv](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const T g = self.grad[0] * inv;
    for (auto& e : p->grad) e += g;
  });
}

template <typename T>
Tensor<T> abs_sum(const Tensor<T>& x) {
  T s = 0;
  for (T e : x.values()) s += std::fabs(e);
  return make_result<T>({1}, {s}, {x}, [](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const T g = self.grad[0];
    for (size_t i = 0; i < p->values.size(); ++i) {
      const T v = p->values[i];
      if (v > T(0))
        p->grad[i] += g;
      else if (v < T(0))
        p->grad[i] -= g;
    }
  });
}

// --- shape ops ---------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape dims) {
  if (shape_numel(dims) != x.numel())
    throw ShapeError("reshape: element count mismatch " + shape_str(x.dims()) + " -> " +
                     shape_str(dims));
  std::vector<T> v(x.values());
  return make_result<T>(std::move(dims), std::move(v), {x}, [](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis) {
  if (xs.empty()) throw UsageError("concat: no inputs");
  const int rank = xs[0].rank();
  if (axis < 0 || axis >= rank) throw ShapeError("concat: bad axis");
  Shape dims = xs[0].dims();
  int64_t axis_total = 0;
  for (const auto& x : xs) {
    if (x.rank() != rank) throw ShapeError("concat: rank mismatch");
    for (int d = 0; d < rank; ++d)
      if (d != axis && x.dim(d) != dims[static_cast<size_t>(d)])
        throw ShapeError("concat: dimension mismatch off the concat axis");
    axis_total += x.dim(axis);
  }
  dims[static_cast<size_t>(axis)] = axis_total;

  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= dims[static_cast<size_t>(d)];
  for (int d = axis + 1; d < rank; ++d) inner *= dims[static_cast<size_t>(d)];

  std::vector<T> v(static_cast<size_t>(shape_numel(dims)));
  std::vector<int64_t> spans;  // per-input axis length
  int64_t off = 0;
  for (const auto& x : xs) {
    const int64_t len = x.dim(axis);
    spans.push_back(len);
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(x.data() + o * len * inner, len * inner,
                  v.data() + (o * axis_total + off) * inner);
    off += len;
  }

  return make_result<T>(std::move(dims), std::move(v), xs,
                        [outer, inner, axis_total, spans](Node<T>& self) {
                          int64_t off2 = 0;
                          for (size_t pi = 0; pi < self.parents.size(); ++pi) {
                            auto& p = self.parents[pi];
                            const int64_t len = spans[pi];
                            if (p->requires_grad) {
                              p->ensure_grad();
                              for (int64_t o = 0; o < outer; ++o) {
                                const T* src = self.grad.data() + (o * axis_total + off2) * inner;
                                T* dst = p->grad.data() + o * len * inner;
                                for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                              }
                            }
                            off2 += len;
                          }
                        });
}

template <typename T>
Tensor<T> slice_axis(const Tensor<T>& x, int axis, int64_t start, int64_t len) {
  const int rank = x.rank();
  if (axis < 0 || axis >= rank) throw ShapeError("slice: bad axis");
  const int64_t alen = x.dim(axis);
  if (start < 0 || len < 1 || start + len > alen) throw ShapeError("slice: range out of bounds");

  Shape dims = x.dims();
  dims[static_cast<size_t>(axis)] = len;
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  for (int d = axis + 1; d < rank; ++d) inner *= x.dim(d);

  std::vector<T> v(static_cast<size_t>(outer * len * inner));
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(x.data() + (o * alen + start) * inner, len * inner, v.data() + o * len * inner);

  return make_result<T>(std::move(dims), std::move(v), {x},
                        [outer, inner, alen, start, len](Node<T>& self) {
                          auto& p = self.parents[0];
                          if (!p->requires_grad) return;
                          p->ensure_grad();
                          for (int64_t o = 0; o < outer; ++o) {
                            const T* src = self.grad.data() + o * len * inner;
                            T* dst = p->grad.data() + (o * alen + start) * inner;
                            for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                          }
                        });
}

// splits channels into equal halves (the shuffle-block entry move)
template <typename T>
std::pair<Tensor<T>, Tensor<T>> channel_split(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("channel_split: expected NCHW");
  const int64_t c = x.dim(1);
  if (c % 2 != 0) throw ShapeError("channel_split: odd channel count");
  return {slice_axis(x, 1, 0, c / 2), slice_axis(x, 1, c / 2, c / 2)};
}

// regroups channels: out[j*g + i] = in[i*(C/g) + j]; its inverse is a shuffle
// with C/g groups
template <typename T>
Tensor<T> channel_shuffle(const Tensor<T>& x, int groups) {
  if (x.rank() != 4) throw ShapeError("channel_shuffle: expected NCHW");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (groups < 1 || c % groups != 0)
    throw ShapeError("channel_shuffle: groups must divide channels");
  const int64_t cpg = c / groups;

  std::vector<T> v(x.values().size());
  for (int64_t b = 0; b < n; ++b)
    for (int64_t i = 0; i < groups; ++i)
      for (int64_t j = 0; j < cpg; ++j) {
        const T* src = x.data() + ((b * c + i * cpg + j)) * hw;
        T* dst = v.data() + ((b * c + j * groups + i)) * hw;
        std::copy_n(src, hw, dst);
      }

  const int64_t g64 = groups;
  return make_result<T>(x.dims(), std::move(v), {x}, [n, c, hw, g64, cpg](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int64_t b = 0; b < n; ++b)
      for (int64_t i = 0; i < g64; ++i)
        for (int64_t j = 0; j < cpg; ++j) {
          const T* src = self.grad.data() + ((b * c + j * g64 + i)) * hw;
          T* dst = p->grad.data() + ((b * c + i * cpg + j)) * hw;
          for (int64_t t = 0; t < hw; ++t) dst[t] += src[t];
        }
  });
}

template <typename T>
Tensor<T> transpose_hw(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("transpose_hw: expected NCHW");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<T> v(x.values().size());
  for (int64_t p = 0; p < n * c; ++p) {
    const T* src = x.data() + p * h * w;
    T* dst = v.data() + p * h * w;
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) dst[j * h + i] = src[i * w + j];
  }
  return make_result<T>({n, c, w, h}, std::move(v), {x}, [n, c, h, w](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int64_t pl = 0; pl < n * c; ++pl) {
      const T* src = self.grad.data() + pl * h * w;  // shaped (w, h)
      T* dst = p->grad.data() + pl * h * w;          // shaped (h, w)
      for (int64_t j = 0; j < w; ++j)
        for (int64_t i = 0; i < h; ++i) dst[i * w + j] += src[j * h + i];
    }
  });
}

}  // namespace ctsparse::ad
