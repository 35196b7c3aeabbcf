#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <vector>

#include "ctsparse/ad/adam.hpp"
#include "ctsparse/ad/grad_check.hpp"
#include "ctsparse/ad/nn_ops.hpp"
#include "ctsparse/ad/ops.hpp"
#include "ctsparse/ad/params.hpp"
#include "ctsparse/core/rng.hpp"

using namespace ctsparse;
using namespace ctsparse::ad;
using Td = Tensor<double>;

namespace {

Td randn(Shape dims, uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(shape_numel(dims)));
  for (auto& e : v) e = scale * rng.normal();
  return Td::from(std::move(dims), std::move(v));
}

// values bounded away from zero, for ops with kinks at the origin
Td randn_away(Shape dims, uint64_t seed, double min_abs) {
  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(shape_numel(dims)));
  for (auto& e : v) {
    const double mag = min_abs + rng.uniform();
    e = rng.uniform() < 0.5 ? -mag : mag;
  }
  return Td::from(std::move(dims), std::move(v));
}

void expect_pass(const char* what, const GradCheckResult& r) {
  CHECK_MESSAGE(r.pass, what, ": max rel err ", r.max_rel_err, " at ", r.worst);
}

// a fixed O(1) coefficient tensor, bounded away from zero; linear probe
// losses sum(y * coeff) keep gradient magnitudes well above the
// finite-difference noise floor
Td coeffs(Shape dims, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(shape_numel(dims)));
  for (auto& e : v) {
    const double mag = 0.5 + rng.uniform();
    e = rng.uniform() < 0.5 ? -mag : mag;
  }
  return Td::from(std::move(dims), std::move(v));
}

// direct six-loop convolution, the independent oracle for conv2d
std::vector<double> naive_conv(const std::vector<double>& x, const std::vector<double>& w,
                               const std::vector<double>* b, int64_t n, int64_t cin, int64_t h,
                               int64_t win, int64_t cout, int64_t k, int stride, int pad,
                               int groups) {
  const int64_t ho = (h + 2 * pad - k) / stride + 1;
  const int64_t wo = (win + 2 * pad - k) / stride + 1;
  const int64_t cpg = cin / groups, opg = cout / groups;
  std::vector<double> y(static_cast<size_t>(n * cout * ho * wo), 0.0);
  for (int64_t s = 0; s < n; ++s)
    for (int64_t co = 0; co < cout; ++co) {
      const int64_t g = co / opg;
      for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
          double acc = b ? (*b)[co] : 0.0;
          for (int64_t ci = 0; ci < cpg; ++ci)
            for (int64_t ky = 0; ky < k; ++ky)
              for (int64_t kx = 0; kx < k; ++kx) {
                const int64_t iy = oy * stride - pad + ky;
                const int64_t ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= win) continue;
                acc += x[((s * cin + g * cpg + ci) * h + iy) * win + ix] *
                       w[((co * cpg + ci) * k + ky) * k + kx];
              }
          y[((s * cout + co) * ho + oy) * wo + ox] = acc;
        }
    }
  return y;
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise and reduction primitives
// ---------------------------------------------------------------------------

TEST_CASE("elementwise values: the tiny hand cases") {
  Td x = Td::from({3}, {-1.0, 0.0, 2.0});
  CHECK(relu(x).values() == std::vector<double>{0.0, 0.0, 2.0});
  CHECK(sigmoid(Td::from({1}, {0.0})).item() == 0.5);
  CHECK(mean(Td::from({3}, {1.0, 2.0, 3.0})).item() == 2.0);
  CHECK(sum(Td::from({3}, {1.0, 2.0, 3.0})).item() == 6.0);
  CHECK(abs_sum(Td::from({3}, {-1.0, 2.0, -3.0})).item() == 6.0);

  // stable sigmoid at large magnitudes
  CHECK(sigmoid(Td::from({1}, {800.0})).item() == 1.0);
  CHECK(sigmoid(Td::from({1}, {-800.0})).item() == 0.0);

  Td a = Td::from({2}, {1.0, 2.0}), b = Td::from({2}, {10.0, 20.0});
  CHECK(add(a, b).values() == std::vector<double>{11.0, 22.0});
  CHECK(sub(a, b).values() == std::vector<double>{-9.0, -18.0});
  CHECK(mul(a, b).values() == std::vector<double>{10.0, 40.0});
  CHECK(div(b, a).values() == std::vector<double>{10.0, 10.0});
  CHECK(axpb(a, 3.0, 1.0).values() == std::vector<double>{4.0, 7.0});

  CHECK_THROWS_AS(add(a, Td::from({3}, {1, 2, 3})), ShapeError);
  CHECK_THROWS_AS(log_op(Td::from({1}, {0.0})), NumericalError);
}

TEST_CASE("elementwise gradients") {
  const Shape s{2, 3};
  expect_pass("add", grad_check([](std::vector<Td>& in) { return sum(add(in[0], in[1])); },
                                {randn(s, 1), randn(s, 2)}));
  expect_pass("sub", grad_check([](std::vector<Td>& in) { return sum(sub(in[0], in[1])); },
                                {randn(s, 3), randn(s, 4)}));
  expect_pass("mul", grad_check([](std::vector<Td>& in) { return sum(mul(in[0], in[1])); },
                                {randn(s, 5), randn(s, 6)}));
  expect_pass("div", grad_check([](std::vector<Td>& in) { return sum(div(in[0], in[1])); },
                                {randn(s, 7), randn_away(s, 8, 0.5)}));
  expect_pass("axpb", grad_check(
                          [](std::vector<Td>& in) { return sum(axpb(in[0], -2.5, 0.75)); },
                          {randn(s, 9)}));
  expect_pass("relu", grad_check([](std::vector<Td>& in) { return sum(relu(in[0])); },
                                 {randn_away(s, 10, 0.2)}));
  expect_pass("sigmoid", grad_check(
                             [](std::vector<Td>& in) { return sum(sigmoid(in[0])); },
                             {randn(s, 11)}));
  Td xpos = randn_away(s, 12, 0.5);
  for (auto& v : xpos.values()) v = std::fabs(v);
  expect_pass("log", grad_check([](std::vector<Td>& in) { return sum(log_op(in[0])); }, {xpos}));
  expect_pass("smooth_abs",
              grad_check([](std::vector<Td>& in) { return sum(smooth_abs(in[0], 1e-8)); },
                         {randn_away(s, 13, 0.2)}));
  expect_pass("mean", grad_check([](std::vector<Td>& in) { return mean(in[0]); }, {randn(s, 14)}));
  expect_pass("abs_sum", grad_check([](std::vector<Td>& in) { return abs_sum(in[0]); },
                                    {randn_away(s, 15, 0.2)}));
}

TEST_CASE("backward mechanics: fan-out, accumulation, determinism, errors") {
  // loss = mean(x): grad = 1/numel everywhere
  Td x = randn({4, 5}, 20);
  x.set_requires_grad(true);
  backward(mean(x));
  for (double g : x.grad_view()) CHECK(g == doctest::Approx(1.0 / 20.0).epsilon(1e-15));
  x.zero_grad();

  // loss = sum(x*x): grad = 2x
  backward(sum(mul(x, x)));
  for (size_t i = 0; i < x.numel(); ++i)
    CHECK(x.grad_view()[i] == doctest::Approx(2.0 * x.values()[i]).epsilon(1e-14));
  x.zero_grad();

  // diamond fan-out y = x + x: grad 2 everywhere
  backward(sum(add(x, x)));
  for (double g : x.grad_view()) CHECK(g == 2.0);

  // determinism: same graph twice gives bit-identical gradients
  auto run = [] {
    Td t = randn({3, 7}, 21);
    t.set_requires_grad(true);
    backward(mean(mul(sigmoid(t), add(t, t))));
    return t.grad_view();
  };
  CHECK(run() == run());

  // error paths
  Td vec = randn({3}, 22);
  vec.set_requires_grad(true);
  Td y = mul(vec, vec);
  CHECK_THROWS_AS(backward(y), UsageError);  // non-scalar root
  CHECK_THROWS_AS(backward(Td()), UsageError);
  Td frozen = randn({1}, 23);  // no grad anywhere in the graph
  CHECK_THROWS_AS(backward(sum(frozen)), UsageError);
  CHECK_THROWS_AS(vec.item(), UsageError);
}

TEST_CASE("no-grad mode records no graph") {
  Td x = randn({2, 2}, 30);
  x.set_requires_grad(true);
  {
    NoGradGuard ng;
    Td y = sum(mul(x, x));
    CHECK(!y.requires_grad());
    CHECK_THROWS_AS(backward(y), UsageError);
  }
  Td y2 = sum(mul(x, x));  // outside the guard the graph is back
  CHECK(y2.requires_grad());
}

// ---------------------------------------------------------------------------
// layout ops
// ---------------------------------------------------------------------------

TEST_CASE("reshape, slice, concat, split: values and gradients") {
  Td x = randn({2, 6, 2, 2}, 40);

  CHECK(reshape(x, {4, 12}).values() == x.values());
  CHECK_THROWS_AS(reshape(x, {5, 5}), ShapeError);

  auto halves = channel_split(x);
  CHECK(halves.first.dims() == Shape{2, 3, 2, 2});
  CHECK(halves.second.dims() == Shape{2, 3, 2, 2});
  Td glued = concat<double>({halves.first, halves.second}, 1);
  CHECK(glued.values() == x.values());  // round trip

  CHECK_THROWS_AS(channel_split(randn({1, 5, 2, 2}, 41)), ShapeError);
  CHECK_THROWS_AS(slice_axis(x, 1, 4, 5), ShapeError);

  expect_pass("reshape", grad_check(
                             [](std::vector<Td>& in) {
                               return sum(mul(reshape(in[0], {6}), reshape(in[0], {6})));
                             },
                             {randn({2, 3}, 42)}));
  expect_pass("slice", grad_check(
                           [](std::vector<Td>& in) {
                             auto s = slice_axis(in[0], 2, 1, 2);
                             return sum(mul(s, s));
                           },
                           {randn({1, 2, 4, 3}, 43)}));
  expect_pass("concat axis1", grad_check(
                                  [](std::vector<Td>& in) {
                                    Td z = concat<double>({in[0], in[1]}, 1);
                                    return sum(mul(z, z));
                                  },
                                  {randn({2, 2, 2, 2}, 44), randn({2, 3, 2, 2}, 45)}));
  expect_pass("concat axis2", grad_check(
                                  [](std::vector<Td>& in) {
                                    Td z = concat<double>({in[0], in[1]}, 2);
                                    return sum(mul(z, z));
                                  },
                                  {randn({1, 2, 3, 2}, 46), randn({1, 2, 1, 2}, 47)}));

  // concat gradient = split of upstream gradient
  Td a = randn({1, 2, 1, 1}, 48), b = randn({1, 3, 1, 1}, 49);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Td cat = concat<double>({a, b}, 1);
  Td coeff = Td::from({1, 5, 1, 1}, {1, 2, 3, 4, 5});
  backward(sum(mul(cat, coeff)));
  CHECK(a.grad_view() == std::vector<double>{1, 2});
  CHECK(b.grad_view() == std::vector<double>{3, 4, 5});
}

TEST_CASE("channel_shuffle: the fixed permutation and its inverse") {
  Td x = Td::from({1, 6, 1, 1}, {0, 1, 2, 3, 4, 5});
  CHECK(channel_shuffle(x, 2).values() == std::vector<double>{0, 3, 1, 4, 2, 5});
  CHECK(channel_shuffle(x, 1).values() == x.values());
  CHECK(channel_shuffle(channel_shuffle(x, 2), 3).values() == x.values());  // inverse
  CHECK_THROWS_AS(channel_shuffle(x, 4), ShapeError);

  // permutation preserves the value multiset even with spatial extent
  Td big = randn({2, 8, 3, 3}, 50);
  Td shuf = channel_shuffle(big, 4);
  auto sorted = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  CHECK(sorted(shuf.values()) == sorted(big.values()));

  expect_pass("shuffle", grad_check(
                             [](std::vector<Td>& in) {
                               Td z = channel_shuffle(in[0], 4);
                               return sum(mul(z, z));
                             },
                             {randn({2, 8, 2, 2}, 51)}));
}

TEST_CASE("transpose_hw: swaps the spatial axes") {
  Td x = Td::from({1, 1, 2, 3}, {1, 2, 3, 4, 5, 6});
  Td t = transpose_hw(x);
  CHECK(t.dims() == Shape{1, 1, 3, 2});
  CHECK(t.values() == std::vector<double>{1, 4, 2, 5, 3, 6});
  CHECK(transpose_hw(t).values() == x.values());

  expect_pass("transpose_hw", grad_check(
                                  [](std::vector<Td>& in) {
                                    Td z = transpose_hw(in[0]);
                                    return sum(mul(z, z));
                                  },
                                  {randn({2, 3, 2, 4}, 52)}));
}

// ---------------------------------------------------------------------------
// convolution family
// ---------------------------------------------------------------------------

TEST_CASE("conv2d: identity, box sum, and the six-loop oracle") {
  // 1x1 identity kernel
  Td x = randn({1, 1, 3, 3}, 60);
  Td w1 = Td::from({1, 1, 1, 1}, {1.0});
  CHECK(conv2d(x, w1, Td(), 1, 0, 1).values() == x.values());

  // 3x3 all-ones kernel on constant input: 9c at interior pixels
  Td c = Td::filled({1, 1, 4, 4}, 2.5);
  Td wones = Td::filled({1, 1, 3, 3}, 1.0);
  Td box = conv2d(c, wones, Td(), 1, 1, 1);
  CHECK(box.values()[5] == doctest::Approx(22.5).epsilon(1e-14));   // interior
  CHECK(box.values()[0] == doctest::Approx(10.0).epsilon(1e-14));   // corner sees 4 pixels

  // randomized configurations against the naive oracle
  struct Cfg {
    int64_t n, cin, h, w, cout, k;
    int stride, pad, groups;
    bool bias;
  };
  for (const Cfg cfg : {Cfg{2, 3, 5, 6, 4, 3, 1, 1, 1, true}, Cfg{1, 2, 6, 6, 3, 2, 2, 0, 1, false},
                        Cfg{1, 4, 5, 5, 6, 3, 1, 1, 2, true}, Cfg{2, 4, 4, 4, 4, 3, 1, 1, 4, true},
                        Cfg{1, 5, 4, 4, 7, 1, 1, 0, 1, true}, Cfg{1, 3, 7, 5, 2, 3, 2, 1, 1, false}}) {
    Td x2 = randn({cfg.n, cfg.cin, cfg.h, cfg.w}, 61 + cfg.k + cfg.groups);
    Td w2 = randn({cfg.cout, cfg.cin / cfg.groups, cfg.k, cfg.k}, 62 + cfg.stride);
    Td b2 = randn({cfg.cout}, 63);
    Td y = conv2d(x2, w2, cfg.bias ? b2 : Td(), cfg.stride, cfg.pad, cfg.groups);
    const auto ref =
        naive_conv(x2.values(), w2.values(), cfg.bias ? &b2.values() : nullptr, cfg.n, cfg.cin,
                   cfg.h, cfg.w, cfg.cout, cfg.k, cfg.stride, cfg.pad, cfg.groups);
    REQUIRE(y.values().size() == ref.size());
    for (size_t i = 0; i < ref.size(); ++i)
      CHECK(y.values()[i] == doctest::Approx(ref[i]).epsilon(1e-10).scale(1.0));
  }

  CHECK_THROWS_AS(conv2d(x, randn({4, 2, 3, 3}, 64), Td(), 1, 1, 2), ShapeError);
  CHECK_THROWS_AS(conv2d(x, randn({2, 1, 7, 7}, 65), Td(), 1, 1, 1), ShapeError);  // kernel > input
  CHECK_THROWS_AS(conv2d(x, w1, Td(), 0, 0, 1), ConfigError);
}

TEST_CASE("conv2d gradients across the variants") {
  expect_pass("conv 3x3 pad1",
              grad_check(
                  [](std::vector<Td>& in) {
                    return mean(mul(conv2d(in[0], in[1], in[2], 1, 1, 1),
                                    conv2d(in[0], in[1], in[2], 1, 1, 1)));
                  },
                  {randn({2, 3, 5, 5}, 70, 0.5), randn({4, 3, 3, 3}, 71, 0.5), randn({4}, 72)}));
  expect_pass("conv stride2",
              grad_check(
                  [](std::vector<Td>& in) {
                    Td y = conv2d(in[0], in[1], Td(), 2, 0, 1);
                    return mean(mul(y, y));
                  },
                  {randn({1, 2, 6, 6}, 73, 0.5), randn({3, 2, 2, 2}, 74, 0.5)}));
  expect_pass("conv grouped",
              grad_check(
                  [](std::vector<Td>& in) {
                    Td y = conv2d(in[0], in[1], in[2], 1, 1, 2);
                    return mean(mul(y, y));
                  },
                  {randn({1, 4, 4, 4}, 75, 0.5), randn({6, 2, 3, 3}, 76, 0.5), randn({6}, 77)}));
  expect_pass("conv depthwise",
              grad_check(
                  [](std::vector<Td>& in) {
                    Td y = conv2d(in[0], in[1], Td(), 1, 1, 4);
                    return mean(mul(y, y));
                  },
                  {randn({2, 4, 4, 4}, 78, 0.5), randn({4, 1, 3, 3}, 79, 0.5)}));
  expect_pass("conv 1x1 fast path",
              grad_check(
                  [](std::vector<Td>& in) {
                    Td y = conv2d(in[0], in[1], in[2], 1, 0, 1);
                    return mean(mul(y, y));
                  },
                  {randn({2, 5, 3, 3}, 80, 0.5), randn({7, 5, 1, 1}, 81, 0.5), randn({7}, 82)}));
}

TEST_CASE("conv_transpose2d: block broadcast, oracle, adjointness, gradients") {
  // kernel [[1,1],[1,1]] on a single pixel v: 2x2 block of v
  Td x1 = Td::from({1, 1, 1, 1}, {3.25});
  Td wb = Td::filled({1, 1, 2, 2}, 1.0);
  CHECK(conv_transpose2d(x1, wb, Td(), 2).values() == std::vector<double>{3.25, 3.25, 3.25, 3.25});

  // explicit 2x2 -> 4x4 oracle
  Td x = Td::from({1, 1, 2, 2}, {1, 2, 3, 4});
  Td w = Td::from({1, 1, 2, 2}, {10, 20, 30, 40});
  const std::vector<double> expect = {10, 20, 20, 40, 30, 40, 60, 80,
                                      30, 60, 40, 80, 90, 120, 120, 160};
  CHECK(conv_transpose2d(x, w, Td(), 2).values() == expect);

  // adjointness with conv2d under a shared weight
  Td big = randn({2, 3, 4, 4}, 90);   // deconv input [N, Cin=3]
  Td up = randn({2, 5, 8, 8}, 91);    // conv input   [N, Cin=5]
  Td ws = randn({3, 5, 2, 2}, 92);    // conv: [Cout=3, Cin=5]; deconv: [Cin=3, Cout=5]
  const Td down = conv2d(up, ws, Td(), 2, 0, 1);        // [2,3,4,4]
  const Td lift = conv_transpose2d(big, ws, Td(), 2);   // [2,5,8,8]
  double lhs = 0.0, rhs = 0.0;
  for (size_t i = 0; i < down.values().size(); ++i) lhs += down.values()[i] * big.values()[i];
  for (size_t i = 0; i < lift.values().size(); ++i) rhs += lift.values()[i] * up.values()[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));

  expect_pass("deconv", grad_check(
                            [](std::vector<Td>& in) {
                              Td y = conv_transpose2d(in[0], in[1], in[2], 2);
                              return mean(mul(y, y));
                            },
                            {randn({2, 3, 3, 3}, 93, 0.5), randn({3, 4, 2, 2}, 94, 0.5),
                             randn({4}, 95)}));

  CHECK_THROWS_AS(conv_transpose2d(x, Td::filled({1, 1, 3, 3}, 1.0), Td(), 2), ShapeError);
  CHECK_THROWS_AS(conv_transpose2d(x, Td::filled({2, 1, 2, 2}, 1.0), Td(), 2), ShapeError);
}

TEST_CASE("maxpool2d: values, tie rule and gradients") {
  Td x = Td::from({1, 1, 2, 2}, {1, 2, 4, 3});
  CHECK(maxpool2d(x).values() == std::vector<double>{4.0});

  Td flat = Td::filled({1, 1, 2, 2}, 7.0);
  flat.set_requires_grad(true);
  backward(sum(maxpool2d(flat)));
  CHECK(flat.grad_view() == std::vector<double>{1, 0, 0, 0});  // tie -> top-left

  CHECK_THROWS_AS(maxpool2d(randn({1, 1, 3, 4}, 100)), ShapeError);

  expect_pass("maxpool", grad_check(
                             [](std::vector<Td>& in) {
                               Td y = maxpool2d(in[0]);
                               return mean(mul(y, y));
                             },
                             {randn({2, 3, 4, 4}, 101)}));
}

// ---------------------------------------------------------------------------
// normalisation
// ---------------------------------------------------------------------------

TEST_CASE("group_norm: statistics, degenerate input, affine pass-through") {
  // constant input, gamma 1, beta 0 -> zeros
  Td c = Td::filled({2, 4, 3, 3}, 5.0);
  Td g1 = Td::filled({4}, 1.0), b0 = Td::filled({4}, 0.0);
  const Td gn_const = group_norm(c, g1, b0, 2);
  for (double v : gn_const.values()) CHECK(v == 0.0);

  // gamma 0, beta c -> constant c
  Td g0 = Td::filled({4}, 0.0), bc = Td::filled({4}, -1.5);
  const Td gn_beta = group_norm(randn({2, 4, 3, 3}, 110), g0, bc, 2);
  for (double v : gn_beta.values()) CHECK(v == -1.5);

  // per-(sample, group) mean 0 / var 1 pre-affine
  Td x = randn({2, 6, 4, 4}, 111);
  Td gn = group_norm(x, Td::filled({6}, 1.0), Td::filled({6}, 0.0), 3);
  const int64_t cpg = 2, hw = 16;
  for (int64_t s = 0; s < 2; ++s)
    for (int64_t g = 0; g < 3; ++g) {
      double m = 0.0, var = 0.0;
      const double* base = gn.values().data() + ((s * 6 + g * cpg) * hw);
      for (int64_t i = 0; i < cpg * hw; ++i) m += base[i];
      m /= cpg * hw;
      for (int64_t i = 0; i < cpg * hw; ++i) var += (base[i] - m) * (base[i] - m);
      var /= cpg * hw;
      CHECK(std::fabs(m) < 1e-6);
      CHECK(std::fabs(var - 1.0) < 1e-4);  // eps in the denominator shifts it slightly
    }

  CHECK_THROWS_AS(group_norm(x, Td::filled({6}, 1.0), Td::filled({6}, 0.0), 4), ShapeError);

  expect_pass("group_norm",
              grad_check(
                  [](std::vector<Td>& in) {
                    Td y = group_norm(in[0], in[1], in[2], 3);
                    return mean(mul(y, y));
                  },
                  {randn({2, 6, 3, 3}, 112), randn({6}, 113, 0.5), randn({6}, 114, 0.5)}));
}

TEST_CASE("batch_norm: two-pass oracle, eval semantics, running stats") {
  const int64_t n = 4, c = 3, h = 2, w = 2;
  Td x = randn({n, c, h, w}, 120);
  Td gamma = randn({c}, 121, 0.5), beta = randn({c}, 122, 0.5);
  Td rm = Td::filled({c}, 0.0), rv = Td::filled({c}, 1.0);

  Td y = batch_norm(x, gamma, beta, rm, rv, /*training=*/true);

  // per-channel two-pass oracle
  const int64_t m = n * h * w;
  for (int64_t ch = 0; ch < c; ++ch) {
    double mu = 0.0, var = 0.0;
    for (int64_t s = 0; s < n; ++s)
      for (int64_t i = 0; i < h * w; ++i) mu += x.values()[(s * c + ch) * h * w + i];
    mu /= m;
    for (int64_t s = 0; s < n; ++s)
      for (int64_t i = 0; i < h * w; ++i) {
        const double d = x.values()[(s * c + ch) * h * w + i] - mu;
        var += d * d;
      }
    var /= m;
    for (int64_t s = 0; s < n; ++s)
      for (int64_t i = 0; i < h * w; ++i) {
        const double xv = x.values()[(s * c + ch) * h * w + i];
        const double expect =
            gamma.values()[ch] * (xv - mu) / std::sqrt(var + 1e-5) + beta.values()[ch];
        CHECK(y.values()[(s * c + ch) * h * w + i] ==
              doctest::Approx(expect).epsilon(1e-10).scale(1.0));
      }
    // running stats after one step of momentum 0.1 (variance stored unbiased)
    CHECK(rm.values()[ch] == doctest::Approx(0.1 * mu).epsilon(1e-10).scale(1.0));
    CHECK(rv.values()[ch] ==
          doctest::Approx(0.9 + 0.1 * var * m / (m - 1)).epsilon(1e-10).scale(1.0));
  }

  // eval mode: input equal to the running mean maps to beta (gamma * 0 + beta)
  Td rm2 = Td::filled({c}, 0.7), rv2 = Td::filled({c}, 1.0);
  Td g1 = Td::filled({c}, 1.0), b0 = Td::filled({c}, 0.0);
  Td at_mean = Td::filled({1, c, h, w}, 0.7);
  const Td bn_eval = batch_norm(at_mean, g1, b0, rm2, rv2, false);
  for (double v : bn_eval.values()) CHECK(v == 0.0);

  // constant batch -> zeros pre-affine
  Td cbatch = Td::filled({2, c, h, w}, 3.0);
  Td rm3 = Td::filled({c}, 0.0), rv3 = Td::filled({c}, 1.0);
  const Td bn_const = batch_norm(cbatch, g1, b0, rm3, rv3, true);
  for (double v : bn_const.values()) CHECK(v == 0.0);

  // degenerate training batch
  Td single = randn({1, c, h, w}, 123);
  CHECK_THROWS_AS(batch_norm(single, g1, b0, rm3, rv3, true), ShapeError);

  // linear probe loss: the normalization makes per-element input gradients a
  // difference of same-scale terms, so keep the upstream gradient O(1) to stay
  // clear of finite-difference noise
  Td rmg = Td::filled({c}, 0.0), rvg = Td::filled({c}, 1.0);
  Td bn_probe = coeffs({4, 3, 2, 2}, 1240);
  expect_pass("batch_norm train",
              grad_check(
                  [&rmg, &rvg, &bn_probe](std::vector<Td>& in) {
                    Td out = batch_norm(in[0], in[1], in[2], rmg, rvg, true);
                    return sum(mul(out, bn_probe));
                  },
                  {randn({4, 3, 2, 2}, 124), randn_away({3}, 125, 0.3), randn({3}, 126, 0.5)}));
  Td rme = randn({3}, 127, 0.1), rve = Td::filled({3}, 1.3);
  expect_pass("batch_norm eval",
              grad_check(
                  [&rme, &rve](std::vector<Td>& in) {
                    Td out = batch_norm(in[0], in[1], in[2], rme, rve, false);
                    return mean(mul(out, out));
                  },
                  {randn({2, 3, 2, 2}, 128), randn({3}, 129, 0.5), randn({3}, 130, 0.5)}));
}

// ---------------------------------------------------------------------------
// pooling and gating
// ---------------------------------------------------------------------------

TEST_CASE("axis pools: means along each spatial axis") {
  // H=2, W=2 input [[1,3],[5,7]]: pooling over W gives row means [2,6]
  Td x = Td::from({1, 1, 2, 2}, {1, 3, 5, 7});
  Td pw = pool_width(x);
  CHECK(pw.dims() == Shape{1, 1, 2, 1});
  CHECK(pw.values() == std::vector<double>{2.0, 6.0});

  Td ph = pool_height(x);
  CHECK(ph.dims() == Shape{1, 1, 1, 2});
  CHECK(ph.values() == std::vector<double>{3.0, 5.0});

  Td gap = global_avg_pool(x);
  CHECK(gap.dims() == Shape{1, 1, 1, 1});
  CHECK(gap.item() == 4.0);

  // impulse: 1/(H*W)
  Td imp = Td::zeros({1, 1, 4, 4});
  imp.values()[5] = 1.0;
  CHECK(global_avg_pool(imp).item() == doctest::Approx(1.0 / 16.0).epsilon(1e-15));

  // gap == pool over W then over H
  Td r = randn({2, 3, 4, 5}, 140);
  const Td both = pool_height(pool_width(r));
  const Td direct = global_avg_pool(r);
  for (size_t i = 0; i < direct.values().size(); ++i)
    CHECK(direct.values()[i] == doctest::Approx(both.values()[i]).epsilon(1e-13));

  // linearity of the axis pools
  Td u = randn({1, 2, 3, 3}, 141), v = randn({1, 2, 3, 3}, 142);
  Td lin = pool_width(add(mul(u, Td::filled({1, 2, 3, 3}, 2.0)), v));
  for (size_t i = 0; i < lin.values().size(); ++i) {
    const double expect = 2.0 * pool_width(u).values()[i] + pool_width(v).values()[i];
    CHECK(lin.values()[i] == doctest::Approx(expect).epsilon(1e-13));
  }

  expect_pass("pool_width", grad_check(
                                [](std::vector<Td>& in) {
                                  Td y = pool_width(in[0]);
                                  return sum(mul(y, y));
                                },
                                {randn({2, 2, 3, 4}, 143)}));
  expect_pass("pool_height", grad_check(
                                 [](std::vector<Td>& in) {
                                   Td y = pool_height(in[0]);
                                   return sum(mul(y, y));
                                 },
                                 {randn({2, 2, 3, 4}, 144)}));
  expect_pass("global_avg_pool", grad_check(
                                     [](std::vector<Td>& in) {
                                       Td y = global_avg_pool(in[0]);
                                       return sum(mul(y, y));
                                     },
                                     {randn({2, 3, 2, 4}, 145)}));
}

TEST_CASE("gates: coordinate and channel scaling") {
  // unit gates leave the input alone
  Td x = randn({1, 2, 3, 4}, 150);
  Td gh1 = Td::filled({1, 2, 3, 1}, 1.0), gw1 = Td::filled({1, 2, 1, 4}, 1.0);
  CHECK(coord_gate(x, gh1, gw1).values() == x.values());

  // channel gate at 0.5 halves everything
  Td s = Td::filled({1, 2, 1, 1}, 0.5);
  for (size_t i = 0; i < x.numel(); ++i)
    CHECK(channel_gate(x, s).values()[i] == 0.5 * x.values()[i]);

  // linear probe loss with factors bounded away from zero: every input
  // gradient element is a product/short sum of O(1) terms
  Td cg_probe = coeffs({2, 2, 3, 2}, 1510);
  expect_pass("coord_gate",
              grad_check(
                  [&cg_probe](std::vector<Td>& in) {
                    Td y = coord_gate(in[0], in[1], in[2]);
                    return sum(mul(y, cg_probe));
                  },
                  {randn_away({2, 2, 3, 2}, 151, 0.3), randn_away({2, 2, 3, 1}, 152, 0.3),
                   randn_away({2, 2, 1, 2}, 153, 0.3)}));
  expect_pass("channel_gate", grad_check(
                                  [](std::vector<Td>& in) {
                                    Td y = channel_gate(in[0], in[1]);
                                    return mean(mul(y, y));
                                  },
                                  {randn({2, 3, 2, 2}, 154), randn({2, 3, 1, 1}, 155)}));

  CHECK_THROWS_AS(coord_gate(x, gw1, gh1), ShapeError);  // swapped gate shapes
  CHECK_THROWS_AS(channel_gate(x, Td::filled({1, 3, 1, 1}, 1.0)), ShapeError);
}

// ---------------------------------------------------------------------------
// parameters and Adam
// ---------------------------------------------------------------------------

TEST_CASE("param store: registry rules, init bounds, checkpoint round trip") {
  ParamStore<double> ps;
  Rng rng(7);
  ps.add("w", randn({3, 2}, 160));
  CHECK_THROWS_AS(ps.add("w", randn({1}, 161)), UsageError);
  ps.add("frozen", Td::filled({4}, 1.0), /*trainable=*/false);
  CHECK(!ps.get("frozen").requires_grad());
  CHECK(ps.total_params() == 6);
  CHECK(ps.total_params(false) == 10);
  CHECK_THROWS_AS(ps.get("nope"), UsageError);

  Td& cw = ps.add_conv_weight("conv.w", {8, 4, 3, 3}, 4 * 9, rng);
  const double bound = 1.0 / 6.0;
  for (double v : cw.values()) {
    CHECK(v <= bound);
    CHECK(v >= -bound);
  }

  TensorFile tf;
  ps.save(tf, "gen.");
  ParamStore<double> ps2;
  ps2.add("w", Td::zeros({3, 2}));
  ps2.add("frozen", Td::zeros({4}), false);
  ps2.add("conv.w", Td::zeros({8, 4, 3, 3}));
  ps2.load(tf, "gen.");
  CHECK(ps2.get("w").values() == ps.get("w").values());
  CHECK(ps2.get("conv.w").values() == cw.values());

  ParamStore<double> bad;
  bad.add("w", Td::zeros({2, 2}));
  CHECK_THROWS_AS(bad.load(tf, "gen."), ShapeError);
}

TEST_CASE("adam: hand-run oracle over three steps") {
  const std::vector<double> g = {0.1, -0.2, 0.3};
  ParamStore<double> ps;
  Td& w = ps.add("w", Td::from({3}, {1.0, 2.0, 3.0}));
  Adam<double> opt(ps);
  const double lr = 1e-3;

  // oracle: the published update rule, run independently
  std::vector<double> ow = {1.0, 2.0, 3.0}, om(3, 0.0), ov(3, 0.0);
  for (int t = 1; t <= 3; ++t) {
    // engine side: loss = sum(w * const) has gradient exactly `g`
    Td coeff = Td::from({3}, std::vector<double>(g));
    backward(sum(mul(w, coeff)));
    opt.step(lr);

    for (int j = 0; j < 3; ++j) {
      om[j] = 0.9 * om[j] + 0.1 * g[j];
      ov[j] = 0.999 * ov[j] + 0.001 * g[j] * g[j];
      const double mhat = om[j] / (1.0 - std::pow(0.9, t));
      const double vhat = ov[j] / (1.0 - std::pow(0.999, t));
      ow[j] -= lr * mhat / (std::sqrt(vhat) + 1e-8);
    }
    for (int j = 0; j < 3; ++j)
      CHECK(w.values()[j] == doctest::Approx(ow[j]).epsilon(1e-14));
  }
  CHECK(opt.step_count() == 3);

  // the first step is close to -lr * sign(g) when |g| >> eps
  ParamStore<double> ps1;
  Td& w1 = ps1.add("w", Td::from({1}, {5.0}));
  Adam<double> opt1(ps1);
  Td c1 = Td::from({1}, {0.25});
  backward(sum(mul(w1, c1)));
  opt1.step(1e-3);
  CHECK(w1.values()[0] == doctest::Approx(5.0 - 1e-3).epsilon(1e-6));
}

TEST_CASE("adam: zero grads, missing grads, shrinking steps, checkpoints") {
  ParamStore<double> ps;
  Td& w = ps.add("w", Td::from({2}, {1.0, -1.0}));
  Adam<double> opt(ps);

  // zero gradient: no movement, but the step counter advances
  w.grad();  // allocate zeroed gradient buffer
  opt.step(0.1);
  CHECK(w.values() == std::vector<double>{1.0, -1.0});
  CHECK(opt.step_count() == 1);

  // missing gradient buffer: usage error
  CHECK_THROWS_AS(opt.step(0.1), UsageError);

  // constant gradient: step magnitudes never grow
  ParamStore<double> ps2;
  Td& w2 = ps2.add("w", Td::from({1}, {0.0}));
  Adam<double> opt2(ps2);
  double prev_val = 0.0, prev_step = 1e9;
  for (int t = 0; t < 5; ++t) {
    Td c = Td::from({1}, {0.7});
    backward(sum(mul(w2, c)));
    opt2.step(1e-3);
    const double st = std::fabs(w2.values()[0] - prev_val);
    CHECK(st <= prev_step * (1.0 + 1e-6));
    prev_step = st;
    prev_val = w2.values()[0];
  }

  // checkpoint round trip resumes bit-identically
  TensorFile tf;
  ps2.save(tf, "m.");
  opt2.save(tf, "m.opt.");
  ParamStore<double> ps3;
  Td& w3 = ps3.add("w", Td::zeros({1}));
  Adam<double> opt3(ps3);
  ps3.load(tf, "m.");
  opt3.load(tf, "m.opt.");
  CHECK(opt3.step_count() == opt2.step_count());

  Td c2 = Td::from({1}, {0.7});
  backward(sum(mul(w2, c2)));
  opt2.step(1e-3);
  Td c3 = Td::from({1}, {0.7});
  backward(sum(mul(w3, c3)));
  opt3.step(1e-3);
  CHECK(w3.values() == w2.values());
}
