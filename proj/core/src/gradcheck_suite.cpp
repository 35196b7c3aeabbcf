#include "ctsparse/train/gradcheck_suite.hpp"

#include <cstdio>
#include <functional>
#include <ostream>

#include "ctsparse/ad/grad_check.hpp"
#include "ctsparse/ad/nn_ops.hpp"
#include "ctsparse/ad/ops.hpp"
#include "ctsparse/cagan/blocks.hpp"
#include "ctsparse/cagan/network.hpp"
#include "ctsparse/core/rng.hpp"
#include "ctsparse/objectives/losses.hpp"
#include "ctsparse/train/dataset.hpp"
#include "ctsparse/train/fbp_bridge.hpp"

namespace ctsparse::train {

namespace {

using DT = ad::Tensor<double>;
using ad::GradCheckResult;
using Ins = std::vector<DT>;

DT randu(Rng& rng, ad::Shape dims, double lo, double hi) {
  std::vector<double> v(static_cast<size_t>(ad::shape_numel(dims)));
  for (auto& e : v) e = rng.uniform(lo, hi);
  return DT::from(std::move(dims), std::move(v));
}

// signed magnitudes bounded away from zero, for kinked ops and probes
DT rands(Rng& rng, ad::Shape dims, double lo, double hi) {
  std::vector<double> v(static_cast<size_t>(ad::shape_numel(dims)));
  for (auto& e : v) e = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(lo, hi);
  return DT::from(std::move(dims), std::move(v));
}

// fixed-coefficient linear functional: every output element matters O(1)
DT probe(const DT& y, const DT& c) { return ad::sum(ad::mul(y, c)); }

struct Entry {
  std::string name;
  std::function<GradCheckResult()> run;
};

cagan::BlockConfig mini_block() {
  cagan::BlockConfig b;
  b.gn_groups = 2;
  b.shuffle_groups = 2;
  b.attention = cagan::AttentionKind::None;
  b.ca_reduction = 4;
  return b;
}

cagan::NetConfig toy_net() {
  cagan::NetConfig cfg;
  cfg.stage_channels = {4, 8, 16, 32};
  cfg.bottleneck = 64;
  cfg.block.shuffle_groups = 2;
  cfg.block.gn_groups = 2;
  cfg.block.ca_reduction = 2;
  return cfg;
}

std::vector<Entry> build_registry() {
  std::vector<Entry> reg;
  auto add = [&](const char* name, std::function<GradCheckResult()> fn) {
    reg.push_back({name, std::move(fn)});
  };

  // --- elementwise and shape ops --------------------------------------------
  add("op.add", [] {
    Rng r(11);
    DT c = rands(r, {3, 4}, 0.5, 1.5);
    return ad::grad_check(
        [c](Ins& in) { return probe(ad::add(in[0], in[1]), c); },
        {randu(r, {3, 4}, -1, 1), randu(r, {3, 4}, -1, 1)});
  });
  add("op.sub", [] {
    Rng r(12);
    DT c = rands(r, {3, 4}, 0.5, 1.5);
    return ad::grad_check(
        [c](Ins& in) { return probe(ad::sub(in[0], in[1]), c); },
        {randu(r, {3, 4}, -1, 1), randu(r, {3, 4}, -1, 1)});
  });
  add("op.mul", [] {
    Rng r(13);
    DT c = rands(r, {3, 4}, 0.5, 1.5);
    return ad::grad_check(
        [c](Ins& in) { return probe(ad::mul(in[0], in[1]), c); },
        {rands(r, {3, 4}, 0.5, 1.5), rands(r, {3, 4}, 0.5, 1.5)});
  });
  add("op.div", [] {
    Rng r(14);
    DT c = rands(r, {3, 4}, 0.5, 1.5);
    return ad::grad_check(
        [c](Ins& in) { return probe(ad::div(in[0], in[1]), c); },
        {randu(r, {3, 4}, -1, 1), randu(r, {3, 4}, 1.0, 2.0)});
  });
  add("op.axpb", [] {
    Rng r(15);
    DT c = rands(r, {3, 4}, 0.5, 1.5);
    return ad::grad_check(
        [c](Ins& in) { return probe(ad::axpb(in[0], 1.7, -0.3), c); },
        {randu(r, {3, 4}, -1, 1)});
  });
  add("op.relu", [] {
    Rng r(16);
    DT c = rands(r, {3, 4}, 0.5, 1.5);
    return ad::grad_check([c](Ins& in) { return probe(ad::relu(in[0]), c); },
                          {rands(r, {3, 4}, 0.2, 1.2)});
  });
  add("op.sigmoid", [] {
    Rng r(17);
    DT c = rands(r, {3, 4}, 0.5, 1.5);
    return ad::grad_check([c](Ins& in) { return probe(ad::sigmoid(in[0]), c); },
                          {randu(r, {3, 4}, -2, 2)});
  });
  add("op.log", [] {
    Rng r(18);
    DT c = rands(r, {3, 4}, 0.5, 1.5);
    return ad::grad_check([c](Ins& in) { return probe(ad::log_op(in[0]), c); },
                          {randu(r, {3, 4}, 0.5, 2.5)});
  });
  add("op.smooth_abs", [] {
    Rng r(19);
    DT c = rands(r, {3, 4}, 0.5, 1.5);
    return ad::grad_check(
        [c](Ins& in) { return probe(ad::smooth_abs(in[0], 1e-2), c); },
        {rands(r, {3, 4}, 0.2, 1.2)});
  });
  add("op.sum", [] {
    Rng r(20);
    return ad::grad_check([](Ins& in) { return ad::sum(in[0]); },
                          {randu(r, {2, 5}, -1, 1)});
  });
  add("op.mean", [] {
    Rng r(21);
    DT c = rands(r, {2, 5}, 0.5, 1.5);
    return ad::grad_check([c](Ins& in) { return ad::mean(ad::mul(in[0], c)); },
                          {randu(r, {2, 5}, -1, 1)});
  });
  add("op.abs_sum", [] {
    Rng r(22);
    return ad::grad_check([](Ins& in) { return ad::abs_sum(in[0]); },
                          {rands(r, {2, 5}, 0.2, 1.2)});
  });
  add("op.reshape", [] {
    Rng r(23);
    DT c = rands(r, {3, 4}, 0.5, 1.5);
    return ad::grad_check(
        [c](Ins& in) { return probe(ad::reshape(in[0], {3, 4}), c); },
        {randu(r, {2, 6}, -1, 1)});
  });
  add("op.concat", [] {
    Rng r(24);
    DT c = rands(r, {1, 5, 3, 2}, 0.5, 1.5);
    return ad::grad_check(
        [c](Ins& in) {
          return probe(ad::concat(std::vector<DT>{in[0], in[1]}, 1), c);
        },
        {randu(r, {1, 2, 3, 2}, -1, 1), randu(r, {1, 3, 3, 2}, -1, 1)});
  });
  add("op.slice", [] {
    Rng r(25);
    DT c = rands(r, {1, 2, 4, 3}, 0.5, 1.5);
    return ad::grad_check(
        [c](Ins& in) { return probe(ad::slice_axis(in[0], 2, 1, 4), c); },
        {randu(r, {1, 2, 6, 3}, -1, 1)});
  });
  add("op.channel_shuffle", [] {
    Rng r(26);
    DT c = rands(r, {1, 6, 2, 3}, 0.5, 1.5);
    return ad::grad_check(
        [c](Ins& in) { return probe(ad::channel_shuffle(in[0], 3), c); },
        {randu(r, {1, 6, 2, 3}, -1, 1)});
  });
  add("op.transpose_hw", [] {
    Rng r(27);
    DT c = rands(r, {1, 2, 4, 3}, 0.5, 1.5);
    return ad::grad_check(
        [c](Ins& in) { return probe(ad::transpose_hw(in[0]), c); },
        {randu(r, {1, 2, 3, 4}, -1, 1)});
  });

  // --- structured ops --------------------------------------------------------
  add("op.conv2d", [] {
    Rng r(30);
    DT c = rands(r, {1, 4, 4, 5}, 0.5, 1.5);
    return ad::grad_check(
        [c](Ins& in) { return probe(ad::conv2d(in[0], in[1], in[2], 1, 1, 1), c); },
        {randu(r, {1, 3, 4, 5}, -1, 1), randu(r, {4, 3, 3, 3}, -0.5, 0.5),
         randu(r, {4}, -0.5, 0.5)});
  });
  add("op.conv2d-depthwise", [] {
    Rng r(31);
    DT c = rands(r, {1, 4, 4, 4}, 0.5, 1.5);
    DT none;
    return ad::grad_check(
        [c, none](Ins& in) {
          return probe(ad::conv2d(in[0], in[1], none, 1, 1, 4), c);
        },
        {randu(r, {1, 4, 4, 4}, -1, 1), randu(r, {4, 1, 3, 3}, -0.5, 0.5)});
  });
  add("op.conv2d-strided", [] {
    Rng r(32);
    DT c = rands(r, {1, 3, 3, 3}, 0.5, 1.5);
    DT none;
    return ad::grad_check(
        [c, none](Ins& in) {
          return probe(ad::conv2d(in[0], in[1], none, 2, 0, 1), c);
        },
        {randu(r, {1, 2, 6, 6}, -1, 1), randu(r, {3, 2, 2, 2}, -0.5, 0.5)});
  });
  add("op.conv_transpose2d", [] {
    Rng r(33);
    DT c = rands(r, {1, 2, 6, 8}, 0.5, 1.5);
    return ad::grad_check(
        [c](Ins& in) {
          return probe(ad::conv_transpose2d(in[0], in[1], in[2], 2), c);
        },
        {randu(r, {1, 3, 3, 4}, -1, 1), randu(r, {3, 2, 2, 2}, -0.5, 0.5),
         randu(r, {2}, -0.5, 0.5)});
  });
  add("op.maxpool2d", [] {
    Rng r(34);
    DT c = rands(r, {1, 2, 2, 3}, 0.5, 1.5);
    return ad::grad_check([c](Ins& in) { return probe(ad::maxpool2d(in[0]), c); },
                          {randu(r, {1, 2, 4, 6}, -1, 1)});
  });
  add("op.global_avg_pool", [] {
    Rng r(35);
    DT c = rands(r, {2, 3, 1, 1}, 0.5, 1.5);
    return ad::grad_check(
        [c](Ins& in) { return probe(ad::global_avg_pool(in[0]), c); },
        {randu(r, {2, 3, 3, 4}, -1, 1)});
  });
  add("op.pool_width", [] {
    Rng r(36);
    DT c = rands(r, {1, 3, 4, 1}, 0.5, 1.5);
    return ad::grad_check([c](Ins& in) { return probe(ad::pool_width(in[0]), c); },
                          {randu(r, {1, 3, 4, 5}, -1, 1)});
  });
  add("op.pool_height", [] {
    Rng r(37);
    DT c = rands(r, {1, 3, 1, 5}, 0.5, 1.5);
    return ad::grad_check([c](Ins& in) { return probe(ad::pool_height(in[0]), c); },
                          {randu(r, {1, 3, 4, 5}, -1, 1)});
  });
  add("op.group_norm", [] {
    Rng r(38);
    DT c = rands(r, {2, 4, 3, 3}, 0.5, 1.5);
    return ad::grad_check(
        [c](Ins& in) { return probe(ad::group_norm(in[0], in[1], in[2], 2), c); },
        {randu(r, {2, 4, 3, 3}, -1, 1), rands(r, {4}, 0.5, 1.5), randu(r, {4}, -0.5, 0.5)});
  });
  add("op.batch_norm", [] {
    Rng r(39);
    DT c = rands(r, {2, 3, 3, 3}, 0.5, 1.5);
    return ad::grad_check(
        [c](Ins& in) {
          DT rm = DT::zeros({3});
          DT rv = DT::filled({3}, 1.0);
          return probe(ad::batch_norm(in[0], in[1], in[2], rm, rv, true), c);
        },
        {randu(r, {2, 3, 3, 3}, -1, 1), rands(r, {3}, 0.5, 1.5), randu(r, {3}, -0.5, 0.5)});
  });
  add("op.coord_gate", [] {
    Rng r(40);
    DT c = rands(r, {1, 3, 4, 5}, 0.5, 1.5);
    return ad::grad_check(
        [c](Ins& in) { return probe(ad::coord_gate(in[0], in[1], in[2]), c); },
        {randu(r, {1, 3, 4, 5}, -1, 1), randu(r, {1, 3, 4, 1}, 0.2, 1.0),
         randu(r, {1, 3, 1, 5}, 0.2, 1.0)});
  });
  add("op.channel_gate", [] {
    Rng r(41);
    DT c = rands(r, {2, 3, 3, 4}, 0.5, 1.5);
    return ad::grad_check(
        [c](Ins& in) { return probe(ad::channel_gate(in[0], in[1]), c); },
        {randu(r, {2, 3, 3, 4}, -1, 1), randu(r, {2, 3, 1, 1}, 0.2, 1.0)});
  });
  add("op.fbp_bridge", [] {
    Rng r(42);
    DT c = rands(r, {1, 1, 16, 16}, 0.5, 1.5);
    const auto angles = uniform_angles(10);
    // linear map: central differences are exact, a larger step just
    // suppresses rounding noise
    return ad::grad_check(
        [c, angles](Ins& in) { return probe(fbp_bridge(in[0], angles), c); },
        {randu(r, {1, 1, 10, 16}, -1, 1)}, 1e-6, 1e-3);
  });

  // --- network blocks ---------------------------------------------------------
  add("block.split", [] {
    Rng r(50);
    ad::ParamStore<double> ps;
    const auto b = mini_block();
    cagan::add_shuffle_s1(ps, r, "s", 4, b);
    DT x = randu(r, {2, 4, 6, 8}, -1, 1);
    DT c = rands(r, {2, 4, 6, 8}, 0.5, 1.5);
    // n1.g is near scale-invariant (eps-sized gradient) and n2.b exactly
    // shift-invariant; both are verified separately in the unit tests
    return ad::grad_check(
        [&ps, b, c](Ins& in) {
          return probe(cagan::shuffle_s1_fwd(ps, "s", in[0], b, true), c);
        },
        {x, ps.get("s.pw1.w"), ps.get("s.dw.w"), ps.get("s.pw2.w"), ps.get("s.n2.g"),
         ps.get("s.n3.g")});
  });
  add("block.split-bn", [] {
    Rng r(51);
    ad::ParamStore<double> ps;
    auto b = mini_block();
    b.norm = cagan::NormKind::Batch;
    cagan::add_shuffle_s1(ps, r, "s", 4, b);
    DT x = randu(r, {2, 4, 4, 6}, -1, 1);
    DT c = rands(r, {2, 4, 4, 6}, 0.5, 1.5);
    return ad::grad_check(
        [&ps, b, c](Ins& in) {
          return probe(cagan::shuffle_s1_fwd(ps, "s", in[0], b, true), c);
        },
        {x, ps.get("s.dw.w"), ps.get("s.n2.g")});
  });
  add("block.downsample", [] {
    Rng r(52);
    ad::ParamStore<double> ps;
    const auto b = mini_block();
    cagan::add_shuffle_ns(ps, r, "d", 4, 8, b);
    DT x = randu(r, {1, 4, 6, 6}, -1, 1);
    DT c = rands(r, {1, 8, 3, 3}, 0.5, 1.5);
    return ad::grad_check(
        [&ps, b, c](Ins& in) {
          return probe(cagan::shuffle_ns_fwd(ps, "d", in[0], 2, b, true), c);
        },
        {x, ps.get("d.adw.w"), ps.get("d.apw.w"), ps.get("d.bpw1.w"), ps.get("d.bdw.w"),
         ps.get("d.bpw2.w")});
  });
  add("block.reduce", [] {
    Rng r(53);
    ad::ParamStore<double> ps;
    const auto b = mini_block();
    cagan::add_shuffle_ns(ps, r, "d", 6, 4, b);
    DT x = randu(r, {1, 6, 5, 7}, -1, 1);
    DT c = rands(r, {1, 4, 5, 7}, 0.5, 1.5);
    return ad::grad_check(
        [&ps, b, c](Ins& in) {
          return probe(cagan::shuffle_ns_fwd(ps, "d", in[0], 1, b, true), c);
        },
        {x, ps.get("d.bpw1.w"), ps.get("d.an1.g")});
  });
  add("block.coord-attention", [] {
    Rng r(54);
    ad::ParamStore<double> ps;
    auto b = mini_block();
    b.attention = cagan::AttentionKind::Coord;
    cagan::add_ca(ps, r, "a", 8, b);
    DT x = randu(r, {1, 8, 6, 5}, -1, 1);
    DT c = rands(r, {1, 8, 6, 5}, 0.5, 1.5);
    return ad::grad_check(
        [&ps, b, c](Ins& in) { return probe(cagan::ca_fwd(ps, "a", in[0], b, true), c); },
        {x, ps.get("a.sq.w"), ps.get("a.gh.w"), ps.get("a.gh.bias"), ps.get("a.gw.w"),
         ps.get("a.n.g")});
  });
  add("block.squeeze-excite", [] {
    Rng r(55);
    ad::ParamStore<double> ps;
    auto b = mini_block();
    b.attention = cagan::AttentionKind::SqueezeExcite;
    cagan::add_se(ps, r, "a", 8, b);
    DT x = randu(r, {1, 8, 4, 5}, -1, 1);
    DT c = rands(r, {1, 8, 4, 5}, 0.5, 1.5);
    return ad::grad_check(
        [&ps, c](Ins& in) { return probe(cagan::se_fwd(ps, "a", in[0]), c); },
        {x, ps.get("a.c1.w"), ps.get("a.c1.bias"), ps.get("a.c2.w"), ps.get("a.c2.bias")});
  });

  // --- full networks -----------------------------------------------------------
  add("net.generator", [] {
    Rng r(60);
    cagan::Generator<double> g(toy_net());
    g.init(77);
    DT x = randu(r, {1, 1, 16, 16}, -1, 1);
    DT c = rands(r, {1, 1, 16, 16}, 0.5, 1.5);
    auto& ps = g.params();
    return ad::grad_check(
        [&g, c](Ins& in) { return probe(g.forward(in[0], true), c); },
        {x, ps.get("head.w"), ps.get("head.bias"), ps.get("d0.up.bias")});
  });
  add("net.discriminator", [] {
    Rng r(61);
    cagan::Discriminator<double> d(toy_net());
    d.init(78);
    DT x = randu(r, {2, 1, 16, 16}, -1, 1);
    DT c = rands(r, {2, 1}, 0.5, 1.5);
    auto& ps = d.params();
    // parameters across the whole depth; raw input pixels are checked in the
    // unit tests where the noise-limited tolerance is documented
    return ad::grad_check(
        [&d, c](Ins& in) { return probe(d.forward(in[0], true), c); },
        {ps.get("stem.c.w"), ps.get("e1.b1.dw.w"), ps.get("head.w"), ps.get("head.bias")});
  });

  // --- losses --------------------------------------------------------------------
  add("loss.mse", [] {
    Rng r(70);
    return ad::grad_check(
        [](Ins& in) { return objectives::mse_loss(in[0], in[1]); },
        {randu(r, {2, 1, 6, 6}, 0.0, 1.0), randu(r, {2, 1, 6, 6}, 0.0, 1.0)});
  });
  add("loss.ssim", [] {
    Rng r(71);
    objectives::SsimConfig cfg;
    cfg.window = 5;
    cfg.sigma = 2.5;
    return ad::grad_check(
        [cfg](Ins& in) { return objectives::ssim_loss(in[0], in[1], 1.0, cfg); },
        {randu(r, {1, 1, 8, 8}, 0.1, 0.9), randu(r, {1, 1, 8, 8}, 0.1, 0.9)});
  });
  add("loss.tv", [] {
    Rng r(72);
    return ad::grad_check([](Ins& in) { return objectives::tv_loss(in[0], 1e-2); },
                          {randu(r, {1, 1, 5, 6}, 0.0, 1.0)});
  });
  add("loss.adversarial", [] {
    Rng r(73);
    return ad::grad_check([](Ins& in) { return objectives::adversarial_loss(in[0]); },
                          {randu(r, {3, 1}, 0.1, 0.9)});
  });
  add("loss.discriminator", [] {
    Rng r(74);
    return ad::grad_check(
        [](Ins& in) { return objectives::discriminator_loss(in[0], in[1]); },
        {randu(r, {3, 1}, 0.1, 0.9), randu(r, {3, 1}, 0.1, 0.9)});
  });
  add("loss.discriminator-log", [] {
    Rng r(75);
    return ad::grad_check(
        [](Ins& in) { return objectives::discriminator_loss(in[0], in[1], true); },
        {randu(r, {3, 1}, 0.1, 0.9), randu(r, {3, 1}, 0.1, 0.9)});
  });
  add("loss.generator", [] {
    Rng r(76);
    objectives::SsimConfig scfg;
    scfg.window = 5;
    scfg.sigma = 2.5;
    objectives::LossWeights w;
    w.tv = 0.0;  // the tv term has its own entry above
    DT target = randu(r, {1, 1, 8, 8}, 0.1, 0.9);
    return ad::grad_check(
        [w, scfg, target](Ins& in) {
          return objectives::generator_loss(in[0], target, in[1], w, 1.0, scfg);
        },
        {randu(r, {1, 1, 8, 8}, 0.1, 0.9), randu(r, {1, 1}, 0.2, 0.8)});
  });

  return reg;
}

}  // namespace

int run_gradient_checks(std::ostream& out, std::vector<GradCheckCase>* results) {
  int failures = 0;
  for (const Entry& e : build_registry()) {
    const GradCheckResult r = e.run();
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-24s %s  (max rel err %.3g%s%s)\n", e.name.c_str(),
                  r.pass ? "PASS" : "FAIL", r.max_rel_err, r.pass ? "" : " at ",
                  r.pass ? "" : r.worst.c_str());
    out << buf;
    if (!r.pass) ++failures;
    if (results) results->push_back({e.name, r.pass, r.max_rel_err});
  }
  return failures;
}

}  // namespace ctsparse::train
