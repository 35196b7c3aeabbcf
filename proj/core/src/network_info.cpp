#include "ctsparse/cagan/info.hpp"

#include <cinttypes>
#include <cstdio>

#include "ctsparse/cagan/network.hpp"

namespace ctsparse::cagan {
namespace {

// MAC bookkeeping mirrors the builders in blocks.hpp: one entry per conv at
// its output resolution, plus the elementwise gate products.
struct MacAcc {
  int64_t total = 0;

  void conv(int64_t cout, int64_t cpg, int k, bool bias, int64_t h, int64_t w) {
    total += (cout * cpg * k * k + (bias ? cout : 0)) * h * w;
  }

  void attention(const BlockConfig& b, int64_t c, int64_t h, int64_t w) {
    if (b.attention == AttentionKind::None) return;
    const int64_t mid = c / b.ca_reduction;
    if (b.attention == AttentionKind::Coord) {
      conv(mid, c, 1, false, h + w, 1);
      conv(c, mid, 1, true, h, 1);
      conv(c, mid, 1, true, w, 1);
      total += 2 * c * h * w;  // separable gate product
    } else {
      conv(mid, c, 1, true, 1, 1);
      conv(c, mid, 1, true, 1, 1);
      total += c * h * w;  // channel gate product
    }
  }

  void block(const BlockConfig& b, int64_t c, int64_t h, int64_t w) {
    if (b.conv == ConvKind::Vanilla) {
      conv(c, c, 3, false, h, w);
      return;
    }
    const int64_t half = c / 2;
    conv(half, half, 1, false, h, w);
    conv(half, 1, 3, false, h, w);
    conv(half, half, 1, false, h, w);
    if (b.place == AttentionPlace::Inside) attention(b, c, h, w);
  }

  void no_split(const BlockConfig& b, int64_t cin, int64_t cout, int64_t h, int64_t w,
                int stride) {
    const int64_t ho = h / stride, wo = w / stride;
    const int64_t half = cout / 2;
    conv(cin, 1, 3, false, ho, wo);
    conv(half, cin, 1, false, ho, wo);
    conv(half, cin, 1, false, h, w);
    conv(half, 1, 3, false, ho, wo);
    conv(half, half, 1, false, ho, wo);
  }

  void down(const BlockConfig& b, int64_t cin, int64_t cout, int64_t h, int64_t w) {
    if (b.downsample == DownsampleKind::Maxpool)
      conv(cout, cin, 1, false, h / 2, w / 2);
    else if (b.conv == ConvKind::Vanilla)
      conv(cout, cin, 3, false, h / 2, w / 2);
    else
      no_split(b, cin, cout, h, w, 2);
  }

  void reduce(const BlockConfig& b, int64_t cin, int64_t cout, int64_t h, int64_t w) {
    if (b.conv == ConvKind::Vanilla)
      conv(cout, cin, 3, false, h, w);
    else
      no_split(b, cin, cout, h, w, 1);
  }
};

}  // namespace

int64_t conv_param_count(int64_t cout, int64_t cin_per_group, int k, bool bias) {
  return cout * cin_per_group * k * k + (bias ? cout : 0);
}

int64_t generator_param_count(const NetConfig& cfg) {
  Generator<double> g(cfg);
  g.init(0);
  return g.params().total_params(true);
}

int64_t discriminator_param_count(const NetConfig& cfg) {
  Discriminator<double> d(cfg);
  d.init(0);
  return d.params().total_params(true);
}

int64_t generator_mac_count(const NetConfig& cfg, int h, int w) {
  cfg.validate();
  if (h % 16 != 0 || w % 16 != 0 || h <= 0 || w <= 0)
    throw ShapeError("mac count: spatial dims must be positive multiples of 16");
  const auto& b = cfg.block;
  MacAcc acc;
  int64_t ch = h, cw = w;

  acc.conv(cfg.stage_channels[0], cfg.in_channels, 3, false, ch, cw);
  for (int s = 0; s < 4; ++s) {
    const int64_t c = cfg.stage_channels[static_cast<size_t>(s)];
    const int64_t cnext = s < 3 ? cfg.stage_channels[static_cast<size_t>(s) + 1] : cfg.bottleneck;
    acc.block(b, c, ch, cw);
    acc.block(b, c, ch, cw);
    if (b.place == AttentionPlace::Outside) acc.attention(b, c, ch, cw);
    acc.down(b, c, cnext, ch, cw);
    ch /= 2;
    cw /= 2;
  }
  acc.block(b, cfg.bottleneck, ch, cw);
  acc.block(b, cfg.bottleneck, ch, cw);
  for (int s = 3; s >= 0; --s) {
    const int64_t c = cfg.stage_channels[static_cast<size_t>(s)];
    const int64_t cup = s < 3 ? cfg.stage_channels[static_cast<size_t>(s) + 1] : cfg.bottleneck;
    acc.total += (cup * c * 4 + c) * ch * cw;  // transposed conv at input resolution
    ch *= 2;
    cw *= 2;
    acc.reduce(b, 2 * c, c, ch, cw);
    acc.block(b, c, ch, cw);
    if (b.place == AttentionPlace::Outside) acc.attention(b, c, ch, cw);
  }
  acc.conv(cfg.out_channels, cfg.stage_channels[0], 1, true, ch, cw);
  return acc.total;
}

std::string describe(const ad::ParamStore<double>& ps) {
  std::string out;
  char line[160];
  int64_t trainable = 0, fixed = 0;
  for (const auto& e : ps.entries()) {
    std::string dims = "[";
    for (size_t i = 0; i < e.tensor.dims().size(); ++i) {
      if (i) dims += ",";
      dims += std::to_string(e.tensor.dims()[i]);
    }
    dims += "]";
    std::snprintf(line, sizeof(line), "%-28s %-18s %10" PRId64 "%s\n", e.name.c_str(),
                  dims.c_str(), e.tensor.numel(), e.trainable ? "" : "  (fixed)");
    out += line;
    (e.trainable ? trainable : fixed) += e.tensor.numel();
  }
  std::snprintf(line, sizeof(line), "total: %" PRId64 " trainable, %" PRId64 " fixed\n",
                trainable, fixed);
  out += line;
  return out;
}

}  // namespace ctsparse::cagan
