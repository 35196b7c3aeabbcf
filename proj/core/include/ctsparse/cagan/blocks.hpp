#pragma once

// Building blocks of the restoration networks. Every block comes as a
// builder (registers parameters under a prefix, in a fixed order so the
// seed alone reproduces the initialization) and a forward (looks the same
// names up again). Convolutions followed by a norm carry no bias.

#include <string>

#include "ctsparse/ad/nn_ops.hpp"
#include "ctsparse/ad/ops.hpp"
#include "ctsparse/ad/params.hpp"
#include "ctsparse/cagan/config.hpp"

namespace ctsparse::cagan {

// largest group count <= requested that divides the width; the reduced
// channels inside attention blocks can drop below the configured groups
inline int norm_groups_for(int64_t channels, int requested) {
  int g = requested < channels ? requested : static_cast<int>(channels);
  while (channels % g != 0) --g;
  return g;
}

// ---------------------------------------------------------------------------
// primitives: conv + norm
// ---------------------------------------------------------------------------

template <typename T>
void add_conv(ad::ParamStore<T>& ps, Rng& rng, const std::string& p, int64_t cout,
              int64_t cin_per_group, int k, bool bias) {
  ps.add_conv_weight(p + ".w", {cout, cin_per_group, k, k}, cin_per_group * k * k, rng);
  if (bias) ps.add(p + ".bias", ad::Tensor<T>::zeros({cout}));
}

template <typename T>
ad::Tensor<T> conv_fwd(ad::ParamStore<T>& ps, const std::string& p, const ad::Tensor<T>& x,
                       int stride, int pad, int groups, bool bias) {
  ad::Tensor<T> none;
  return ad::conv2d(x, ps.get(p + ".w"), bias ? ps.get(p + ".bias") : none, stride, pad,
                    groups);
}

template <typename T>
void add_norm(ad::ParamStore<T>& ps, const std::string& p, int64_t c, const BlockConfig& b) {
  ps.add(p + ".g", ad::Tensor<T>::filled({c}, T(1)));
  ps.add(p + ".b", ad::Tensor<T>::zeros({c}));
  if (b.norm == NormKind::Batch) {
    ps.add(p + ".rm", ad::Tensor<T>::zeros({c}), /*trainable=*/false);
    ps.add(p + ".rv", ad::Tensor<T>::filled({c}, T(1)), /*trainable=*/false);
  }
}

template <typename T>
ad::Tensor<T> norm_fwd(ad::ParamStore<T>& ps, const std::string& p, const ad::Tensor<T>& x,
                       const BlockConfig& b, bool training) {
  if (b.norm == NormKind::Group)
    return ad::group_norm(x, ps.get(p + ".g"), ps.get(p + ".b"),
                          norm_groups_for(x.dim(1), b.gn_groups));
  return ad::batch_norm(x, ps.get(p + ".g"), ps.get(p + ".b"), ps.get(p + ".rm"),
                        ps.get(p + ".rv"), training);
}

// conv -> norm -> ReLU, the vanilla unit and the stem
template <typename T>
void add_cnr(ad::ParamStore<T>& ps, Rng& rng, const std::string& p, int64_t cin, int64_t cout,
             int k, const BlockConfig& b) {
  add_conv(ps, rng, p + ".c", cout, cin, k, false);
  add_norm(ps, p + ".n", cout, b);
}

template <typename T>
ad::Tensor<T> cnr_fwd(ad::ParamStore<T>& ps, const std::string& p, const ad::Tensor<T>& x,
                      int stride, int pad, const BlockConfig& b, bool training) {
  return ad::relu(norm_fwd(ps, p + ".n", conv_fwd(ps, p + ".c", x, stride, pad, 1, false), b,
                           training));
}

// ---------------------------------------------------------------------------
// attention
// ---------------------------------------------------------------------------

// coordinate attention: directional pooling, a shared bottleneck, and two
// sigmoid gate heads recombined as a separable spatial gate
template <typename T>
void add_ca(ad::ParamStore<T>& ps, Rng& rng, const std::string& p, int64_t c,
            const BlockConfig& b) {
  if (c < b.ca_reduction) throw ConfigError("attention: channels below the reduction");
  const int64_t mid = c / b.ca_reduction;
  add_conv(ps, rng, p + ".sq", mid, c, 1, false);
  add_norm(ps, p + ".n", mid, b);
  add_conv(ps, rng, p + ".gh", c, mid, 1, true);
  add_conv(ps, rng, p + ".gw", c, mid, 1, true);
}

template <typename T>
ad::Tensor<T> ca_fwd(ad::ParamStore<T>& ps, const std::string& p, const ad::Tensor<T>& x,
                     const BlockConfig& b, bool training) {
  const int64_t h = x.dim(2), w = x.dim(3);
  auto zh = ad::pool_width(x);                     // [N,C,H,1]
  auto zw = ad::transpose_hw(ad::pool_height(x));  // [N,C,W,1]
  auto q = ad::concat(std::vector<ad::Tensor<T>>{zh, zw}, 2);  // [N,C,H+W,1]
  q = ad::relu(norm_fwd(ps, p + ".n", conv_fwd(ps, p + ".sq", q, 1, 0, 1, false), b, training));
  auto gh = ad::sigmoid(conv_fwd(ps, p + ".gh", ad::slice_axis(q, 2, 0, h), 1, 0, 1, true));
  auto gw = ad::sigmoid(conv_fwd(ps, p + ".gw", ad::slice_axis(q, 2, h, w), 1, 0, 1, true));
  return ad::coord_gate(x, gh, ad::transpose_hw(gw));
}

// squeeze-and-excitation: global pooling and a two-layer channel gate
template <typename T>
void add_se(ad::ParamStore<T>& ps, Rng& rng, const std::string& p, int64_t c,
            const BlockConfig& b) {
  if (c < b.ca_reduction) throw ConfigError("attention: channels below the reduction");
  const int64_t mid = c / b.ca_reduction;
  add_conv(ps, rng, p + ".c1", mid, c, 1, true);
  add_conv(ps, rng, p + ".c2", c, mid, 1, true);
}

template <typename T>
ad::Tensor<T> se_fwd(ad::ParamStore<T>& ps, const std::string& p, const ad::Tensor<T>& x) {
  auto s = ad::relu(conv_fwd(ps, p + ".c1", ad::global_avg_pool(x), 1, 0, 1, true));
  s = ad::sigmoid(conv_fwd(ps, p + ".c2", s, 1, 0, 1, true));
  return ad::channel_gate(x, s);
}

template <typename T>
void add_attention(ad::ParamStore<T>& ps, Rng& rng, const std::string& p, int64_t c,
                   const BlockConfig& b) {
  if (b.attention == AttentionKind::Coord) add_ca(ps, rng, p, c, b);
  if (b.attention == AttentionKind::SqueezeExcite) add_se(ps, rng, p, c, b);
}

template <typename T>
ad::Tensor<T> attention_fwd(ad::ParamStore<T>& ps, const std::string& p, const ad::Tensor<T>& x,
                            const BlockConfig& b, bool training) {
  if (b.attention == AttentionKind::Coord) return ca_fwd(ps, p, x, b, training);
  if (b.attention == AttentionKind::SqueezeExcite) return se_fwd(ps, p, x);
  return x;
}

// ---------------------------------------------------------------------------
// shuffle blocks
// ---------------------------------------------------------------------------

// stride-1 split block: half the channels pass through untouched, the other
// half runs pw -> norm -> ReLU -> dw3x3 -> norm -> pw -> norm -> ReLU; the
// halves are re-mixed by a channel shuffle
template <typename T>
void add_shuffle_s1(ad::ParamStore<T>& ps, Rng& rng, const std::string& p, int64_t c,
                    const BlockConfig& b) {
  if (c % 2 != 0) throw ShapeError("split block: odd width");
  const int64_t half = c / 2;
  add_conv(ps, rng, p + ".pw1", half, half, 1, false);
  add_norm(ps, p + ".n1", half, b);
  add_conv(ps, rng, p + ".dw", half, 1, 3, false);
  add_norm(ps, p + ".n2", half, b);
  add_conv(ps, rng, p + ".pw2", half, half, 1, false);
  add_norm(ps, p + ".n3", half, b);
  if (b.place == AttentionPlace::Inside) add_attention(ps, rng, p + ".att", c, b);
}

template <typename T>
ad::Tensor<T> shuffle_s1_fwd(ad::ParamStore<T>& ps, const std::string& p,
                             const ad::Tensor<T>& x, const BlockConfig& b, bool training) {
  auto halves = ad::channel_split(x);
  const int groups = static_cast<int>(halves.second.dim(1));
  auto y = ad::relu(
      norm_fwd(ps, p + ".n1", conv_fwd(ps, p + ".pw1", halves.second, 1, 0, 1, false), b,
               training));
  y = norm_fwd(ps, p + ".n2", conv_fwd(ps, p + ".dw", y, 1, 1, groups, false), b, training);
  y = ad::relu(norm_fwd(ps, p + ".n3", conv_fwd(ps, p + ".pw2", y, 1, 0, 1, false), b, training));
  auto cat = ad::concat(std::vector<ad::Tensor<T>>{halves.first, y}, 1);
  if (b.place == AttentionPlace::Inside)
    cat = attention_fwd(ps, p + ".att", cat, b, training);
  return ad::channel_shuffle(cat, b.shuffle_groups);
}

// no-split two-branch block; stride 2 downsamples, stride 1 only changes the
// width (the decoder's channel-reducing variant)
template <typename T>
void add_shuffle_ns(ad::ParamStore<T>& ps, Rng& rng, const std::string& p, int64_t cin,
                    int64_t cout, const BlockConfig& b) {
  const int64_t half = cout / 2;
  add_conv(ps, rng, p + ".adw", cin, 1, 3, false);
  add_norm(ps, p + ".an1", cin, b);
  add_conv(ps, rng, p + ".apw", half, cin, 1, false);
  add_norm(ps, p + ".an2", half, b);
  add_conv(ps, rng, p + ".bpw1", half, cin, 1, false);
  add_norm(ps, p + ".bn1", half, b);
  add_conv(ps, rng, p + ".bdw", half, 1, 3, false);
  add_norm(ps, p + ".bn2", half, b);
  add_conv(ps, rng, p + ".bpw2", half, half, 1, false);
  add_norm(ps, p + ".bn3", half, b);
}

template <typename T>
ad::Tensor<T> shuffle_ns_fwd(ad::ParamStore<T>& ps, const std::string& p,
                             const ad::Tensor<T>& x, int stride, const BlockConfig& b,
                             bool training) {
  if (stride == 2 && (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0))
    throw ShapeError("downsample block: odd spatial dims");
  const int cin = static_cast<int>(x.dim(1));
  auto a = norm_fwd(ps, p + ".an1", conv_fwd(ps, p + ".adw", x, stride, 1, cin, false), b,
                    training);
  a = ad::relu(
      norm_fwd(ps, p + ".an2", conv_fwd(ps, p + ".apw", a, 1, 0, 1, false), b, training));
  auto y = ad::relu(
      norm_fwd(ps, p + ".bn1", conv_fwd(ps, p + ".bpw1", x, 1, 0, 1, false), b, training));
  const int half = static_cast<int>(y.dim(1));
  y = norm_fwd(ps, p + ".bn2", conv_fwd(ps, p + ".bdw", y, stride, 1, half, false), b,
               training);
  y = ad::relu(
      norm_fwd(ps, p + ".bn3", conv_fwd(ps, p + ".bpw2", y, 1, 0, 1, false), b, training));
  return ad::channel_shuffle(ad::concat(std::vector<ad::Tensor<T>>{a, y}, 1), b.shuffle_groups);
}

// ---------------------------------------------------------------------------
// stage-level dispatch: block body, downsample, decoder width reduction
// ---------------------------------------------------------------------------

template <typename T>
void add_block(ad::ParamStore<T>& ps, Rng& rng, const std::string& p, int64_t c,
               const BlockConfig& b) {
  if (b.conv == ConvKind::Vanilla)
    add_cnr(ps, rng, p, c, c, 3, b);
  else
    add_shuffle_s1(ps, rng, p, c, b);
}

template <typename T>
ad::Tensor<T> block_fwd(ad::ParamStore<T>& ps, const std::string& p, const ad::Tensor<T>& x,
                        const BlockConfig& b, bool training) {
  if (b.conv == ConvKind::Vanilla) return cnr_fwd(ps, p, x, 1, 1, b, training);
  return shuffle_s1_fwd(ps, p, x, b, training);
}

template <typename T>
void add_down(ad::ParamStore<T>& ps, Rng& rng, const std::string& p, int64_t cin, int64_t cout,
              const BlockConfig& b) {
  if (b.downsample == DownsampleKind::Maxpool)
    add_cnr(ps, rng, p, cin, cout, 1, b);
  else if (b.conv == ConvKind::Vanilla)
    add_cnr(ps, rng, p, cin, cout, 3, b);
  else
    add_shuffle_ns(ps, rng, p, cin, cout, b);
}

template <typename T>
ad::Tensor<T> down_fwd(ad::ParamStore<T>& ps, const std::string& p, const ad::Tensor<T>& x,
                       const BlockConfig& b, bool training) {
  if (b.downsample == DownsampleKind::Maxpool)
    return cnr_fwd(ps, p, ad::maxpool2d(x), 1, 0, b, training);
  if (b.conv == ConvKind::Vanilla) return cnr_fwd(ps, p, x, 2, 1, b, training);
  return shuffle_ns_fwd(ps, p, x, 2, b, training);
}

template <typename T>
void add_reduce(ad::ParamStore<T>& ps, Rng& rng, const std::string& p, int64_t cin, int64_t cout,
                const BlockConfig& b) {
  if (b.conv == ConvKind::Vanilla)
    add_cnr(ps, rng, p, cin, cout, 3, b);
  else
    add_shuffle_ns(ps, rng, p, cin, cout, b);
}

template <typename T>
ad::Tensor<T> reduce_fwd(ad::ParamStore<T>& ps, const std::string& p, const ad::Tensor<T>& x,
                         const BlockConfig& b, bool training) {
  if (b.conv == ConvKind::Vanilla) return cnr_fwd(ps, p, x, 1, 1, b, training);
  return shuffle_ns_fwd(ps, p, x, 1, b, training);
}

}  // namespace ctsparse::cagan
