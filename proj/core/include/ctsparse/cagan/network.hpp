#pragma once

// The U-shaped restoration generator and the encoder-style discriminator.
// Parameter registration order is fixed, so `init(seed)` fully determines
// the weights and the checkpoint layout.

#include <string>
#include <vector>

#include "ctsparse/cagan/blocks.hpp"

namespace ctsparse::cagan {

inline std::string stage_name(const char* side, int i, const char* part) {
  return std::string(side) + std::to_string(i) + "." + part;
}

// encoder shared by the generator and the discriminator: a stem then four
// stages of (2 blocks, optional attention, downsample); returns the
// bottleneck-width feature map and fills `skips` with each stage's
// pre-downsample output
template <typename T>
void build_encoder(ad::ParamStore<T>& ps, Rng& rng, const NetConfig& cfg) {
  const auto& b = cfg.block;
  add_cnr(ps, rng, "stem", cfg.in_channels, cfg.stage_channels[0], 3, b);
  for (int s = 0; s < 4; ++s) {
    const int64_t c = cfg.stage_channels[static_cast<size_t>(s)];
    const int64_t cnext = s < 3 ? cfg.stage_channels[static_cast<size_t>(s) + 1] : cfg.bottleneck;
    add_block(ps, rng, stage_name("e", s, "b0"), c, b);
    add_block(ps, rng, stage_name("e", s, "b1"), c, b);
    if (b.place == AttentionPlace::Outside)
      add_attention(ps, rng, stage_name("e", s, "att"), c, b);
    add_down(ps, rng, stage_name("e", s, "down"), c, cnext, b);
  }
}

template <typename T>
ad::Tensor<T> encoder_fwd(ad::ParamStore<T>& ps, const NetConfig& cfg, const ad::Tensor<T>& x,
                          bool training, std::vector<ad::Tensor<T>>* skips) {
  const auto& b = cfg.block;
  auto y = cnr_fwd(ps, "stem", x, 1, 1, b, training);
  for (int s = 0; s < 4; ++s) {
    y = block_fwd(ps, stage_name("e", s, "b0"), y, b, training);
    y = block_fwd(ps, stage_name("e", s, "b1"), y, b, training);
    if (b.place == AttentionPlace::Outside)
      y = attention_fwd(ps, stage_name("e", s, "att"), y, b, training);
    if (skips) skips->push_back(y);
    y = down_fwd(ps, stage_name("e", s, "down"), y, b, training);
  }
  return y;
}

template <typename T>
void check_input(const ad::Tensor<T>& x, int channels) {
  if (x.rank() != 4) throw ShapeError("net: expected NCHW input");
  if (x.dim(1) != channels) throw ShapeError("net: wrong channel count");
  if (x.dim(2) % 16 != 0 || x.dim(3) % 16 != 0 || x.dim(2) == 0 || x.dim(3) == 0)
    throw ShapeError("net: spatial dims must be positive multiples of 16");
}

template <typename T>
class Generator {
 public:
  explicit Generator(NetConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  void init(uint64_t seed) {
    Rng rng(seed);
    const auto& b = cfg_.block;
    build_encoder(ps_, rng, cfg_);
    add_block(ps_, rng, "mid.b0", cfg_.bottleneck, b);
    add_block(ps_, rng, "mid.b1", cfg_.bottleneck, b);
    for (int s = 3; s >= 0; --s) {
      const int64_t c = cfg_.stage_channels[static_cast<size_t>(s)];
      const int64_t cup = s < 3 ? cfg_.stage_channels[static_cast<size_t>(s) + 1] : cfg_.bottleneck;
      ps_.add_conv_weight(stage_name("d", s, "up.w"), {cup, c, 2, 2}, cup, rng);
      ps_.add(stage_name("d", s, "up.bias"), ad::Tensor<T>::zeros({c}));
      add_reduce(ps_, rng, stage_name("d", s, "red"), 2 * c, c, b);
      add_block(ps_, rng, stage_name("d", s, "b0"), c, b);
      if (b.place == AttentionPlace::Outside)
        add_attention(ps_, rng, stage_name("d", s, "att"), c, b);
    }
    add_conv(ps_, rng, "head", cfg_.out_channels, cfg_.stage_channels[0], 1, true);
  }

  ad::Tensor<T> forward(const ad::Tensor<T>& x, bool training) {
    check_input(x, cfg_.in_channels);
    const auto& b = cfg_.block;
    std::vector<ad::Tensor<T>> skips;
    auto y = encoder_fwd(ps_, cfg_, x, training, &skips);
    y = block_fwd(ps_, "mid.b0", y, b, training);
    y = block_fwd(ps_, "mid.b1", y, b, training);
    for (int s = 3; s >= 0; --s) {
      y = ad::conv_transpose2d(y, ps_.get(stage_name("d", s, "up.w")),
                               ps_.get(stage_name("d", s, "up.bias")), 2);
      y = ad::concat(std::vector<ad::Tensor<T>>{y, skips[static_cast<size_t>(s)]}, 1);
      y = reduce_fwd(ps_, stage_name("d", s, "red"), y, b, training);
      y = block_fwd(ps_, stage_name("d", s, "b0"), y, b, training);
      if (b.place == AttentionPlace::Outside)
        y = attention_fwd(ps_, stage_name("d", s, "att"), y, b, training);
    }
    return conv_fwd(ps_, "head", y, 1, 0, 1, true);
  }

  ad::ParamStore<T>& params() { return ps_; }
  const ad::ParamStore<T>& params() const { return ps_; }
  const NetConfig& config() const { return cfg_; }

 private:
  NetConfig cfg_;
  ad::ParamStore<T> ps_;
};

// encoder + global pooling + a sigmoid head: P(input is a real sample)
template <typename T>
class Discriminator {
 public:
  explicit Discriminator(NetConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  void init(uint64_t seed) {
    Rng rng(seed);
    build_encoder(ps_, rng, cfg_);
    add_conv(ps_, rng, "head", 1, cfg_.bottleneck, 1, true);
  }

  ad::Tensor<T> forward(const ad::Tensor<T>& x, bool training) {
    check_input(x, cfg_.in_channels);
    auto y = encoder_fwd(ps_, cfg_, x, training, static_cast<std::vector<ad::Tensor<T>>*>(nullptr));
    y = ad::sigmoid(conv_fwd(ps_, "head", ad::global_avg_pool(y), 1, 0, 1, true));
    return ad::reshape(y, {x.dim(0), 1});
  }

  ad::ParamStore<T>& params() { return ps_; }
  const ad::ParamStore<T>& params() const { return ps_; }
  const NetConfig& config() const { return cfg_; }

 private:
  NetConfig cfg_;
  ad::ParamStore<T> ps_;
};

}  // namespace ctsparse::cagan
