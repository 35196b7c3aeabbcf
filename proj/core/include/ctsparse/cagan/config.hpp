#pragma once

#include <vector>

#include "ctsparse/core/errors.hpp"

namespace ctsparse::cagan {

enum class NormKind { Group, Batch };
enum class AttentionKind { Coord, SqueezeExcite, None };
enum class AttentionPlace { Inside, Outside };
enum class DownsampleKind { StridedShuffle, Maxpool };
enum class ConvKind { Shuffle, Vanilla };

// Per-block knobs shared across the whole network; each enum is an ablation
// axis. `Inside` attention lives in every split block before its shuffle;
// `Outside` adds one attention block per stage after the two split blocks.
struct BlockConfig {
  NormKind norm = NormKind::Group;
  int gn_groups = 8;
  int shuffle_groups = 32;
  AttentionKind attention = AttentionKind::Coord;
  AttentionPlace place = AttentionPlace::Outside;
  int ca_reduction = 16;
  DownsampleKind downsample = DownsampleKind::StridedShuffle;
  ConvKind conv = ConvKind::Shuffle;
};

// U-shaped network layout: four encoder stages, a bottleneck, four decoder
// stages mirroring the encoder. Spatial dims must divide by 2^4.
struct NetConfig {
  int in_channels = 1;
  int out_channels = 1;
  std::vector<int> stage_channels{32, 64, 128, 256};
  int bottleneck = 512;
  BlockConfig block;

  void validate() const {
    if (in_channels < 1 || out_channels < 1)
      throw ConfigError("net: channel counts must be positive");
    if (stage_channels.size() != 4) throw ConfigError("net: expected exactly 4 stages");
    if (block.shuffle_groups < 1 || block.gn_groups < 1 || block.ca_reduction < 1)
      throw ConfigError("net: group and reduction counts must be positive");
    int prev = 0;
    for (int c : stage_channels) {
      if (c < 2 || c % 2 != 0) throw ConfigError("net: stage channels must be even");
      if (c <= prev) throw ConfigError("net: stage channels must increase");
      if (c % block.shuffle_groups != 0)
        throw ConfigError("net: shuffle groups must divide every stage width");
      if (block.norm == NormKind::Group && c % block.gn_groups != 0)
        throw ConfigError("net: norm groups must divide every stage width");
      if (block.attention != AttentionKind::None && c < block.ca_reduction)
        throw ConfigError("net: attention reduction exceeds the narrowest stage");
      prev = c;
    }
    if (bottleneck <= stage_channels.back() || bottleneck % 2 != 0)
      throw ConfigError("net: bottleneck must be even and wider than the last stage");
    if (bottleneck % block.shuffle_groups != 0)
      throw ConfigError("net: shuffle groups must divide the bottleneck width");
    if (block.norm == NormKind::Group && bottleneck % block.gn_groups != 0)
      throw ConfigError("net: norm groups must divide the bottleneck width");
  }
};

// A reduced schedule for single-core experiments; same topology.
inline NetConfig desk_net() {
  NetConfig cfg;
  cfg.stage_channels = {8, 16, 32, 64};
  cfg.bottleneck = 128;
  cfg.block.shuffle_groups = 8;
  cfg.block.gn_groups = 8;
  cfg.block.ca_reduction = 4;
  return cfg;
}

}  // namespace ctsparse::cagan
