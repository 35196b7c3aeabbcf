#pragma once

#include <cstdint>
#include <string>

#include "ctsparse/cagan/config.hpp"
#include "ctsparse/objectives/losses.hpp"

namespace ctsparse::train {

// Learning-rate plan for one stage: `lr` for epochs [0, switch_epoch),
// `lr_late` from switch_epoch on.
struct StageSchedule {
  int epochs = 1;
  double lr = 1e-4;
  double lr_late = 1e-5;
  int switch_epoch = 1;
};

// Everything a run needs, resolvable from one key=value file. Defaults are
// the single-core desk recipe; the serialized form is canonical (fixed key
// order, round-trip exact), so its FNV-1a hash identifies a configuration.
struct RunConfig {
  // dataset
  int train_count = 200;
  int val_count = 40;
  int test_count = 40;
  int image_size = 64;
  int ellipse_count = 6;
  uint64_t seed = 1234;
  int full_views = 180;
  int sparse_views = 45;
  int padded_views = 192;
  double photons = 2e7;  // incident photons per bin; 0 disables noise
  double target_attenuation = 5.0;  // calibrates attenuation from train-split max path

  // model
  cagan::NetConfig net = cagan::desk_net();

  // objective
  objectives::LossWeights weights;
  bool discriminator = true;

  // optimisation
  StageSchedule radon{6, 3e-4, 3e-5, 3};
  StageSchedule image{6, 1e-4, 1e-5, 2};
  StageSchedule end2end{2, 1e-4, 1e-5, 1};
  int batch_size = 2;

  void validate() const;
};

// Parse / serialize the canonical key=value form. Unknown keys, malformed
// values and out-of-range settings all throw ConfigError. Lines starting
// with '#' and blank lines are ignored on input.
RunConfig parse_run_config(const std::string& text);
std::string serialize_run_config(const RunConfig& cfg);

RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& cfg);

// FNV-1a over the canonical serialization; written into checkpoints so a
// resume against a different configuration is refused.
uint64_t config_hash(const RunConfig& cfg);

}  // namespace ctsparse::train
