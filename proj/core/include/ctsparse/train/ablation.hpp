#pragma once

#include <string>
#include <vector>

#include "ctsparse/train/run_config.hpp"

namespace ctsparse::train {

struct AblationVariant {
  std::string name;
  RunConfig cfg;
};

// The architecture axes worth comparing, all sharing base's data, loss and
// schedule: no attention, coordinate attention inside/outside the blocks,
// squeeze-excite outside, max-pool downsampling, and plain convolutions.
std::vector<AblationVariant> default_ablation_grid(const RunConfig& base);

struct AblationRow {
  std::string name;
  int64_t params = 0;
  int64_t macs = 0;
  double val_psnr = 0.0;
  double val_ssim = 0.0;
};

// Trains the completion stage per variant under run_root/<name>/ and scores
// completion+FBP on the validation split. Writes one CSV row per variant
// (name, params, macs, val_psnr, val_ssim) and returns the rows.
std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& variants,
                                      const std::string& data_dir,
                                      const std::string& run_root,
                                      const std::string& out_csv);

}  // namespace ctsparse::train
