#pragma once

#include <string>
#include <vector>

#include "ctsparse/core/types.hpp"
#include "ctsparse/train/run_config.hpp"

namespace ctsparse::train {

// One simulated scan. r_gt is the clean full-view sinogram (the Radon-domain
// training target, after padding); r_sv is the sparse noisy measurement; r_in
// is the network input: r_sv interpolated back onto the full angular grid and
// view-padded so both axes divide by 16.
struct Sample {
  Image phantom;
  Sinogram r_gt;
  Sinogram r_sv;
  Sinogram r_in;
};

struct DatasetInfo {
  RunConfig cfg;
  double mu_scale = 1.0;
  std::string dir;
};

// Uniform parallel-beam grid: views angles at i * 180 / views degrees.
std::vector<double> uniform_angles(int views);

// Deterministic per-purpose stream seed (splitmix64 of seed, salt and index).
uint64_t derive_seed(uint64_t seed, uint64_t salt, uint64_t index);

// Builds the full train/val/test corpus under dir (created if needed). Two
// passes: first phantoms and clean sinograms, with the attenuation scale
// calibrated so the largest train-split path integral reaches
// cfg.target_attenuation; then per-sample measurement simulation (sparse
// sampling, transmission noise, interpolation, padding). Writes one .tnsr
// per sample plus config.cfg and manifest.txt.
DatasetInfo build_dataset(const RunConfig& cfg, const std::string& dir);

// Reads config.cfg + manifest.txt back; missing files throw IoError, a
// malformed manifest throws FormatError.
DatasetInfo load_dataset_info(const std::string& dir);

// Sample file paths for split "train", "val" or "test" (names are
// deterministic, derived from the split counts).
std::vector<std::string> split_files(const DatasetInfo& info, const std::string& split);

Sample load_sample(const std::string& path);

// Refuses (FormatError) a run configuration whose data-defining keys differ
// from the ones the dataset was built with; network and schedule keys are
// free to differ so one corpus can serve many runs.
void check_data_compat(const RunConfig& run, const RunConfig& data);

}  // namespace ctsparse::train
