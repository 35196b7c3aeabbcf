#pragma once

#include <string>
#include <vector>

#include "ctsparse/train/dataset.hpp"
#include "ctsparse/train/run_config.hpp"

namespace ctsparse::train {

// Reconstruction pipelines the evaluator can score. Fbp reconstructs the
// sparse measurement directly; InterpFbp the interpolated full grid; SartTv
// runs the iterative solver on the sparse measurement; Stage1Fbp applies the
// completion network then FBP; FbpStage2 refines the InterpFbp image with
// the refinement network; Dual chains both networks.
enum class EvalPipeline { Fbp, InterpFbp, SartTv, Stage1Fbp, FbpStage2, Dual };

EvalPipeline parse_pipeline(const std::string& name);
const char* pipeline_name(EvalPipeline p);

struct EvalOptions {
  std::string radon_ckpt;  // required by Stage1Fbp and Dual
  std::string image_ckpt;  // required by FbpStage2 and Dual
  int montage_count = 4;   // leading samples in the montage PGM (0 disables)
};

struct MetricsRecord {
  std::string sample;
  std::string pipeline;
  int views = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double seconds = 0.0;  // measured wall time; the CSV pins this column
};

// Scores one pipeline over a dataset split against the ground-truth
// phantoms (PSNR inside the reconstruction circle, SSIM over the frame,
// data range taken from the split's phantoms). Writes out_csv with
// deterministic bytes (fixed formats, seconds pinned to 0.000), the
// measured timings to `<out_csv>.timings.csv`, and a ground-truth/result
// montage PGM beside it. Returns per-sample records plus a final mean row.
std::vector<MetricsRecord> evaluate_pipeline(const RunConfig& cfg, EvalPipeline pipeline,
                                             const std::string& data_dir,
                                             const std::string& split, const EvalOptions& opt,
                                             const std::string& out_csv);

}  // namespace ctsparse::train
