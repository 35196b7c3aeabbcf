#pragma once

#include <string>

#include "ctsparse/cagan/network.hpp"
#include "ctsparse/train/dataset.hpp"
#include "ctsparse/train/run_config.hpp"

namespace ctsparse::train {

// The three training phases: sinogram completion alone, image refinement on
// the frozen completion network's reconstructions, then joint fine-tuning of
// both networks through the differentiable reconstruction bridge.
enum class Stage { Radon, Image, End2End };

Stage parse_stage(const std::string& name);  // "radon" | "image" | "end2end"
const char* stage_name(Stage stage);
const StageSchedule& stage_schedule(const RunConfig& cfg, Stage stage);
double stage_lr(const StageSchedule& s, int epoch);  // epoch is 0-based

// Affine map onto the unit range the networks see: x' = (x - shift) / scale.
struct Normalization {
  double shift = 0.0;
  double scale = 1.0;
};

inline float normalize(double v, const Normalization& n) {
  return static_cast<float>((v - n.shift) / n.scale);
}
inline double denormalize(float v, const Normalization& n) {
  return static_cast<double>(v) * n.scale + n.shift;
}

struct TrainResult {
  std::string checkpoint;    // the stage's final checkpoint
  int epochs_run = 0;        // epochs executed by this call
  double final_val_psnr = 0.0;
};

std::string checkpoint_path(const std::string& run_dir, Stage stage, int epoch);  // 1-based
std::string final_checkpoint_path(const std::string& run_dir, Stage stage);

// Trains one stage on the dataset under data_dir, appending one line per
// epoch to run_dir/training_curve.csv and checkpointing after every epoch.
// Later stages load the previous stage's final checkpoint (IoError if
// missing). `resume` continues from the newest epoch checkpoint of this
// stage; a checkpoint written under a different configuration is refused
// (FormatError). epoch_limit > 0 stops after that many additional epochs, so
// an interrupted-and-resumed run can be reproduced exactly. A non-finite
// loss writes a diagnostic checkpoint and throws NumericalError.
TrainResult train_stage(const RunConfig& cfg, Stage stage, const std::string& data_dir,
                        const std::string& run_dir, bool resume = false, int epoch_limit = 0);

// A trained generator plus the affine normalization of its domain, restored
// from a stage checkpoint (the completion net from a radon or end2end
// checkpoint, the refinement net from an image or end2end checkpoint).
// The checkpoint must match the configuration's hash.
struct GeneratorBundle {
  cagan::Generator<float> gen;
  Normalization norm;
};

GeneratorBundle load_radon_generator(const RunConfig& cfg, const std::string& ckpt_path);
GeneratorBundle load_image_generator(const RunConfig& cfg, const std::string& ckpt_path);

// Inference helpers shared by stage-2 input preparation and evaluation:
// completion network + classic FBP on a sample's interpolated sinogram, and
// the refinement network applied to a reconstructed image.
Image stage1_reconstruct(const Sample& s, const RunConfig& cfg, GeneratorBundle& radon);
Image refine_image(const Image& im, const RunConfig& cfg, GeneratorBundle& image);

}  // namespace ctsparse::train
