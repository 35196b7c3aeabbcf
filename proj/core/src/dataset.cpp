#include "ctsparse/train/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ctsparse/core/phantom.hpp"
#include "ctsparse/core/tensor_file.hpp"
#include "ctsparse/sino/pipeline.hpp"
#include "ctsparse/tomo/projector.hpp"

namespace ctsparse::train {

namespace {

constexpr uint64_t kPhantomSalt = 0x706861u;  // distinct streams per purpose
constexpr uint64_t kNoiseSalt = 0x6e6f69u;

std::string sample_name(const std::string& split, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03d.tnsr", split.c_str(), i);
  return buf;
}

void add_sinogram(TensorFile& tf, const std::string& name, const Sinogram& s) {
  tf.add_f64(name, {s.views(), s.detectors}, s.samples);
}

Sinogram get_sinogram(const TensorFile& tf, const std::string& name,
                      const std::vector<double>& angles) {
  const auto& e = tf.get(name);
  if (e.dims.size() != 2 || e.dims[0] != static_cast<int64_t>(angles.size()))
    throw FormatError("dataset: entry '" + name + "' does not match the angle grid");
  Sinogram s;
  s.angles_deg = angles;
  s.detectors = static_cast<int>(e.dims[1]);
  s.samples = e.f64;
  return s;
}

}  // namespace

std::vector<double> uniform_angles(int views) {
  if (views < 1) throw GeometryError("angles: need at least one view");
  std::vector<double> a(static_cast<size_t>(views));
  for (int i = 0; i < views; ++i) a[i] = 180.0 * i / views;
  return a;
}

uint64_t derive_seed(uint64_t seed, uint64_t salt, uint64_t index) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1) + (salt << 17);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

DatasetInfo build_dataset(const RunConfig& cfg, const std::string& dir) {
  cfg.validate();
  std::filesystem::create_directories(dir);

  const int total = cfg.train_count + cfg.val_count + cfg.test_count;
  const auto full_angles = uniform_angles(cfg.full_views);
  const auto sparse_angles = uniform_angles(cfg.sparse_views);

  // pass 1: phantoms and clean sinograms; calibration sees only the train split
  std::vector<Image> phantoms(static_cast<size_t>(total));
  std::vector<Sinogram> clean(static_cast<size_t>(total));
  double max_path = 0.0;
  for (int i = 0; i < total; ++i) {
    PhantomSpec spec;
    spec.kind = PhantomKind::RandomEllipses;
    spec.size = cfg.image_size;
    spec.ellipse_count = cfg.ellipse_count;
    spec.seed = derive_seed(cfg.seed, kPhantomSalt, static_cast<uint64_t>(i));
    phantoms[i] = make_phantom(spec);
    clean[i] = tomo::radon_forward(phantoms[i], full_angles);
    if (i < cfg.train_count)
      for (double v : clean[i].samples) max_path = std::max(max_path, v);
  }
  if (!(max_path > 0.0))
    throw NumericalError("dataset: train split has no attenuating material");

  DatasetInfo info;
  info.cfg = cfg;
  info.dir = dir;
  info.mu_scale = cfg.photons > 0.0 ? cfg.target_attenuation / max_path : 1.0;

  // pass 2: measurement simulation and files
  int ordinal = 0;
  auto emit_split = [&](const std::string& split, int count) {
    for (int i = 0; i < count; ++i, ++ordinal) {
      Sinogram sparse = sino::sparse_sample(clean[ordinal], cfg.sparse_views);
      if (cfg.photons > 0.0) {
        sino::NoiseSpec noise;
        noise.photons = cfg.photons;
        noise.mu_scale = info.mu_scale;
        noise.seed = derive_seed(cfg.seed, kNoiseSalt, static_cast<uint64_t>(ordinal));
        sparse = sino::poisson_noise(sparse, noise);
      }
      const Sinogram interp = sino::interpolate_views(sparse, full_angles);
      const Sinogram padded = sino::pad_views(interp, cfg.padded_views);

      TensorFile tf;
      tf.add_f64("phantom", {cfg.image_size, cfg.image_size}, phantoms[ordinal].pixels);
      add_sinogram(tf, "r_gt", clean[ordinal]);
      add_sinogram(tf, "r_sv", sparse);
      add_sinogram(tf, "r_in", padded);
      tf.add_scalar("mu_scale", info.mu_scale);
      tf.save(dir + "/" + sample_name(split, i));
    }
  };
  emit_split("train", cfg.train_count);
  emit_split("val", cfg.val_count);
  emit_split("test", cfg.test_count);

  save_run_config(dir + "/config.cfg", cfg);
  {
    char mu[40];
    std::snprintf(mu, sizeof mu, "%.17g", info.mu_scale);
    std::ofstream out(dir + "/manifest.txt", std::ios::binary);
    if (!out) throw IoError("dataset: cannot write " + dir + "/manifest.txt");
    out << "mu_scale = " << mu << "\n"
        << "samples = " << total << "\n";
  }
  return info;
}

DatasetInfo load_dataset_info(const std::string& dir) {
  DatasetInfo info;
  info.cfg = load_run_config(dir + "/config.cfg");
  info.dir = dir;
  std::ifstream in(dir + "/manifest.txt", std::ios::binary);
  if (!in) throw IoError("dataset: cannot open " + dir + "/manifest.txt");
  std::string line;
  bool have_mu = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key, eq;
    if (!(ls >> key >> eq)) continue;
    if (key == "mu_scale" && eq == "=" && (ls >> info.mu_scale)) have_mu = true;
  }
  if (!have_mu) throw FormatError("dataset: manifest has no mu_scale");
  return info;
}

std::vector<std::string> split_files(const DatasetInfo& info, const std::string& split) {
  int count = 0;
  if (split == "train") count = info.cfg.train_count;
  else if (split == "val") count = info.cfg.val_count;
  else if (split == "test") count = info.cfg.test_count;
  else throw UsageError("dataset: unknown split '" + split + "'");
  std::vector<std::string> files(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) files[i] = info.dir + "/" + sample_name(split, i);
  return files;
}

void check_data_compat(const RunConfig& run, const RunConfig& data) {
  if (run.train_count != data.train_count || run.val_count != data.val_count ||
      run.test_count != data.test_count)
    throw FormatError("dataset: split counts differ from the run configuration");
  if (run.image_size != data.image_size || run.ellipse_count != data.ellipse_count ||
      run.seed != data.seed)
    throw FormatError("dataset: phantom settings differ from the run configuration");
  if (run.full_views != data.full_views || run.sparse_views != data.sparse_views ||
      run.padded_views != data.padded_views)
    throw FormatError("dataset: view grid differs from the run configuration");
  if (run.photons != data.photons || run.target_attenuation != data.target_attenuation)
    throw FormatError("dataset: noise settings differ from the run configuration");
}

Sample load_sample(const std::string& path) {
  const TensorFile tf = TensorFile::load(path);
  const auto& ph = tf.get("phantom");
  if (ph.dims.size() != 2 || ph.dims[0] != ph.dims[1])
    throw FormatError("dataset: phantom entry is not square");
  Sample s;
  s.phantom.height = static_cast<int>(ph.dims[0]);
  s.phantom.width = static_cast<int>(ph.dims[1]);
  s.phantom.pixels = ph.f64;

  const int full = static_cast<int>(tf.get("r_gt").dims[0]);
  const int sparse = static_cast<int>(tf.get("r_sv").dims[0]);
  const int padded = static_cast<int>(tf.get("r_in").dims[0]);
  s.r_gt = get_sinogram(tf, "r_gt", uniform_angles(full));
  s.r_sv = get_sinogram(tf, "r_sv", uniform_angles(sparse));
  // rebuild the wrapped angle labels exactly as the padding step wrote them
  {
    const auto& e = tf.get("r_in");
    s.r_in.detectors = static_cast<int>(e.dims[1]);
    s.r_in.samples = e.f64;
    s.r_in.angles_deg.resize(static_cast<size_t>(padded));
    const auto base = uniform_angles(full);
    for (int v = 0; v < padded; ++v)
      s.r_in.angles_deg[v] =
          v < full ? base[v] : base[(v - full) % full] + 180.0 * (1 + (v - full) / full);
  }
  return s;
}

}  // namespace ctsparse::train
