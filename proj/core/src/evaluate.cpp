#include "ctsparse/train/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <optional>

#include "ctsparse/core/pgm.hpp"
#include "ctsparse/objectives/metrics.hpp"
#include "ctsparse/sino/pipeline.hpp"
#include "ctsparse/tomo/fbp.hpp"
#include "ctsparse/tomo/sart.hpp"
#include "ctsparse/train/trainer.hpp"

namespace ctsparse::train {

namespace {

void write_csv(const std::string& path, const std::vector<MetricsRecord>& rows, bool pinned) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("evaluate: cannot write " + path);
  out << "sample,pipeline,views,psnr,ssim,seconds\n";
  char buf[192];
  for (const MetricsRecord& r : rows) {
    if (pinned)
      std::snprintf(buf, sizeof buf, "%s,%s,%d,%.6f,%.6f,0.000\n", r.sample.c_str(),
                    r.pipeline.c_str(), r.views, r.psnr, r.ssim);
    else
      std::snprintf(buf, sizeof buf, "%s,%s,%d,%.6f,%.6f,%.3f\n", r.sample.c_str(),
                    r.pipeline.c_str(), r.views, r.psnr, r.ssim, r.seconds);
    out << buf;
  }
  if (!out) throw IoError("evaluate: short write to " + path);
}

std::string sample_id(const std::string& path) {
  const size_t slash = path.find_last_of('/');
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  const size_t dot = base.rfind(".tnsr");
  return dot == std::string::npos ? base : base.substr(0, dot);
}

}  // namespace

EvalPipeline parse_pipeline(const std::string& name) {
  if (name == "fbp") return EvalPipeline::Fbp;
  if (name == "interp-fbp") return EvalPipeline::InterpFbp;
  if (name == "sart-tv") return EvalPipeline::SartTv;
  if (name == "stage1-fbp") return EvalPipeline::Stage1Fbp;
  if (name == "fbp-stage2") return EvalPipeline::FbpStage2;
  if (name == "dual") return EvalPipeline::Dual;
  throw UsageError("pipeline: unknown '" + name +
                   "' (fbp, interp-fbp, sart-tv, stage1-fbp, fbp-stage2, dual)");
}

const char* pipeline_name(EvalPipeline p) {
  switch (p) {
    case EvalPipeline::Fbp: return "fbp";
    case EvalPipeline::InterpFbp: return "interp-fbp";
    case EvalPipeline::SartTv: return "sart-tv";
    case EvalPipeline::Stage1Fbp: return "stage1-fbp";
    case EvalPipeline::FbpStage2: return "fbp-stage2";
    default: return "dual";
  }
}

std::vector<MetricsRecord> evaluate_pipeline(const RunConfig& cfg, EvalPipeline pipeline,
                                             const std::string& data_dir,
                                             const std::string& split, const EvalOptions& opt,
                                             const std::string& out_csv) {
  cfg.validate();
  const DatasetInfo info = load_dataset_info(data_dir);
  check_data_compat(cfg, info.cfg);
  const auto files = split_files(info, split);

  const bool needs_radon = pipeline == EvalPipeline::Stage1Fbp || pipeline == EvalPipeline::Dual;
  const bool needs_image = pipeline == EvalPipeline::FbpStage2 || pipeline == EvalPipeline::Dual;
  if (needs_radon && opt.radon_ckpt.empty())
    throw UsageError("evaluate: this pipeline needs a completion-stage checkpoint");
  if (needs_image && opt.image_ckpt.empty())
    throw UsageError("evaluate: this pipeline needs a refinement-stage checkpoint");

  std::optional<GeneratorBundle> rb, ib;
  if (needs_radon) rb.emplace(load_radon_generator(cfg, opt.radon_ckpt));
  if (needs_image) ib.emplace(load_image_generator(cfg, opt.image_ckpt));

  // ground-truth data range shared by every sample of the split
  std::vector<Sample> samples;
  samples.reserve(files.size());
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto& f : files) {
    samples.push_back(load_sample(f));
    for (double v : samples.back().phantom.pixels) {
      if (first || v < lo) lo = v;
      if (first || v > hi) hi = v;
      first = false;
    }
  }
  const double range = hi > lo ? hi - lo : 1.0;

  std::vector<MetricsRecord> rows;
  rows.reserve(files.size() + 1);
  std::vector<Image> montage_panels;

  for (size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const auto t0 = std::chrono::steady_clock::now();
    Image recon;
    switch (pipeline) {
      case EvalPipeline::Fbp: recon = tomo::fbp(s.r_sv, cfg.image_size); break;
      case EvalPipeline::InterpFbp:
        recon = tomo::fbp(sino::crop_views(s.r_in, cfg.full_views), cfg.image_size);
        break;
      case EvalPipeline::SartTv: recon = tomo::sart_tv(s.r_sv, cfg.image_size); break;
      case EvalPipeline::Stage1Fbp: recon = stage1_reconstruct(s, cfg, *rb); break;
      case EvalPipeline::FbpStage2:
        recon = refine_image(tomo::fbp(sino::crop_views(s.r_in, cfg.full_views), cfg.image_size),
                             cfg, *ib);
        break;
      default: recon = refine_image(stage1_reconstruct(s, cfg, *rb), cfg, *ib); break;
    }
    const auto t1 = std::chrono::steady_clock::now();

    MetricsRecord r;
    r.sample = sample_id(files[i]);
    r.pipeline = pipeline_name(pipeline);
    r.views = cfg.sparse_views;
    r.psnr = objectives::psnr(recon, s.phantom, range, true);
    r.ssim = objectives::ssim(recon, s.phantom, range);
    r.seconds = std::chrono::duration<double>(t1 - t0).count();
    rows.push_back(r);

    if (static_cast<int>(montage_panels.size() / 2) < opt.montage_count) {
      montage_panels.push_back(s.phantom);
      montage_panels.push_back(recon);
    }
  }

  MetricsRecord mean;
  mean.sample = "mean";
  mean.pipeline = pipeline_name(pipeline);
  mean.views = cfg.sparse_views;
  for (const MetricsRecord& r : rows) {
    mean.psnr += r.psnr;
    mean.ssim += r.ssim;
    mean.seconds += r.seconds;
  }
  const double n = static_cast<double>(rows.size());
  mean.psnr /= n;
  mean.ssim /= n;
  mean.seconds /= n;
  rows.push_back(mean);

  write_csv(out_csv, rows, true);
  write_csv(out_csv + ".timings.csv", rows, false);

  if (!montage_panels.empty()) {
    const int k = static_cast<int>(montage_panels.size() / 2);
    const int nn = cfg.image_size;
    Image grid = Image::zeros(k * nn, 2 * nn);
    for (int p = 0; p < k; ++p)
      for (int half = 0; half < 2; ++half) {
        const Image& src = montage_panels[static_cast<size_t>(2 * p + half)];
        for (int r = 0; r < nn; ++r)
          for (int c = 0; c < nn; ++c) grid.at(p * nn + r, half * nn + c) = src.at(r, c);
      }
    std::string stem = out_csv;
    const size_t dot = stem.rfind(".csv");
    if (dot != std::string::npos && dot == stem.size() - 4) stem = stem.substr(0, dot);
    save_pgm(stem + "_montage.pgm", grid, lo, hi);
  }
  return rows;
}

}  // namespace ctsparse::train
