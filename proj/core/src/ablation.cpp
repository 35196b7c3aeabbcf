#include "ctsparse/train/ablation.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ctsparse/cagan/info.hpp"
#include "ctsparse/train/evaluate.hpp"
#include "ctsparse/train/trainer.hpp"

namespace ctsparse::train {

std::vector<AblationVariant> default_ablation_grid(const RunConfig& base) {
  std::vector<AblationVariant> out;
  auto push = [&](const char* name, auto&& tweak) {
    AblationVariant v{name, base};
    tweak(v.cfg.net.block);
    out.push_back(std::move(v));
  };
  push("plain", [](cagan::BlockConfig& b) { b.attention = cagan::AttentionKind::None; });
  push("ca-inside", [](cagan::BlockConfig& b) {
    b.attention = cagan::AttentionKind::Coord;
    b.place = cagan::AttentionPlace::Inside;
  });
  push("ca-outside", [](cagan::BlockConfig& b) {
    b.attention = cagan::AttentionKind::Coord;
    b.place = cagan::AttentionPlace::Outside;
  });
  push("se-outside", [](cagan::BlockConfig& b) {
    b.attention = cagan::AttentionKind::SqueezeExcite;
    b.place = cagan::AttentionPlace::Outside;
  });
  push("maxpool", [](cagan::BlockConfig& b) { b.downsample = cagan::DownsampleKind::Maxpool; });
  push("vanilla", [](cagan::BlockConfig& b) { b.conv = cagan::ConvKind::Vanilla; });
  return out;
}

std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& variants,
                                      const std::string& data_dir,
                                      const std::string& run_root,
                                      const std::string& out_csv) {
  std::filesystem::create_directories(run_root);
  std::vector<AblationRow> rows;
  for (const AblationVariant& v : variants) {
    v.cfg.validate();
    const std::string run_dir = run_root + "/" + v.name;
    train_stage(v.cfg, Stage::Radon, data_dir, run_dir);

    EvalOptions opt;
    opt.radon_ckpt = final_checkpoint_path(run_dir, Stage::Radon);
    opt.montage_count = 0;
    const auto metrics = evaluate_pipeline(v.cfg, EvalPipeline::Stage1Fbp, data_dir, "val", opt,
                                           run_dir + "/val_metrics.csv");

    AblationRow row;
    row.name = v.name;
    row.params = cagan::generator_param_count(v.cfg.net);
    row.macs = cagan::generator_mac_count(v.cfg.net, v.cfg.padded_views, v.cfg.image_size);
    row.val_psnr = metrics.back().psnr;  // mean row
    row.val_ssim = metrics.back().ssim;
    rows.push_back(row);
  }

  std::ofstream out(out_csv, std::ios::binary);
  if (!out) throw IoError("ablation: cannot write " + out_csv);
  out << "variant,params,macs,val_psnr,val_ssim\n";
  char buf[160];
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%lld,%lld,%.6f,%.6f\n", r.name.c_str(),
                  static_cast<long long>(r.params), static_cast<long long>(r.macs), r.val_psnr,
                  r.val_ssim);
    out << buf;
  }
  if (!out) throw IoError("ablation: short write to " + out_csv);
  return rows;
}

}  // namespace ctsparse::train
