#include "ctsparse/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>

#include "ctsparse/ad/adam.hpp"
#include "ctsparse/core/tensor_file.hpp"
#include "ctsparse/objectives/losses.hpp"
#include "ctsparse/objectives/metrics.hpp"
#include "ctsparse/sino/pipeline.hpp"
#include "ctsparse/tomo/fbp.hpp"
#include "ctsparse/train/fbp_bridge.hpp"

namespace ctsparse::train {

namespace {

namespace fs = std::filesystem;
using F = float;
using FT = ad::Tensor<F>;

constexpr uint64_t kInitG = 0x67656eu;  // distinct init/shuffle streams
constexpr uint64_t kInitD = 0x646973u;
constexpr uint64_t kShuffle = 0x736875u;

int stage_index(Stage s) { return s == Stage::Radon ? 0 : s == Stage::Image ? 1 : 2; }

// --- checkpoint plumbing ---------------------------------------------------

void put_hash(TensorFile& tf, uint64_t h) {
  double d;
  std::memcpy(&d, &h, sizeof d);  // payload round-trips bit-exactly
  tf.add_f64("config_hash", {1}, {d});
}

uint64_t get_hash(const TensorFile& tf) {
  const TensorEntry& e = tf.get("config_hash");
  if (e.dtype != DType::F64 || e.f64.size() != 1)
    throw FormatError("checkpoint: malformed config_hash");
  uint64_t h;
  std::memcpy(&h, e.f64.data(), sizeof h);
  return h;
}

TensorFile open_ckpt(const std::string& path, uint64_t expect_hash) {
  TensorFile tf = TensorFile::load(path);
  if (get_hash(tf) != expect_hash)
    throw FormatError("checkpoint: " + path + " was written under a different configuration");
  return tf;
}

struct StageNets {
  std::optional<cagan::Generator<F>> gr, gi;
  std::optional<cagan::Discriminator<F>> dr, di;
  std::optional<ad::Adam<F>> ogr, odr, ogi, odi;
  Normalization norm_r, norm_i;
  bool has_image = false;
};

void save_ckpt(const std::string& path, uint64_t hash, Stage stage, int epochs_done,
               StageNets& n) {
  TensorFile tf;
  tf.add_scalar("format", 1.0);
  put_hash(tf, hash);
  tf.add_scalar("stage", stage_index(stage));
  tf.add_scalar("epochs_done", epochs_done);
  tf.add_scalar("norm_r_shift", n.norm_r.shift);
  tf.add_scalar("norm_r_scale", n.norm_r.scale);
  if (n.has_image) {
    tf.add_scalar("norm_i_shift", n.norm_i.shift);
    tf.add_scalar("norm_i_scale", n.norm_i.scale);
  }
  if (n.gr) n.gr->params().save(tf, "gr.");
  if (n.ogr) n.ogr->save(tf, "ogr.");
  if (n.dr) n.dr->params().save(tf, "dr.");
  if (n.odr) n.odr->save(tf, "odr.");
  if (n.gi) n.gi->params().save(tf, "gi.");
  if (n.ogi) n.ogi->save(tf, "ogi.");
  if (n.di) n.di->params().save(tf, "di.");
  if (n.odi) n.odi->save(tf, "odi.");
  tf.save(path);
}

// --- data preparation ------------------------------------------------------

struct PairData {
  int64_t h = 0, w = 0;
  std::vector<std::vector<F>> x, y;
};

struct ValRef {
  bool image_domain = false;
  int views = 0, det = 0;  // radon-domain crop
  int n = 0;               // image size
  std::vector<std::vector<double>> ref;
  double range = 1.0;
};

Normalization span_norm(double lo, double hi) {
  Normalization n;
  n.shift = lo;
  n.scale = hi > lo ? hi - lo : 1.0;
  return n;
}

Normalization radon_norm(const std::vector<Sample>& train) {
  double lo = train[0].r_gt.samples[0], hi = lo;
  for (const Sample& s : train)
    for (double v : s.r_gt.samples) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  return span_norm(lo, hi);
}

Normalization image_norm(const std::vector<Sample>& train) {
  double lo = train[0].phantom.pixels[0], hi = lo;
  for (const Sample& s : train)
    for (double v : s.phantom.pixels) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  return span_norm(lo, hi);
}

std::vector<F> to_model(const std::vector<double>& v, const Normalization& n) {
  std::vector<F> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = normalize(v[i], n);
  return out;
}

PairData radon_pairs(const std::vector<Sample>& set, const RunConfig& cfg,
                     const Normalization& nr) {
  PairData d;
  d.h = cfg.padded_views;
  d.w = cfg.image_size;
  d.x.reserve(set.size());
  d.y.reserve(set.size());
  for (const Sample& s : set) {
    d.x.push_back(to_model(s.r_in.samples, nr));
    d.y.push_back(to_model(sino::pad_views(s.r_gt, cfg.padded_views).samples, nr));
  }
  return d;
}

FT single(const std::vector<F>& v, int64_t h, int64_t w) {
  return FT::from({1, 1, h, w}, std::vector<F>(v));
}

PairData image_pairs(const std::vector<Sample>& set, const RunConfig& cfg, GeneratorBundle& rb,
                     const Normalization& ni) {
  PairData d;
  d.h = cfg.image_size;
  d.w = cfg.image_size;
  d.x.reserve(set.size());
  d.y.reserve(set.size());
  for (const Sample& s : set) {
    d.x.push_back(to_model(stage1_reconstruct(s, cfg, rb).pixels, ni));
    d.y.push_back(to_model(s.phantom.pixels, ni));
  }
  return d;
}

ValRef radon_ref(const std::vector<Sample>& set, const RunConfig& cfg) {
  ValRef r;
  r.views = cfg.full_views;
  r.det = cfg.image_size;
  double lo = set[0].r_gt.samples[0], hi = lo;
  for (const Sample& s : set) {
    r.ref.push_back(s.r_gt.samples);
    for (double v : s.r_gt.samples) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  r.range = hi > lo ? hi - lo : 1.0;
  return r;
}

ValRef image_ref(const std::vector<Sample>& set, const RunConfig& cfg) {
  ValRef r;
  r.image_domain = true;
  r.n = cfg.image_size;
  double lo = set[0].phantom.pixels[0], hi = lo;
  for (const Sample& s : set) {
    r.ref.push_back(s.phantom.pixels);
    for (double v : s.phantom.pixels) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  r.range = hi > lo ? hi - lo : 1.0;
  return r;
}

// --- loops -----------------------------------------------------------------

std::vector<int> epoch_order(size_t n, uint64_t seed, Stage stage, int epoch) {
  std::vector<int> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
  Rng rng(derive_seed(seed, kShuffle + static_cast<uint64_t>(stage_index(stage)),
                      static_cast<uint64_t>(epoch)));
  for (size_t i = n; i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.next_u64() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

FT gather_batch(const PairData& d, const std::vector<std::vector<F>>& rows,
                const std::vector<int>& order, size_t off, size_t bsz) {
  std::vector<F> buf(bsz * static_cast<size_t>(d.h) * d.w);
  const size_t stride = static_cast<size_t>(d.h) * d.w;
  for (size_t b = 0; b < bsz; ++b)
    std::copy(rows[order[off + b]].begin(), rows[order[off + b]].end(),
              buf.begin() + b * stride);
  return FT::from({static_cast<int64_t>(bsz), 1, d.h, d.w}, std::move(buf));
}

FT detach(const FT& t) { return FT::from(t.dims(), std::vector<F>(t.values())); }

struct BatchLoss {
  double gen = 0.0;
  double disc = 0.0;
  bool finite = true;
};

BatchLoss gan_step(cagan::Generator<F>& g, cagan::Discriminator<F>* d, ad::Adam<F>& og,
                   ad::Adam<F>* od, double lr, const FT& x, const FT& y,
                   const objectives::LossWeights& w) {
  BatchLoss out;
  FT fake = g.forward(x, true);
  FT d_fake;
  if (d) d_fake = d->forward(fake, true);
  auto loss = objectives::generator_loss(fake, y, d_fake, w, F(1));
  out.gen = loss.item();
  if (!std::isfinite(out.gen)) {
    out.finite = false;
    return out;
  }
  ad::backward(loss);
  og.step(lr);
  if (d) {
    d->params().zero_grads();  // drop the adversarial-term gradients
    auto d_real = d->forward(y, true);
    auto d_f = d->forward(detach(fake), true);
    auto dl = objectives::discriminator_loss(d_real, d_f);
    out.disc = dl.item();
    if (!std::isfinite(out.disc)) {
      out.finite = false;
      return out;
    }
    ad::backward(dl);
    od->step(lr);
  }
  return out;
}

double validate_paired(cagan::Generator<F>& g, const PairData& va, const ValRef& ref,
                       const Normalization& norm) {
  ad::NoGradGuard ng;
  double acc = 0.0;
  for (size_t i = 0; i < va.x.size(); ++i) {
    FT y = g.forward(single(va.x[i], va.h, va.w), false);
    if (ref.image_domain) {
      Image im = Image::zeros(ref.n, ref.n);
      for (size_t j = 0; j < im.pixels.size(); ++j)
        im.pixels[j] = denormalize(y.values()[j], norm);
      Image gt = Image::zeros(ref.n, ref.n);
      gt.pixels = ref.ref[i];
      acc += objectives::psnr(im, gt, ref.range, true);
    } else {
      const size_t count = static_cast<size_t>(ref.views) * ref.det;
      std::vector<double> pred(count);
      for (size_t j = 0; j < count; ++j) pred[j] = denormalize(y.values()[j], norm);
      acc += objectives::psnr(pred, ref.ref[i], ref.range);
    }
  }
  return acc / static_cast<double>(va.x.size());
}

void append_curve(const std::string& path, Stage stage, int epoch, double g, double d,
                  double vp) {
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw IoError("trainer: cannot write " + path);
  if (fresh) out << "stage,epoch,gen_loss,disc_loss,val_psnr\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s,%d,%.9g,%.9g,%.9g\n", stage_name(stage), epoch, g, d, vp);
  out << buf;
}

int find_resume_epoch(const std::string& run_dir, Stage stage, int max_epochs) {
  for (int e = max_epochs; e >= 1; --e)
    if (fs::exists(checkpoint_path(run_dir, stage, e))) return e;
  return 0;
}

GeneratorBundle load_generator(const RunConfig& cfg, const std::string& path,
                               const char* gp, const char* ns, const char* nc,
                               const char* what) {
  TensorFile tf = open_ckpt(path, config_hash(cfg));
  if (!tf.has(std::string(gp) + "stem.c.w"))
    throw FormatError("checkpoint: " + path + " holds no " + what);
  GeneratorBundle b{cagan::Generator<F>(cfg.net), {}};
  b.gen.init(0);
  b.gen.params().load(tf, gp);
  b.norm.shift = tf.scalar(ns);
  b.norm.scale = tf.scalar(nc);
  return b;
}

}  // namespace

Stage parse_stage(const std::string& name) {
  if (name == "radon") return Stage::Radon;
  if (name == "image") return Stage::Image;
  if (name == "end2end") return Stage::End2End;
  throw UsageError("stage: expected radon, image or end2end, got '" + name + "'");
}

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::Radon: return "radon";
    case Stage::Image: return "image";
    default: return "end2end";
  }
}

const StageSchedule& stage_schedule(const RunConfig& cfg, Stage stage) {
  switch (stage) {
    case Stage::Radon: return cfg.radon;
    case Stage::Image: return cfg.image;
    default: return cfg.end2end;
  }
}

double stage_lr(const StageSchedule& s, int epoch) {
  return epoch < s.switch_epoch ? s.lr : s.lr_late;
}

std::string checkpoint_path(const std::string& run_dir, Stage stage, int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "/%s_ep%03d.tnsr", stage_name(stage), epoch);
  return run_dir + buf;
}

std::string final_checkpoint_path(const std::string& run_dir, Stage stage) {
  return run_dir + "/" + stage_name(stage) + "_final.tnsr";
}

GeneratorBundle load_radon_generator(const RunConfig& cfg, const std::string& ckpt_path) {
  return load_generator(cfg, ckpt_path, "gr.", "norm_r_shift", "norm_r_scale",
                        "completion network");
}

GeneratorBundle load_image_generator(const RunConfig& cfg, const std::string& ckpt_path) {
  return load_generator(cfg, ckpt_path, "gi.", "norm_i_shift", "norm_i_scale",
                        "refinement network");
}

Image stage1_reconstruct(const Sample& s, const RunConfig& cfg, GeneratorBundle& radon) {
  ad::NoGradGuard ng;
  FT x = single(to_model(s.r_in.samples, radon.norm), cfg.padded_views, cfg.image_size);
  FT y = radon.gen.forward(x, false);
  Sinogram shat = s.r_in;
  for (size_t i = 0; i < shat.samples.size(); ++i)
    shat.samples[i] = denormalize(y.values()[i], radon.norm);
  return tomo::fbp(sino::crop_views(shat, cfg.full_views), cfg.image_size);
}

Image refine_image(const Image& im, const RunConfig& cfg, GeneratorBundle& image) {
  ad::NoGradGuard ng;
  FT x = single(to_model(im.pixels, image.norm), cfg.image_size, cfg.image_size);
  FT y = image.gen.forward(x, false);
  Image out = Image::zeros(cfg.image_size, cfg.image_size);
  for (size_t i = 0; i < out.pixels.size(); ++i)
    out.pixels[i] = denormalize(y.values()[i], image.norm);
  return out;
}

TrainResult train_stage(const RunConfig& cfg, Stage stage, const std::string& data_dir,
                        const std::string& run_dir, bool resume, int epoch_limit) {
  cfg.validate();
  fs::create_directories(run_dir);
  const uint64_t hash = config_hash(cfg);
  const StageSchedule& sched = stage_schedule(cfg, stage);
  const DatasetInfo info = load_dataset_info(data_dir);
  check_data_compat(cfg, info.cfg);

  std::vector<Sample> tr_samples, va_samples;
  for (const auto& f : split_files(info, "train")) tr_samples.push_back(load_sample(f));
  for (const auto& f : split_files(info, "val")) va_samples.push_back(load_sample(f));

  StageNets nets;
  nets.norm_r = radon_norm(tr_samples);

  // stage-specific data and networks
  PairData tr, va;
  ValRef ref;
  std::vector<std::vector<F>> e2e_yi_train;  // image-domain targets for end2end
  const auto full_angles = uniform_angles(cfg.full_views);

  const uint64_t gseed = derive_seed(cfg.seed, kInitG, static_cast<uint64_t>(stage_index(stage)));
  const uint64_t dseed = derive_seed(cfg.seed, kInitD, static_cast<uint64_t>(stage_index(stage)));

  if (stage == Stage::Radon) {
    tr = radon_pairs(tr_samples, cfg, nets.norm_r);
    va = radon_pairs(va_samples, cfg, nets.norm_r);
    ref = radon_ref(va_samples, cfg);
    nets.gr.emplace(cfg.net);
    nets.gr->init(gseed);
    nets.ogr.emplace(nets.gr->params());
    if (cfg.discriminator) {
      nets.dr.emplace(cfg.net);
      nets.dr->init(dseed);
      nets.odr.emplace(nets.dr->params());
    }
  } else if (stage == Stage::Image) {
    GeneratorBundle rb =
        load_radon_generator(cfg, final_checkpoint_path(run_dir, Stage::Radon));
    nets.norm_r = rb.norm;
    nets.norm_i = image_norm(tr_samples);
    nets.has_image = true;
    tr = image_pairs(tr_samples, cfg, rb, nets.norm_i);
    va = image_pairs(va_samples, cfg, rb, nets.norm_i);
    ref = image_ref(va_samples, cfg);
    nets.gi.emplace(cfg.net);
    nets.gi->init(gseed);
    nets.ogi.emplace(nets.gi->params());
    if (cfg.discriminator) {
      nets.di.emplace(cfg.net);
      nets.di->init(dseed);
      nets.odi.emplace(nets.di->params());
    }
  } else {
    GeneratorBundle rb =
        load_radon_generator(cfg, final_checkpoint_path(run_dir, Stage::Radon));
    GeneratorBundle ib =
        load_image_generator(cfg, final_checkpoint_path(run_dir, Stage::Image));
    nets.norm_r = rb.norm;
    nets.norm_i = ib.norm;
    nets.has_image = true;
    nets.gr = std::move(rb.gen);
    nets.gi = std::move(ib.gen);
    nets.ogr.emplace(nets.gr->params());  // fine-tuning restarts the moments
    nets.ogi.emplace(nets.gi->params());
    if (cfg.discriminator) {
      TensorFile rtf = open_ckpt(final_checkpoint_path(run_dir, Stage::Radon), hash);
      TensorFile itf = open_ckpt(final_checkpoint_path(run_dir, Stage::Image), hash);
      if (!rtf.has("dr.stem.c.w") || !itf.has("di.stem.c.w"))
        throw FormatError("checkpoint: earlier stages were trained without a discriminator");
      nets.dr.emplace(cfg.net);
      nets.dr->init(dseed);
      nets.dr->params().load(rtf, "dr.");
      nets.odr.emplace(nets.dr->params());
      nets.di.emplace(cfg.net);
      nets.di->init(derive_seed(cfg.seed, kInitD, 99));
      nets.di->params().load(itf, "di.");
      nets.odi.emplace(nets.di->params());
    }
    tr = radon_pairs(tr_samples, cfg, nets.norm_r);
    va = radon_pairs(va_samples, cfg, nets.norm_r);
    for (const Sample& s : tr_samples)
      e2e_yi_train.push_back(to_model(s.phantom.pixels, nets.norm_i));
    ref = image_ref(va_samples, cfg);
  }

  // resume
  int done = 0;
  if (resume) {
    done = find_resume_epoch(run_dir, stage, sched.epochs);
    if (done > 0) {
      TensorFile tf = open_ckpt(checkpoint_path(run_dir, stage, done), hash);
      if (nets.gr) nets.gr->params().load(tf, "gr.");
      if (nets.ogr) nets.ogr->load(tf, "ogr.");
      if (nets.dr) {
        nets.dr->params().load(tf, "dr.");
        nets.odr->load(tf, "odr.");
      }
      if (nets.gi) nets.gi->params().load(tf, "gi.");
      if (nets.ogi) nets.ogi->load(tf, "ogi.");
      if (nets.di) {
        nets.di->params().load(tf, "di.");
        nets.odi->load(tf, "odi.");
      }
      nets.norm_r.shift = tf.scalar("norm_r_shift");
      nets.norm_r.scale = tf.scalar("norm_r_scale");
      if (nets.has_image) {
        nets.norm_i.shift = tf.scalar("norm_i_shift");
        nets.norm_i.scale = tf.scalar("norm_i_scale");
      }
    }
  }

  int end_epoch = sched.epochs;
  if (epoch_limit > 0) end_epoch = std::min(end_epoch, done + epoch_limit);

  const auto run_validation = [&]() {
    if (stage == Stage::Radon) return validate_paired(*nets.gr, va, ref, nets.norm_r);
    if (stage == Stage::Image) return validate_paired(*nets.gi, va, ref, nets.norm_i);
    ad::NoGradGuard ng;
    double acc = 0.0;
    for (size_t i = 0; i < va.x.size(); ++i) {
      FT x = single(va.x[i], va.h, va.w);
      FT yr = nets.gr->forward(x, false);
      auto sino = ad::axpb(yr, static_cast<F>(nets.norm_r.scale),
                           static_cast<F>(nets.norm_r.shift));
      auto img = fbp_bridge(ad::slice_axis(sino, 2, 0, cfg.full_views), full_angles);
      auto xi = ad::axpb(img, static_cast<F>(1.0 / nets.norm_i.scale),
                         static_cast<F>(-nets.norm_i.shift / nets.norm_i.scale));
      FT yi = nets.gi->forward(xi, false);
      Image im = Image::zeros(ref.n, ref.n);
      for (size_t j = 0; j < im.pixels.size(); ++j)
        im.pixels[j] = denormalize(yi.values()[j], nets.norm_i);
      Image gt = Image::zeros(ref.n, ref.n);
      gt.pixels = ref.ref[i];
      acc += objectives::psnr(im, gt, ref.range, true);
    }
    return acc / static_cast<double>(va.x.size());
  };

  TrainResult res;
  double last_vp = 0.0;
  const size_t bsz = static_cast<size_t>(cfg.batch_size);

  for (int e = done; e < end_epoch; ++e) {
    const double lr = stage_lr(sched, e);
    const auto order = epoch_order(tr.x.size(), cfg.seed, stage, e);
    double gen_sum = 0.0, disc_sum = 0.0;
    int batches = 0;

    for (size_t off = 0; off < order.size(); off += bsz) {
      const size_t take = std::min(bsz, order.size() - off);
      const FT x = gather_batch(tr, tr.x, order, off, take);
      const FT y = gather_batch(tr, tr.y, order, off, take);
      BatchLoss bl;

      if (stage != Stage::End2End) {
        auto& g = stage == Stage::Radon ? *nets.gr : *nets.gi;
        auto* d = stage == Stage::Radon ? (nets.dr ? &*nets.dr : nullptr)
                                        : (nets.di ? &*nets.di : nullptr);
        auto& og = stage == Stage::Radon ? *nets.ogr : *nets.ogi;
        auto* od = stage == Stage::Radon ? (nets.odr ? &*nets.odr : nullptr)
                                         : (nets.odi ? &*nets.odi : nullptr);
        bl = gan_step(g, d, og, od, lr, x, y, cfg.weights);
      } else {
        // joint pass: both objectives, one graph through the reconstruction
        std::vector<F> ybuf(take * static_cast<size_t>(cfg.image_size) * cfg.image_size);
        const size_t istride = static_cast<size_t>(cfg.image_size) * cfg.image_size;
        for (size_t b = 0; b < take; ++b)
          std::copy(e2e_yi_train[order[off + b]].begin(), e2e_yi_train[order[off + b]].end(),
                    ybuf.begin() + b * istride);
        const FT yi_target = FT::from(
            {static_cast<int64_t>(take), 1, cfg.image_size, cfg.image_size}, std::move(ybuf));

        FT yr = nets.gr->forward(x, true);
        FT dr_fake;
        if (nets.dr) dr_fake = nets.dr->forward(yr, true);
        auto loss_r = objectives::generator_loss(yr, y, dr_fake, cfg.weights, F(1));
        auto sino = ad::axpb(yr, static_cast<F>(nets.norm_r.scale),
                             static_cast<F>(nets.norm_r.shift));
        auto img = fbp_bridge(ad::slice_axis(sino, 2, 0, cfg.full_views), full_angles);
        auto xi = ad::axpb(img, static_cast<F>(1.0 / nets.norm_i.scale),
                           static_cast<F>(-nets.norm_i.shift / nets.norm_i.scale));
        FT yi = nets.gi->forward(xi, true);
        FT di_fake;
        if (nets.di) di_fake = nets.di->forward(yi, true);
        auto loss_i = objectives::generator_loss(yi, yi_target, di_fake, cfg.weights, F(1));
        auto total = ad::add(loss_r, loss_i);
        bl.gen = total.item();
        bl.finite = std::isfinite(bl.gen);
        if (bl.finite) {
          ad::backward(total);
          nets.ogr->step(lr);
          nets.ogi->step(lr);
          if (nets.dr) {
            nets.dr->params().zero_grads();
            nets.di->params().zero_grads();
            auto d_real_r = nets.dr->forward(y, true);
            auto d_fake_r = nets.dr->forward(detach(yr), true);
            auto dl_r = objectives::discriminator_loss(d_real_r, d_fake_r);
            auto d_real_i = nets.di->forward(yi_target, true);
            auto d_fake_i = nets.di->forward(detach(yi), true);
            auto dl_i = objectives::discriminator_loss(d_real_i, d_fake_i);
            bl.disc = 0.5 * (dl_r.item() + dl_i.item());
            bl.finite = std::isfinite(bl.disc);
            if (bl.finite) {
              ad::backward(dl_r);
              nets.odr->step(lr);
              ad::backward(dl_i);
              nets.odi->step(lr);
            }
          }
        }
      }

      if (!bl.finite) {
        save_ckpt(run_dir + "/" + stage_name(stage) + "_diverged.tnsr", hash, stage, e, nets);
        throw NumericalError("trainer: non-finite loss at " + std::string(stage_name(stage)) +
                             " epoch " + std::to_string(e + 1) + ", batch " +
                             std::to_string(batches + 1));
      }
      gen_sum += bl.gen;
      disc_sum += bl.disc;
      ++batches;
    }

    last_vp = run_validation();
    append_curve(run_dir + "/training_curve.csv", stage, e + 1, gen_sum / batches,
                 disc_sum / batches, last_vp);
    save_ckpt(checkpoint_path(run_dir, stage, e + 1), hash, stage, e + 1, nets);
    ++res.epochs_run;
  }

  const int reached = std::max(done, end_epoch);
  if (reached >= sched.epochs) {
    save_ckpt(final_checkpoint_path(run_dir, stage), hash, stage, sched.epochs, nets);
    res.checkpoint = final_checkpoint_path(run_dir, stage);
    if (res.epochs_run == 0) last_vp = run_validation();
  } else {
    res.checkpoint = checkpoint_path(run_dir, stage, reached);
  }
  res.final_val_psnr = last_vp;
  return res;
}

}  // namespace ctsparse::train
