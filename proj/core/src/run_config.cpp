#include "ctsparse/train/run_config.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ctsparse/core/errors.hpp"

namespace ctsparse::train {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("config: bad number for '" + key + "': " + v);
  return x;
}

int parse_int(const std::string& key, const std::string& v) {
  const double x = parse_double(key, v);
  const int i = static_cast<int>(x);
  if (static_cast<double>(i) != x) throw ConfigError("config: '" + key + "' must be an integer");
  return i;
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("config: bad unsigned integer for '" + key + "': " + v);
  return static_cast<uint64_t>(x);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config: '" + key + "' must be true or false, got " + v);
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

const char* norm_name(cagan::NormKind k) {
  return k == cagan::NormKind::Group ? "group" : "batch";
}

const char* attention_name(cagan::AttentionKind k) {
  switch (k) {
    case cagan::AttentionKind::Coord: return "coord";
    case cagan::AttentionKind::SqueezeExcite: return "se";
    default: return "none";
  }
}

const char* place_name(cagan::AttentionPlace p) {
  return p == cagan::AttentionPlace::Inside ? "inside" : "outside";
}

const char* downsample_name(cagan::DownsampleKind d) {
  return d == cagan::DownsampleKind::StridedShuffle ? "shuffle" : "maxpool";
}

const char* conv_name(cagan::ConvKind c) {
  return c == cagan::ConvKind::Shuffle ? "shuffle" : "vanilla";
}

}  // namespace

void RunConfig::validate() const {
  if (train_count < 1 || val_count < 1 || test_count < 1)
    throw ConfigError("config: split counts must be positive");
  if (image_size < 16 || image_size % 16 != 0)
    throw ConfigError("config: image_size must be a positive multiple of 16");
  if (ellipse_count < 1) throw ConfigError("config: ellipse_count must be positive");
  if (full_views < 2) throw ConfigError("config: full_views must be at least 2");
  if (sparse_views < 2 || full_views % sparse_views != 0)
    throw ConfigError("config: sparse_views must divide full_views");
  if (padded_views < full_views || padded_views % 16 != 0)
    throw ConfigError("config: padded_views must be a multiple of 16, >= full_views");
  if (photons < 0.0) throw ConfigError("config: photons must be non-negative");
  if (target_attenuation <= 0.0)
    throw ConfigError("config: target_attenuation must be positive");
  net.validate();
  if (net.in_channels != 1 || net.out_channels != 1)
    throw ConfigError("config: restoration networks are single-channel");
  for (const StageSchedule* s : {&radon, &image, &end2end}) {
    if (s->epochs < 1) throw ConfigError("config: stage epochs must be positive");
    if (s->lr <= 0.0 || s->lr_late <= 0.0)
      throw ConfigError("config: learning rates must be positive");
    if (s->switch_epoch < 0 || s->switch_epoch > s->epochs)
      throw ConfigError("config: lr switch epoch outside the stage");
  }
  if (batch_size < 1) throw ConfigError("config: batch_size must be positive");
}

std::string serialize_run_config(const RunConfig& c) {
  std::ostringstream out;
  out << "train_count = " << c.train_count << "\n";
  out << "val_count = " << c.val_count << "\n";
  out << "test_count = " << c.test_count << "\n";
  out << "image_size = " << c.image_size << "\n";
  out << "ellipse_count = " << c.ellipse_count << "\n";
  out << "seed = " << c.seed << "\n";
  out << "full_views = " << c.full_views << "\n";
  out << "sparse_views = " << c.sparse_views << "\n";
  out << "padded_views = " << c.padded_views << "\n";
  out << "photons = " << fmt_double(c.photons) << "\n";
  out << "target_attenuation = " << fmt_double(c.target_attenuation) << "\n";
  out << "net_channels = " << c.net.stage_channels[0] << "," << c.net.stage_channels[1] << ","
      << c.net.stage_channels[2] << "," << c.net.stage_channels[3] << "\n";
  out << "net_bottleneck = " << c.net.bottleneck << "\n";
  out << "net_norm = " << norm_name(c.net.block.norm) << "\n";
  out << "net_gn_groups = " << c.net.block.gn_groups << "\n";
  out << "net_shuffle_groups = " << c.net.block.shuffle_groups << "\n";
  out << "net_attention = " << attention_name(c.net.block.attention) << "\n";
  out << "net_attention_place = " << place_name(c.net.block.place) << "\n";
  out << "net_ca_reduction = " << c.net.block.ca_reduction << "\n";
  out << "net_downsample = " << downsample_name(c.net.block.downsample) << "\n";
  out << "net_conv = " << conv_name(c.net.block.conv) << "\n";
  out << "loss_mse = " << fmt_double(c.weights.mse) << "\n";
  out << "loss_ssim = " << fmt_double(c.weights.ssim) << "\n";
  out << "loss_adversarial = " << fmt_double(c.weights.adversarial) << "\n";
  out << "loss_tv = " << fmt_double(c.weights.tv) << "\n";
  out << "discriminator = " << (c.discriminator ? "true" : "false") << "\n";
  out << "radon_epochs = " << c.radon.epochs << "\n";
  out << "radon_lr = " << fmt_double(c.radon.lr) << "\n";
  out << "radon_lr_late = " << fmt_double(c.radon.lr_late) << "\n";
  out << "radon_switch = " << c.radon.switch_epoch << "\n";
  out << "image_epochs = " << c.image.epochs << "\n";
  out << "image_lr = " << fmt_double(c.image.lr) << "\n";
  out << "image_lr_late = " << fmt_double(c.image.lr_late) << "\n";
  out << "image_switch = " << c.image.switch_epoch << "\n";
  out << "end2end_epochs = " << c.end2end.epochs << "\n";
  out << "end2end_lr = " << fmt_double(c.end2end.lr) << "\n";
  out << "end2end_lr_late = " << fmt_double(c.end2end.lr_late) << "\n";
  out << "end2end_switch = " << c.end2end.switch_epoch << "\n";
  out << "batch_size = " << c.batch_size << "\n";
  return out.str();
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " has no '='");
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ConfigError("config: line " + std::to_string(lineno) + " is missing a key or value");

    if (key == "train_count") c.train_count = parse_int(key, val);
    else if (key == "val_count") c.val_count = parse_int(key, val);
    else if (key == "test_count") c.test_count = parse_int(key, val);
    else if (key == "image_size") c.image_size = parse_int(key, val);
    else if (key == "ellipse_count") c.ellipse_count = parse_int(key, val);
    else if (key == "seed") c.seed = parse_u64(key, val);
    else if (key == "full_views") c.full_views = parse_int(key, val);
    else if (key == "sparse_views") c.sparse_views = parse_int(key, val);
    else if (key == "padded_views") c.padded_views = parse_int(key, val);
    else if (key == "photons") c.photons = parse_double(key, val);
    else if (key == "target_attenuation") c.target_attenuation = parse_double(key, val);
    else if (key == "net_channels") {
      std::vector<int> ch;
      std::istringstream cs(val);
      std::string part;
      while (std::getline(cs, part, ',')) ch.push_back(parse_int(key, trim(part)));
      if (ch.size() != 4) throw ConfigError("config: net_channels needs 4 entries");
      c.net.stage_channels = ch;
    } else if (key == "net_bottleneck") c.net.bottleneck = parse_int(key, val);
    else if (key == "net_norm") {
      if (val == "group") c.net.block.norm = cagan::NormKind::Group;
      else if (val == "batch") c.net.block.norm = cagan::NormKind::Batch;
      else throw ConfigError("config: net_norm must be group or batch");
    } else if (key == "net_gn_groups") c.net.block.gn_groups = parse_int(key, val);
    else if (key == "net_shuffle_groups") c.net.block.shuffle_groups = parse_int(key, val);
    else if (key == "net_attention") {
      if (val == "coord") c.net.block.attention = cagan::AttentionKind::Coord;
      else if (val == "se") c.net.block.attention = cagan::AttentionKind::SqueezeExcite;
      else if (val == "none") c.net.block.attention = cagan::AttentionKind::None;
      else throw ConfigError("config: net_attention must be coord, se or none");
    } else if (key == "net_attention_place") {
      if (val == "inside") c.net.block.place = cagan::AttentionPlace::Inside;
      else if (val == "outside") c.net.block.place = cagan::AttentionPlace::Outside;
      else throw ConfigError("config: net_attention_place must be inside or outside");
    } else if (key == "net_ca_reduction") c.net.block.ca_reduction = parse_int(key, val);
    else if (key == "net_downsample") {
      if (val == "shuffle") c.net.block.downsample = cagan::DownsampleKind::StridedShuffle;
      else if (val == "maxpool") c.net.block.downsample = cagan::DownsampleKind::Maxpool;
      else throw ConfigError("config: net_downsample must be shuffle or maxpool");
    } else if (key == "net_conv") {
      if (val == "shuffle") c.net.block.conv = cagan::ConvKind::Shuffle;
      else if (val == "vanilla") c.net.block.conv = cagan::ConvKind::Vanilla;
      else throw ConfigError("config: net_conv must be shuffle or vanilla");
    } else if (key == "loss_mse") c.weights.mse = parse_double(key, val);
    else if (key == "loss_ssim") c.weights.ssim = parse_double(key, val);
    else if (key == "loss_adversarial") c.weights.adversarial = parse_double(key, val);
    else if (key == "loss_tv") c.weights.tv = parse_double(key, val);
    else if (key == "discriminator") c.discriminator = parse_bool(key, val);
    else if (key == "radon_epochs") c.radon.epochs = parse_int(key, val);
    else if (key == "radon_lr") c.radon.lr = parse_double(key, val);
    else if (key == "radon_lr_late") c.radon.lr_late = parse_double(key, val);
    else if (key == "radon_switch") c.radon.switch_epoch = parse_int(key, val);
    else if (key == "image_epochs") c.image.epochs = parse_int(key, val);
    else if (key == "image_lr") c.image.lr = parse_double(key, val);
    else if (key == "image_lr_late") c.image.lr_late = parse_double(key, val);
    else if (key == "image_switch") c.image.switch_epoch = parse_int(key, val);
    else if (key == "end2end_epochs") c.end2end.epochs = parse_int(key, val);
    else if (key == "end2end_lr") c.end2end.lr = parse_double(key, val);
    else if (key == "end2end_lr_late") c.end2end.lr_late = parse_double(key, val);
    else if (key == "end2end_switch") c.end2end.switch_epoch = parse_int(key, val);
    else if (key == "batch_size") c.batch_size = parse_int(key, val);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("config: cannot write " + path);
  out << serialize_run_config(cfg);
  if (!out) throw IoError("config: short write to " + path);
}

uint64_t config_hash(const RunConfig& cfg) {
  const std::string s = serialize_run_config(cfg);
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace ctsparse::train
