#include "ctsparse/core/tensor_file.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace ctsparse {
namespace {

constexpr char kMagic[4] = {'T', 'N', 'S', 'R'};
constexpr uint8_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("container: truncated file");
  return v;
}

}  // namespace

void TensorFile::check_new(const std::string& name, const std::vector<int64_t>& dims,
                           size_t count) const {
  if (name.empty()) throw FormatError("container: empty entry name");
  if (has(name)) throw FormatError("container: duplicate entry name '" + name + "'");
  int64_t n = 1;
  for (int64_t d : dims) {
    if (d <= 0) throw ShapeError("container: non-positive dimension in '" + name + "'");
    n *= d;
  }
  if (n != static_cast<int64_t>(count))
    throw ShapeError("container: dims do not match payload size in '" + name + "'");
}

void TensorFile::add_f32(const std::string& name, std::vector<int64_t> dims,
                         std::vector<float> data) {
  check_new(name, dims, data.size());
  for (float v : data)
    if (!std::isfinite(v)) throw NumericalError("container: non-finite value in '" + name + "'");
  TensorEntry e;
  e.name = name;
  e.dims = std::move(dims);
  e.dtype = DType::F32;
  e.f32 = std::move(data);
  entries_.push_back(std::move(e));
}

void TensorFile::add_f64(const std::string& name, std::vector<int64_t> dims,
                         std::vector<double> data) {
  check_new(name, dims, data.size());
  for (double v : data)
    if (!std::isfinite(v)) throw NumericalError("container: non-finite value in '" + name + "'");
  TensorEntry e;
  e.name = name;
  e.dims = std::move(dims);
  e.dtype = DType::F64;
  e.f64 = std::move(data);
  entries_.push_back(std::move(e));
}

bool TensorFile::has(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

const TensorEntry& TensorFile::get(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw FormatError("container: missing entry '" + name + "'");
}

double TensorFile::scalar(const std::string& name) const {
  const TensorEntry& e = get(name);
  if (e.numel() != 1) throw ShapeError("container: entry '" + name + "' is not a scalar");
  return e.dtype == DType::F64 ? e.f64[0] : static_cast<double>(e.f32[0]);
}

void TensorFile::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("container: cannot open for writing: " + path);

  out.write(kMagic, 4);
  put<uint8_t>(out, kVersion);
  put<uint32_t>(out, static_cast<uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    put<uint32_t>(out, static_cast<uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<uint8_t>(out, static_cast<uint8_t>(e.dims.size()));
    for (int64_t d : e.dims) put<uint64_t>(out, static_cast<uint64_t>(d));
    put<uint8_t>(out, static_cast<uint8_t>(e.dtype));
    if (e.dtype == DType::F32)
      out.write(reinterpret_cast<const char*>(e.f32.data()),
                static_cast<std::streamsize>(e.f32.size() * sizeof(float)));
    else
      out.write(reinterpret_cast<const char*>(e.f64.data()),
                static_cast<std::streamsize>(e.f64.size() * sizeof(double)));
  }
  if (!out) throw IoError("container: write failed: " + path);
}

TensorFile TensorFile::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("container: cannot open: " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("container: bad magic in " + path);
  const auto version = take<uint8_t>(in);
  if (version != kVersion) throw FormatError("container: unsupported version");

  TensorFile tf;
  const auto count = take<uint32_t>(in);
  for (uint32_t i = 0; i < count; ++i) {
    TensorEntry e;
    const auto name_len = take<uint32_t>(in);
    e.name.resize(name_len);
    in.read(e.name.data(), name_len);
    if (!in) throw FormatError("container: truncated entry name");
    if (tf.has(e.name)) throw FormatError("container: duplicate entry name '" + e.name + "'");

    const auto rank = take<uint8_t>(in);
    e.dims.resize(rank);
    int64_t numel = 1;
    for (auto& d : e.dims) {
      d = static_cast<int64_t>(take<uint64_t>(in));
      if (d <= 0) throw FormatError("container: non-positive dimension");
      numel *= d;
    }
    const auto tag = take<uint8_t>(in);
    if (tag > 1) throw FormatError("container: unknown dtype tag");
    e.dtype = static_cast<DType>(tag);
    if (e.dtype == DType::F32) {
      e.f32.resize(static_cast<size_t>(numel));
      in.read(reinterpret_cast<char*>(e.f32.data()),
              static_cast<std::streamsize>(e.f32.size() * sizeof(float)));
    } else {
      e.f64.resize(static_cast<size_t>(numel));
      in.read(reinterpret_cast<char*>(e.f64.data()),
              static_cast<std::streamsize>(e.f64.size() * sizeof(double)));
    }
    if (!in) throw FormatError("container: truncated payload in '" + e.name + "'");
    tf.entries_.push_back(std::move(e));
  }
  return tf;
}

}  // namespace ctsparse
