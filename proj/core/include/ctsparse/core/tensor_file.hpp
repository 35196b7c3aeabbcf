#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctsparse/core/errors.hpp"

namespace ctsparse {

// Named-tensor container, used for sinogram/sample bundles and checkpoints.
//
// Layout (little-endian):
//   magic "TNSR" | u8 version=1 | u32 entry count
//   per entry: u32 name length | name bytes | u8 rank | u64 dims[rank]
//              | u8 dtype (0 = f32, 1 = f64) | raw payload
//
// Payload bytes survive a save/load round trip bit-exactly.
enum class DType : uint8_t { F32 = 0, F64 = 1 };

struct TensorEntry {
  std::string name;
  std::vector<int64_t> dims;
  DType dtype = DType::F64;
  std::vector<float> f32;
  std::vector<double> f64;

  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
  }
};

class TensorFile {
 public:
  void add_f32(const std::string& name, std::vector<int64_t> dims, std::vector<float> data);
  void add_f64(const std::string& name, std::vector<int64_t> dims, std::vector<double> data);
  void add_scalar(const std::string& name, double v) { add_f64(name, {1}, {v}); }

  bool has(const std::string& name) const;
  const TensorEntry& get(const std::string& name) const;
  double scalar(const std::string& name) const;
  const std::vector<TensorEntry>& entries() const { return entries_; }

  void save(const std::string& path) const;
  static TensorFile load(const std::string& path);

 private:
  void check_new(const std::string& name, const std::vector<int64_t>& dims, size_t count) const;
  std::vector<TensorEntry> entries_;
};

}  // namespace ctsparse
