#pragma once

#include <string>
#include <vector>

#include "ctsparse/ad/tensor.hpp"
#include "ctsparse/core/rng.hpp"
#include "ctsparse/core/tensor_file.hpp"

namespace ctsparse::ad {

// Ordered, named registry of the tensors a model owns. Layers keep Tensor
// handles (shared nodes), the optimizer and checkpoints walk the registry, so
// construction order defines both update order and file order.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
    bool trainable = true;
  };

  Tensor<T>& add(const std::string& name, Tensor<T> t, bool trainable = true) {
    for (const auto& e : entries_)
      if (e.name == name) throw UsageError("params: duplicate name '" + name + "'");
    t.set_requires_grad(trainable);
    entries_.push_back({name, std::move(t), trainable});
    return entries_.back().tensor;
  }

  // uniform Kaiming-style init on +-sqrt(1/fan_in)
  Tensor<T>& add_conv_weight(const std::string& name, Shape dims, int64_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<T> v(static_cast<size_t>(shape_numel(dims)));
    for (auto& e : v) e = static_cast<T>(rng.uniform(-bound, bound));
    return add(name, Tensor<T>::from(std::move(dims), std::move(v)));
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  Tensor<T>& get(const std::string& name) {
    for (auto& e : entries_)
      if (e.name == name) return e.tensor;
    throw UsageError("params: no parameter named '" + name + "'");
  }

  int64_t total_params(bool trainable_only = true) const {
    int64_t n = 0;
    for (const auto& e : entries_)
      if (!trainable_only || e.trainable) n += e.tensor.numel();
    return n;
  }

  void zero_grads() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  // Checkpoint serialisation: one f32/f64 entry per parameter under
  // `prefix + name`. Loading requires exact name and shape agreement.
  void save(TensorFile& tf, const std::string& prefix) const {
    for (const auto& e : entries_) {
      if constexpr (std::is_same_v<T, float>)
        tf.add_f32(prefix + e.name, e.tensor.dims(), e.tensor.values());
      else
        tf.add_f64(prefix + e.name, e.tensor.dims(), e.tensor.values());
    }
  }

  void load(const TensorFile& tf, const std::string& prefix) {
    for (auto& e : entries_) {
      const TensorEntry& src = tf.get(prefix + e.name);
      if (src.dims != e.tensor.dims())
        throw ShapeError("params: shape mismatch for '" + e.name + "'");
      auto& dst = e.tensor.values();
      if (src.dtype == DType::F32)
        for (size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src.f32[i]);
      else
        for (size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src.f64[i]);
    }
  }

 private:
  std::vector<Entry> entries_;
};

}  // namespace ctsparse::ad
