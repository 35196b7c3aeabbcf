#pragma once

#include <cmath>

#include "ctsparse/ad/params.hpp"

namespace ctsparse::ad {

// Adam with bias correction:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
// One step consumes and clears the gradients of every trainable parameter;
// a trainable parameter with no gradient buffer at all is a usage error
// (an allocated all-zero gradient is fine and leaves the parameter alone).
template <typename T>
class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit Adam(ParamStore<T>& params) : params_(&params) {
    for (const auto& e : params.entries()) {
      m_.emplace_back(e.trainable ? e.tensor.numel() : 0, T(0));
      v_.emplace_back(e.trainable ? e.tensor.numel() : 0, T(0));
    }
  }

  int64_t step_count() const { return t_; }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    auto& entries = params_->entries();
    for (size_t i = 0; i < entries.size(); ++i) {
      if (!entries[i].trainable) continue;
      Tensor<T>& p = entries[i].tensor;
      if (!p.has_grad())
        throw UsageError("adam: missing gradient for '" + entries[i].name + "'");
      auto& g = p.grad();
      auto& val = p.values();
      auto& m = m_[i];
      auto& v = v_[i];
      const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
      for (size_t j = 0; j < val.size(); ++j) {
        m[j] = b1 * m[j] + (T(1) - b1) * g[j];
        v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
        const double mhat = static_cast<double>(m[j]) / bc1;
        const double vhat = static_cast<double>(v[j]) / bc2;
        val[j] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps));
      }
      p.zero_grad();
    }
  }

  // Checkpoint state: per-parameter first/second moments plus the step count.
  void save(TensorFile& tf, const std::string& prefix) const {
    const auto& entries = params_->entries();
    for (size_t i = 0; i < entries.size(); ++i) {
      if (!entries[i].trainable) continue;
      const Shape& dims = entries[i].tensor.dims();
      if constexpr (std::is_same_v<T, float>) {
        tf.add_f32(prefix + entries[i].name + ".m", dims, m_[i]);
        tf.add_f32(prefix + entries[i].name + ".v", dims, v_[i]);
      } else {
        tf.add_f64(prefix + entries[i].name + ".m", dims, m_[i]);
        tf.add_f64(prefix + entries[i].name + ".v", dims, v_[i]);
      }
    }
    tf.add_scalar(prefix + "t", static_cast<double>(t_));
  }

  void load(const TensorFile& tf, const std::string& prefix) {
    const auto& entries = params_->entries();
    for (size_t i = 0; i < entries.size(); ++i) {
      if (!entries[i].trainable) continue;
      for (int which = 0; which < 2; ++which) {
        const TensorEntry& src =
            tf.get(prefix + entries[i].name + (which == 0 ? ".m" : ".v"));
        auto& dst = which == 0 ? m_[i] : v_[i];
        if (src.numel() != static_cast<int64_t>(dst.size()))
          throw ShapeError("adam: moment size mismatch for '" + entries[i].name + "'");
        if (src.dtype == DType::F32)
          for (size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(src.f32[j]);
        else
          for (size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(src.f64[j]);
      }
    }
    t_ = static_cast<int64_t>(tf.scalar(prefix + "t"));
  }

 private:
  ParamStore<T>* params_;
  std::vector<std::vector<T>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace ctsparse::ad
