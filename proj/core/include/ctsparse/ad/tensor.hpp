#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "ctsparse/core/errors.hpp"

namespace ctsparse::ad {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d <= 0) throw ShapeError("tensor: non-positive dimension");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

// Define-by-run graph node. Ops allocate the output node, point it at its
// parents and attach a closure that routes the output gradient to them.
// Closures receive the node itself, read node.grad and accumulate (+=) into
// parent grads, so fan-out sums up naturally over multiple consumers.
template <typename T>
struct Node {
  Shape dims;
  std::vector<T> values;
  std::vector<T> grad;  // empty until the backward sweep reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward_fn;  // empty on leaves

  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), T(0));
  }
};

// Records graph structure only while enabled; evaluation paths (validation,
// metrics, inference) run inside a NoGradGuard and build no graph.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape dims, bool requires_grad = false) {
    return filled(std::move(dims), T(0), requires_grad);
  }

  static Tensor filled(Shape dims, T value, bool requires_grad = false) {
    Tensor t;
    t.n_ = std::make_shared<Node<T>>();
    t.n_->values.assign(static_cast<size_t>(shape_numel(dims)), value);
    t.n_->dims = std::move(dims);
    t.n_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from(Shape dims, std::vector<T> values, bool requires_grad = false) {
    if (shape_numel(dims) != static_cast<int64_t>(values.size()))
      throw ShapeError("tensor: value count does not match shape " + shape_str(dims));
    Tensor t;
    t.n_ = std::make_shared<Node<T>>();
    t.n_->dims = std::move(dims);
    t.n_->values = std::move(values);
    t.n_->requires_grad = requires_grad;
    return t;
  }

  bool defined() const { return n_ != nullptr; }
  const Shape& dims() const { return n_->dims; }
  int64_t dim(size_t i) const { return n_->dims.at(i); }
  int64_t numel() const { return static_cast<int64_t>(n_->values.size()); }
  int rank() const { return static_cast<int>(n_->dims.size()); }

  std::vector<T>& values() { return n_->values; }
  const std::vector<T>& values() const { return n_->values; }
  T* data() { return n_->values.data(); }
  const T* data() const { return n_->values.data(); }

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool rq) { n_->requires_grad = rq; }

  bool has_grad() const { return !n_->grad.empty(); }
  std::vector<T>& grad() {
    n_->ensure_grad();
    return n_->grad;
  }
  const std::vector<T>& grad_view() const { return n_->grad; }
  void zero_grad() { n_->grad.clear(); }

  T item() const {
    if (numel() != 1) throw UsageError("tensor: item() on non-scalar " + shape_str(dims()));
    return n_->values[0];
  }

  std::shared_ptr<Node<T>>& node() { return n_; }
  const std::shared_ptr<Node<T>>& node() const { return n_; }

 private:
  std::shared_ptr<Node<T>> n_;
};

// Builds an op result: wires parents and the backward closure only when grad
// recording is on and at least one input needs gradients.
template <typename T>
Tensor<T> make_result(Shape dims, std::vector<T> values, std::vector<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  Tensor<T> out = Tensor<T>::from(std::move(dims), std::move(values), false);
  bool any = false;
  for (const auto& in : inputs) any = any || (in.defined() && in.requires_grad());
  if (grad_mode() && any) {
    out.node()->requires_grad = true;
    for (auto& in : inputs)
      if (in.defined()) out.node()->parents.push_back(in.node());
    out.node()->backward_fn = std::move(backward_fn);
  }
  return out;
}

// Reverse-mode sweep from a scalar root: seeds d(root)/d(root) = 1, walks the
// graph in reverse topological order and fires each node's closure once. The
// handle itself is untouched; only the shared graph accumulates gradients.
template <typename T>
void backward(const Tensor<T>& root) {
  if (!root.defined()) throw UsageError("backward: undefined tensor");
  if (root.numel() != 1) throw UsageError("backward: root must be a scalar");
  if (!root.requires_grad())
    throw UsageError("backward: root does not depend on any gradient-tracked tensor");

  std::vector<Node<T>*> order;
  std::unordered_set<const Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.push_back({root.node().get(), 0});
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad();
  root.node()->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn) {
      node->ensure_grad();
      node->backward_fn(*node);
    }
  }
}

}  // namespace ctsparse::ad
