#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "ctsparse/ad/tensor.hpp"

namespace ctsparse::ad {

struct GradCheckResult {
  bool pass = true;
  double max_rel_err = 0.0;
  std::string worst;  // "input k, element i" of the worst disagreement
};

// Central-difference verification of reverse-mode gradients, double
// precision. f must map the given inputs to a scalar and be deterministic.
// Comparison per element: |analytic - numeric| / max(|analytic|, |numeric|)
// must stay below tol; when both magnitudes are below 1e-12 the element
// passes on the absolute difference being below abs_tol.
inline GradCheckResult grad_check(
    const std::function<Tensor<double>(std::vector<Tensor<double>>&)>& f,
    std::vector<Tensor<double>> inputs, double tol = 1e-6, double fd_step = 1e-5,
    double abs_tol = 1e-9) {
  for (auto& in : inputs) in.set_requires_grad(true);

  Tensor<double> loss = f(inputs);
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& in : inputs) {
    analytic.push_back(in.has_grad() ? in.grad_view() : std::vector<double>(in.numel(), 0.0));
    in.zero_grad();
  }

  GradCheckResult res;
  NoGradGuard ng;
  for (size_t k = 0; k < inputs.size(); ++k) {
    auto& vals = inputs[k].values();
    for (size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + fd_step;
      const double up = f(inputs).item();
      vals[i] = keep - fd_step;
      const double down = f(inputs).item();
      vals[i] = keep;
      const double numeric = (up - down) / (2.0 * fd_step);
      const double exact = analytic[k][i];

      const double mag = std::max(std::fabs(exact), std::fabs(numeric));
      double rel;
      if (mag < 1e-12) {
        rel = std::fabs(exact - numeric) < abs_tol ? 0.0 : 1.0;
      } else {
        rel = std::fabs(exact - numeric) / mag;
      }
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = "input " + std::to_string(k) + ", element " + std::to_string(i);
      }
    }
  }
  res.pass = res.max_rel_err < tol;
  return res;
}

}  // namespace ctsparse::ad
