#pragma once

#include "ctsparse/core/types.hpp"

namespace ctsparse::tomo {

struct SartConfig {
  int iterations = 300;
  double tv_weight = 0.1;
  int tv_max_iterations = 1000;
  double tv_epsilon = 4e-5;  // relative-change stopping threshold
  double relaxation = 0.2;
};

// Smoothed anisotropic total variation sum_d sqrt(d^2 + 1e-8) over horizontal
// and vertical neighbour differences, and its gradient.
double tv_value(const Image& im);
void tv_gradient(const Image& im, Image& grad);

// Simultaneous ART with a TV smoothing flow between sweeps:
//   x += relaxation * A^T((b - Ax) / row_sums) / col_sums,  clamp x >= 0,
//   then gradient descent on tv_weight * TV(x), step 1e-4, until the relative
//   image change drops below tv_epsilon or tv_max_iterations steps pass.
// `init` seeds the iteration (commonly an FBP image); zeros when null.
// Non-finite iterates throw NumericalError naming the sweep.
Image sart_tv(const Sinogram& sino, int image_size, const SartConfig& cfg = {},
              const Image* init = nullptr);

}  // namespace ctsparse::tomo
