#pragma once

#include <cstdint>

#include "ctsparse/core/types.hpp"

namespace ctsparse::sino {

// Keeps every stride-th view, stride = views / target_views; the target must
// divide the view count exactly so the kept angles stay uniform.
Sinogram sparse_sample(const Sinogram& full, int target_views);

struct NoiseSpec {
  double photons = 2e7;   // incident photon count I0 per detector bin
  uint64_t seed = 0;
  double mu_scale = 1.0;  // attenuation per unit path length
};

// Transmission Poisson noise: lambda = I0 * exp(-p * mu), a Poisson count k
// (exact inversion for lambda <= 50, Gaussian approximation above, clamped to
// k >= 1 so the log stays finite), then p' = -log(k / I0) / mu. Negative
// inputs are treated as zero path length.
Sinogram poisson_noise(const Sinogram& sino, const NoiseSpec& spec);

// Linear interpolation between angularly adjacent views, using the
// 180-degree flip identity p(theta + 180, s) = p(theta, -s) to wrap around
// the ends. Needs at least two views. Target angles are degrees in [0, 180).
Sinogram interpolate_views(const Sinogram& sparse, const std::vector<double>& target_angles_deg);

// Appends (padded_views - views) wrapped rows: appended row i continues the
// angle grid past 180 degrees and holds the detector-flipped copy of row
// (i mod views), flipped once per full half-turn. pad to the same count is
// the identity.
Sinogram pad_views(const Sinogram& sino, int padded_views);

// Keeps the first `views` rows; exact inverse of pad_views for the original
// count.
Sinogram crop_views(const Sinogram& sino, int views);

}  // namespace ctsparse::sino
