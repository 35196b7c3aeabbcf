#include "ctsparse/sino/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "ctsparse/core/rng.hpp"

namespace ctsparse::sino {
namespace {

// exact inversion by CDF walk; only used where lambda is small
int64_t poisson_exact(double lambda, Rng& rng) {
  const double u = rng.uniform();
  double p = std::exp(-lambda);
  double cdf = p;
  int64_t k = 0;
  while (u > cdf && k < 1000000) {
    ++k;
    p *= lambda / static_cast<double>(k);
    cdf += p;
  }
  return k;
}

}  // namespace

Sinogram sparse_sample(const Sinogram& full, int target_views) {
  full.validate();
  if (target_views < 1) throw SamplingError("sparse_sample: target must be >= 1");
  const int v = full.views();
  if (v % target_views != 0)
    throw SamplingError("sparse_sample: target view count must divide the full view count");
  const int stride = v / target_views;

  std::vector<double> angles(target_views);
  for (int i = 0; i < target_views; ++i) angles[i] = full.angles_deg[i * stride];
  Sinogram out = Sinogram::zeros(angles, full.detectors);
  for (int i = 0; i < target_views; ++i)
    std::copy_n(full.row(i * stride), full.detectors, out.row(i));
  return out;
}

Sinogram poisson_noise(const Sinogram& sinogram, const NoiseSpec& spec) {
  sinogram.validate();
  if (!(spec.photons > 0.0)) throw ConfigError("poisson_noise: photon count must be positive");
  if (!(spec.mu_scale > 0.0)) throw ConfigError("poisson_noise: mu scale must be positive");

  Rng rng(spec.seed);
  Sinogram out = sinogram;
  for (double& p : out.samples) {
    const double path = p > 0.0 ? p : 0.0;
    const double lambda = spec.photons * std::exp(-path * spec.mu_scale);
    int64_t k;
    if (lambda <= 50.0) {
      k = poisson_exact(lambda, rng);
    } else {
      // Gaussian approximation; one deviate per sample either way
      k = static_cast<int64_t>(std::llround(lambda + std::sqrt(lambda) * rng.normal()));
    }
    if (k < 1) k = 1;  // keeps the log transform finite
    p = -std::log(static_cast<double>(k) / spec.photons) / spec.mu_scale;
  }
  return out;
}

Sinogram interpolate_views(const Sinogram& sparse, const std::vector<double>& target_angles_deg) {
  sparse.validate();
  if (sparse.views() < 2)
    throw InterpolationError("interpolate_views: need at least two source views");
  for (size_t i = 0; i < target_angles_deg.size(); ++i) {
    if (target_angles_deg[i] < 0.0 || target_angles_deg[i] >= 180.0)
      throw InterpolationError("interpolate_views: target angles must lie in [0, 180)");
    if (i > 0 && !(target_angles_deg[i] > target_angles_deg[i - 1]))
      throw InterpolationError("interpolate_views: target angles not strictly increasing");
  }
  if (target_angles_deg.empty())
    throw InterpolationError("interpolate_views: empty target angle list");

  const int det = sparse.detectors;
  const int sv = sparse.views();
  Sinogram out = Sinogram::zeros(target_angles_deg, det);

  for (size_t t = 0; t < target_angles_deg.size(); ++t) {
    const double ang = target_angles_deg[t];
    double* dst = out.row(static_cast<int>(t));

    // exact hit?
    int exact = -1;
    for (int i = 0; i < sv; ++i)
      if (std::fabs(sparse.angles_deg[i] - ang) < 1e-9) {
        exact = i;
        break;
      }
    if (exact >= 0) {
      std::copy_n(sparse.row(exact), det, dst);
      continue;
    }

    // bracket [lo, hi] around ang on the 180-periodic circle; a bracket view
    // pulled across the period contributes its detector-flipped row
    int lo = -1;
    for (int i = 0; i < sv; ++i)
      if (sparse.angles_deg[i] < ang) lo = i;
    double a0, a1;
    int i0, i1;
    bool flip0 = false, flip1 = false;
    if (lo == -1) {  // before the first view: wrap the last one back by 180
      i0 = sv - 1;
      a0 = sparse.angles_deg[sv - 1] - 180.0;
      flip0 = true;
      i1 = 0;
      a1 = sparse.angles_deg[0];
    } else if (lo == sv - 1) {  // after the last: wrap the first forward
      i0 = sv - 1;
      a0 = sparse.angles_deg[sv - 1];
      i1 = 0;
      a1 = sparse.angles_deg[0] + 180.0;
      flip1 = true;
    } else {
      i0 = lo;
      a0 = sparse.angles_deg[lo];
      i1 = lo + 1;
      a1 = sparse.angles_deg[lo + 1];
    }
    const double w = (ang - a0) / (a1 - a0);
    const double* r0 = sparse.row(i0);
    const double* r1 = sparse.row(i1);
    for (int d = 0; d < det; ++d) {
      const double v0 = flip0 ? r0[det - 1 - d] : r0[d];
      const double v1 = flip1 ? r1[det - 1 - d] : r1[d];
      dst[d] = (1.0 - w) * v0 + w * v1;
    }
  }
  return out;
}

Sinogram pad_views(const Sinogram& sinogram, int padded_views) {
  sinogram.validate();
  const int v = sinogram.views();
  if (padded_views < v) throw ShapeError("pad_views: padded count must be >= view count");

  std::vector<double> angles = sinogram.angles_deg;
  angles.resize(padded_views);
  Sinogram out;
  out.detectors = sinogram.detectors;
  out.samples = sinogram.samples;
  out.samples.resize(static_cast<size_t>(padded_views) * sinogram.detectors);
  const double period = 180.0;
  for (int i = v; i < padded_views; ++i) {
    const int src = (i - v) % v;
    const int half_turns = 1 + (i - v) / v;
    angles[i] = sinogram.angles_deg[src] + period * half_turns;
    const double* from = sinogram.row(src);
    double* to = out.samples.data() + static_cast<size_t>(i) * sinogram.detectors;
    if (half_turns % 2 == 1)
      for (int d = 0; d < sinogram.detectors; ++d) to[d] = from[sinogram.detectors - 1 - d];
    else
      std::copy_n(from, sinogram.detectors, to);
  }
  out.angles_deg = std::move(angles);
  return out;
}

Sinogram crop_views(const Sinogram& sinogram, int views) {
  sinogram.validate();
  if (views < 1 || views > sinogram.views())
    throw ShapeError("crop_views: count must be in [1, views]");
  Sinogram out;
  out.detectors = sinogram.detectors;
  out.angles_deg.assign(sinogram.angles_deg.begin(), sinogram.angles_deg.begin() + views);
  out.samples.assign(sinogram.samples.begin(),
                     sinogram.samples.begin() + static_cast<size_t>(views) * sinogram.detectors);
  return out;
}

}  // namespace ctsparse::sino
