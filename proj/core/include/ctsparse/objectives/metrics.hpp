#pragma once

#include <vector>

#include "ctsparse/core/types.hpp"

namespace ctsparse::objectives {

struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

// The dB formula itself: 10 * log10(range^2 / mse); mse == 0 maps to +inf.
double psnr_from_mse(double data_range, double mse);

// 10 * log10(range^2 / MSE); +inf when the buffers match exactly. With a
// mask, only pixels where mask[i] != 0 enter the MSE.
double psnr(const std::vector<double>& a, const std::vector<double>& b, double data_range,
            const std::vector<uint8_t>* mask = nullptr);
double psnr(const Image& a, const Image& b, double data_range, bool fov_only = false);

// Mean structural similarity over all valid window positions (no padding),
// Gaussian-weighted window stats, evaluated with separable filtering. Needs
// both dimensions >= window.
double ssim(const Image& a, const Image& b, double data_range, const SsimConfig& cfg = {});

// Normalized 1-D Gaussian taps shared by ssim and the differentiable loss.
std::vector<double> gaussian_taps(int window, double sigma);

}  // namespace ctsparse::objectives
