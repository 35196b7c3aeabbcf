#pragma once

#include <cstdint>
#include <string>

#include "ctsparse/ad/params.hpp"
#include "ctsparse/cagan/config.hpp"

namespace ctsparse::cagan {

// analytic size of one convolution: cout*cin_per_group*k^2 (+ cout bias)
int64_t conv_param_count(int64_t cout, int64_t cin_per_group, int k, bool bias);

// trainable parameter totals, taken from a freshly built network
int64_t generator_param_count(const NetConfig& cfg);
int64_t discriminator_param_count(const NetConfig& cfg);

// analytic multiply-accumulate count of one generator forward pass on a
// batch-1 input of the given spatial size (convolutions and gates; norms and
// activations are excluded)
int64_t generator_mac_count(const NetConfig& cfg, int h, int w);

// layer table (name, shape, parameter count) plus totals, for audits
std::string describe(const ad::ParamStore<double>& ps);

}  // namespace ctsparse::cagan
