#pragma once

#include <algorithm>
#include <cstring>
#include <vector>

#include "ctsparse/ad/tensor.hpp"
#include "ctsparse/core/errors.hpp"
#include "ctsparse/tomo/fbp.hpp"
#include "ctsparse/tomo/projector.hpp"

namespace ctsparse::train {

// Differentiable filtered backprojection over a batch of single-channel
// sinograms: [N,1,views,det] -> [N,1,det,det] (the detector count doubles as
// the output image size, matching the unit-spaced geometry). Forward is the
// per-row ramp filter followed by the weighted gather; the row filter is
// self-adjoint, so backward is the exact transpose: scatter the image
// gradient into sinogram rows, then filter those rows again.
template <typename T>
ad::Tensor<T> fbp_bridge(const ad::Tensor<T>& sino, const std::vector<double>& angles_deg,
                         tomo::FbpWindow window = tomo::FbpWindow::RamLak) {
  if (sino.rank() != 4 || sino.dim(1) != 1)
    throw ShapeError("fbp_bridge: expected [N,1,views,det], got " + ad::shape_str(sino.dims()));
  const int views = static_cast<int>(sino.dim(2));
  const int det = static_cast<int>(sino.dim(3));
  if (static_cast<int>(angles_deg.size()) != views)
    throw GeometryError("fbp_bridge: " + std::to_string(angles_deg.size()) + " angles for " +
                        std::to_string(views) + " views");
  tomo::Geometry{det, angles_deg}.validate();

  const std::vector<double> rad = tomo::to_radians(angles_deg);
  const std::vector<double> wts = tomo::angle_weights(angles_deg);
  const int64_t batch = sino.dim(0);
  const size_t sino_n = static_cast<size_t>(views) * det;
  const size_t img_n = static_cast<size_t>(det) * det;

  std::vector<T> out(static_cast<size_t>(batch) * img_n);
  std::vector<T> buf(sino_n);
  for (int64_t b = 0; b < batch; ++b) {
    std::memcpy(buf.data(), sino.data() + b * sino_n, sino_n * sizeof(T));
    tomo::filter_rows(buf.data(), views, det, window);
    tomo::fbp_gather(buf.data(), det, rad.data(), wts.data(), views, out.data() + b * img_n);
  }

  return ad::make_result<T>(
      {batch, 1, det, det}, std::move(out), {sino},
      [views, det, rad, wts, window](ad::Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const size_t sn = static_cast<size_t>(views) * det;
        const size_t in = static_cast<size_t>(det) * det;
        const int64_t batch = self.dims[0];
        std::vector<T> gbuf(sn);
        for (int64_t b = 0; b < batch; ++b) {
          std::fill(gbuf.begin(), gbuf.end(), T(0));
          tomo::fbp_scatter(self.grad.data() + b * in, det, rad.data(), wts.data(), views,
                            gbuf.data());
          tomo::filter_rows(gbuf.data(), views, det, window);
          T* dst = p.grad.data() + b * sn;
          for (size_t i = 0; i < sn; ++i) dst[i] += gbuf[i];
        }
      });
}

}  // namespace ctsparse::train
