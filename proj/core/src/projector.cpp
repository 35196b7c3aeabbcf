#include "ctsparse/tomo/projector.hpp"

#include "ctsparse/core/parallel.hpp"

namespace ctsparse::tomo {

Sinogram radon_forward(const Image& img, const std::vector<double>& angles_deg) {
  img.validate();
  if (img.height != img.width) throw GeometryError("radon: image must be square");
  Geometry geo{img.width, angles_deg};
  geo.validate();

  const int n = img.width;
  std::vector<double> masked(img.pixels.size());
  mask_to_fov(img.pixels.data(), n, masked.data());
  const std::vector<double> rad = to_radians(angles_deg);

  Sinogram sino = Sinogram::zeros(angles_deg, n);
  // each view writes its own sinogram row, so this is a clean parallel map
  parallel_for(static_cast<int64_t>(angles_deg.size()), [&](int64_t b, int64_t e) {
    forward_kernel(masked.data(), n, rad.data() + b, static_cast<int>(e - b),
                   sino.samples.data() + b * n);
  });
  return sino;
}

Image backproject(const Sinogram& sino, int image_size) {
  sino.validate();
  if (sino.detectors != image_size)
    throw GeometryError("backproject: detector count must equal image size");
  Geometry geo{image_size, sino.angles_deg};
  geo.validate();

  const int n = image_size;
  const std::vector<double> rad = to_radians(sino.angles_deg);
  std::vector<double> acc(static_cast<size_t>(n) * n, 0.0);
  // scatter with overlapping writes across views: run serially in view order
  // so the result never depends on the worker count
  adjoint_kernel(sino.samples.data(), n, rad.data(), sino.views(), acc.data());

  Image out = Image::zeros(n, n);
  mask_to_fov(acc.data(), n, out.pixels.data());
  return out;
}

}  // namespace ctsparse::tomo
