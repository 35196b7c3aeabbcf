#include "ctsparse/tomo/fbp.hpp"

#include "ctsparse/tomo/projector.hpp"

namespace ctsparse::tomo {

std::vector<double> angle_weights(const std::vector<double>& angles_deg) {
  const size_t n = angles_deg.size();
  if (n == 0) throw GeometryError("fbp: empty angle list");
  constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
  std::vector<double> w(n);
  if (n == 1) {
    w[0] = 180.0 * kDegToRad;
    return w;
  }
  for (size_t i = 0; i < n; ++i) {
    const double prev = (i == 0) ? angles_deg[0] - (angles_deg[n - 1] - 180.0)
                                 : angles_deg[i] - angles_deg[i - 1];
    const double next = (i == n - 1) ? (angles_deg[0] + 180.0) - angles_deg[n - 1]
                                     : angles_deg[i + 1] - angles_deg[i];
    w[i] = 0.5 * (prev + next) * kDegToRad;
  }
  return w;
}

Image fbp(const Sinogram& sino, int image_size, FbpWindow window) {
  sino.validate();
  if (sino.detectors != image_size)
    throw GeometryError("fbp: detector count must equal image size");
  Geometry geo{image_size, sino.angles_deg};
  geo.validate();

  const int n = image_size;
  std::vector<double> filtered = sino.samples;
  filter_rows(filtered.data(), sino.views(), n, window);

  const std::vector<double> rad = to_radians(sino.angles_deg);
  const std::vector<double> w = angle_weights(sino.angles_deg);

  Image out = Image::zeros(n, n);
  fbp_gather(filtered.data(), n, rad.data(), w.data(), sino.views(), out.pixels.data());
  return out;
}

}  // namespace ctsparse::tomo
