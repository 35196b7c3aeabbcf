#pragma once

#include <cstdint>

#include "ctsparse/core/types.hpp"

namespace ctsparse {

enum class PhantomKind { SheppLogan, RandomEllipses };

struct PhantomSpec {
  PhantomKind kind = PhantomKind::SheppLogan;
  int size = 64;          // square, must be divisible by 16
  int ellipse_count = 6;  // random-ellipses only
  uint64_t seed = 0;      // random-ellipses only
};

// Renders the phantom on an n x n grid. Values lie in [0, 1] and the support
// is contained in the inscribed circle. shepp-logan uses the classic
// ten-ellipse head parameterization on [-1, 1]^2 (max value 1.0 in the skull
// shell); random-ellipses sums seeded additive ellipses clipped to the
// inscribed circle.
Image make_phantom(const PhantomSpec& spec);

}  // namespace ctsparse
