#pragma once

#include <string>

#include "ctsparse/core/types.hpp"

namespace ctsparse {

// 16-bit binary PGM (P5, maxval 65535, big-endian samples) with the physical
// data range recorded as a `# range <lo> <hi>` comment in the header. Values
// are mapped linearly from [lo, hi] onto [0, 65535] with clamping, so a
// round trip is exact to within (hi - lo) / 65535 per pixel.
void save_pgm(const std::string& path, const Image& im, double lo, double hi);

// Convenience: range taken from the image's own min/max.
void save_pgm(const std::string& path, const Image& im);

// Loads a P5 written by save_pgm and undoes the range mapping. Bad magic,
// wrong maxval, a missing range comment or truncated pixel data all throw
// FormatError; a missing file throws IoError.
Image load_pgm(const std::string& path);

}  // namespace ctsparse
