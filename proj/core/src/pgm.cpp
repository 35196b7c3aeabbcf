#include "ctsparse/core/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ctsparse {
namespace {

// next whitespace-delimited token, honouring '#' comments; range comments are
// collected into `range_line`
std::string next_token(std::istream& in, std::string* range_line) {
  for (;;) {
    int ch = in.get();
    if (ch == EOF) throw FormatError("pgm: truncated header");
    if (std::isspace(ch)) continue;
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
      if (range_line && line.find("range") != std::string::npos) *range_line = line;
      continue;
    }
    std::string tok(1, static_cast<char>(ch));
    while (in.peek() != EOF && !std::isspace(in.peek())) tok.push_back(static_cast<char>(in.get()));
    return tok;
  }
}

int parse_int(const std::string& tok, const char* what) {
  try {
    size_t pos = 0;
    const int v = std::stoi(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError(std::string("pgm: bad ") + what + " field '" + tok + "'");
  }
}

}  // namespace

void save_pgm(const std::string& path, const Image& im, double lo, double hi) {
  im.validate();
  if (!(hi > lo)) throw UsageError("pgm: data range must satisfy hi > lo");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("pgm: cannot open for writing: " + path);

  char head[160];
  std::snprintf(head, sizeof(head), "P5\n# range %.17g %.17g\n%d %d\n65535\n", lo, hi, im.width,
                im.height);
  out << head;

  const double scale = 65535.0 / (hi - lo);
  std::vector<unsigned char> raw(im.pixels.size() * 2);
  for (size_t i = 0; i < im.pixels.size(); ++i) {
    double v = (im.pixels[i] - lo) * scale;
    v = std::clamp(v, 0.0, 65535.0);
    const auto q = static_cast<uint16_t>(std::lround(v));
    raw[2 * i] = static_cast<unsigned char>(q >> 8);  // big-endian, per PGM
    raw[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("pgm: write failed: " + path);
}

void save_pgm(const std::string& path, const Image& im) {
  double lo = im.pixels.empty() ? 0.0 : im.pixels[0];
  double hi = lo;
  for (double v : im.pixels) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > lo)) hi = lo + 1.0;
  save_pgm(path, im, lo, hi);
}

Image load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("pgm: cannot open: " + path);

  std::string range_line;
  if (next_token(in, &range_line) != "P5") throw FormatError("pgm: not a P5 file: " + path);
  const int w = parse_int(next_token(in, &range_line), "width");
  const int h = parse_int(next_token(in, &range_line), "height");
  const int maxval = parse_int(next_token(in, &range_line), "maxval");
  if (w <= 0 || h <= 0) throw FormatError("pgm: non-positive dimensions");
  if (maxval != 65535) throw FormatError("pgm: expected 16-bit maxval 65535");
  // exactly one whitespace byte separates the header from the raster
  in.get();

  if (range_line.empty()) throw FormatError("pgm: missing '# range <lo> <hi>' header line");
  double lo = 0.0, hi = 0.0;
  {
    std::istringstream ls(range_line);
    std::string word;
    ls >> word >> lo >> hi;  // 'range' lo hi
    if (!ls || word != "range" || !(hi > lo))
      throw FormatError("pgm: malformed range line '" + range_line + "'");
  }

  std::vector<unsigned char> raw(static_cast<size_t>(w) * h * 2);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw FormatError("pgm: truncated pixel data");

  Image im = Image::zeros(h, w);
  const double scale = (hi - lo) / 65535.0;
  for (size_t i = 0; i < im.pixels.size(); ++i) {
    const uint16_t q = static_cast<uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    im.pixels[i] = lo + q * scale;
  }
  return im;
}

}  // namespace ctsparse
