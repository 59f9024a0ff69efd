#include "catrinet/image.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "catrinet/errors.hpp"

namespace catrinet {

void ImageGrid::validate() const {
  if (height == 0 || width == 0) throw ValidationError("image has zero extent");
  if (pixels.size() != height * width) {
    throw ValidationError("image holds " + std::to_string(pixels.size()) + " pixels, expected " +
                          std::to_string(height * width));
  }
  for (double p : pixels) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("pixel value outside [0, 1]");
  }
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  while (in) {
    int ch = in.get();
    if (ch == '#') {
      std::string ignored;
      std::getline(in, ignored);
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    if (ch == EOF) break;
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

ImageGrid read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  if (header_token(in) != "P5") throw ParseError(path.string() + ": not a binary PGM (P5)");
  ImageGrid img;
  try {
    img.width = std::stoul(header_token(in));
    img.height = std::stoul(header_token(in));
    const unsigned long maxval = std::stoul(header_token(in));
    if (maxval == 0 || maxval > 255) {
      throw ParseError(path.string() + ": only 8-bit PGM is supported");
    }
    img.pixels.resize(img.width * img.height);
    for (double& p : img.pixels) {
      const int ch = in.get();
      if (ch == EOF) throw ParseError(path.string() + ": truncated pixel data");
      p = static_cast<double>(ch) / static_cast<double>(maxval);
    }
  } catch (const std::logic_error&) {
    throw ParseError(path.string() + ": malformed PGM header");
  }
  img.validate();
  return img;
}

void write_pgm(const ImageGrid& image, const std::filesystem::path& path) {
  image.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  for (double p : image.pixels) out.put(static_cast<char>(std::lround(p * 255.0)));
}

}  // namespace catrinet
