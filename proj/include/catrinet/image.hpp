#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace catrinet {

/// Single-channel image, row-major, values in [0, 1].
struct ImageGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  double& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }

  /// Throws ValidationError unless sizes agree and every value is in [0, 1].
  void validate() const;
};

/// Reads a binary 8-bit PGM (P5) and rescales to [0, 1].
ImageGrid read_pgm(const std::filesystem::path& path);
void write_pgm(const ImageGrid& image, const std::filesystem::path& path);

}  // namespace catrinet
