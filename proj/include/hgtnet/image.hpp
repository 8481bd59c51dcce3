#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace hgt::data {

// RGB image, row-major, interleaved channels, values nominally in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;  // height * width * 3

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w * 3, fill) {}

  double& at(std::size_t r, std::size_t c, std::size_t ch) { return pixels[(r * width + c) * 3 + ch]; }
  double at(std::size_t r, std::size_t c, std::size_t ch) const { return pixels[(r * width + c) * 3 + ch]; }
  bool operator==(const Image&) const = default;
};

enum class Split { kTrain, kTest };

struct ImageSample {
  std::string id;
  Image image;
  int label = 0;
  Split split = Split::kTrain;
};

// Binary P6 with maxval <= 255. Header tokens may be separated by any
// whitespace and `#` comment lines.
Image read_ppm(const std::filesystem::path& path);
Image parse_ppm(const std::string& bytes, const std::string& name);
std::string encode_ppm(const Image& image);
// Quantizes to 8 bits (round half up) and writes atomically.
void write_ppm(const std::filesystem::path& path, const Image& image);

}  // namespace hgt::data
