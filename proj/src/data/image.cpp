#include "hgtnet/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "hgtnet/errors.hpp"
#include "hgtnet/io.hpp"

namespace hgt::data {

namespace {

class HeaderReader {
 public:
  HeaderReader(const std::string& bytes, const std::string& name) : bytes_(bytes), name_(name) {}

  std::string token() {
    skip_space_and_comments();
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_])) && bytes_[pos_] != '#') {
      ++pos_;
    }
    if (start == pos_) fail("truncated header");
    return bytes_.substr(start, pos_ - start);
  }

  std::size_t number() {
    const std::string t = token();
    if (!std::all_of(t.begin(), t.end(), [](unsigned char ch) { return std::isdigit(ch); }) || t.size() > 9) {
      fail("bad header field '" + t + "'");
    }
    return static_cast<std::size_t>(std::stoul(t));
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      fail("missing whitespace before raster");
    }
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& why) const { throw FormatError(name_ + ": malformed PPM: " + why); }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  const std::string& name_;
  std::size_t pos_ = 0;
};

}  // namespace

Image parse_ppm(const std::string& bytes, const std::string& name) {
  HeaderReader reader(bytes, name);
  if (bytes.size() < 2 || bytes.compare(0, 2, "P6") != 0) reader.fail("magic is not P6");
  reader.token();
  const std::size_t width = reader.number();
  const std::size_t height = reader.number();
  const std::size_t maxval = reader.number();
  if (width == 0 || height == 0) reader.fail("zero extent");
  if (maxval == 0 || maxval > 255) reader.fail("maxval must be in [1, 255]");
  const std::size_t start = reader.raster_start();
  const std::size_t needed = width * height * 3;
  if (bytes.size() < start + needed) reader.fail("raster truncated");
  Image img(height, width);
  const auto scale = static_cast<double>(maxval);
  for (std::size_t i = 0; i < needed; ++i) {
    const auto v = static_cast<unsigned char>(bytes[start + i]);
    if (v > maxval) reader.fail("sample exceeds maxval");
    img.pixels[i] = v / scale;
  }
  return img;
}

Image read_ppm(const std::filesystem::path& path) { return parse_ppm(read_file(path), path.string()); }

std::string encode_ppm(const Image& image) {
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.reserve(out.size() + image.pixels.size());
  for (double v : image.pixels) {
    const double q = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
    out.push_back(static_cast<char>(static_cast<unsigned char>(q)));
  }
  return out;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  write_file_atomic(path, encode_ppm(image));
}

}  // namespace hgt::data
