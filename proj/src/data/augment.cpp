#include "hgtnet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hgtnet/errors.hpp"

namespace hgt::data {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

void require_prob(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " must be in [0, 1]");
}

// Bilinear sample at fractional (sr, sc); nullopt-like false when outside.
bool sample_bilinear(const Image& img, double sr, double sc, double out[3]) {
  constexpr double kTol = 1e-9;
  const double max_r = static_cast<double>(img.height - 1);
  const double max_c = static_cast<double>(img.width - 1);
  if (sr < -kTol || sc < -kTol || sr > max_r + kTol || sc > max_c + kTol) return false;
  sr = std::clamp(sr, 0.0, max_r);
  sc = std::clamp(sc, 0.0, max_c);
  const auto r0 = static_cast<std::size_t>(std::floor(sr));
  const auto c0 = static_cast<std::size_t>(std::floor(sc));
  const std::size_t r1 = std::min(r0 + 1, img.height - 1);
  const std::size_t c1 = std::min(c0 + 1, img.width - 1);
  const double fr = sr - static_cast<double>(r0);
  const double fc = sc - static_cast<double>(c0);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const double top = img.at(r0, c0, ch) * (1.0 - fc) + img.at(r0, c1, ch) * fc;
    const double bottom = img.at(r1, c0, ch) * (1.0 - fc) + img.at(r1, c1, ch) * fc;
    out[ch] = top * (1.0 - fr) + bottom * fr;
  }
  return true;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  v = mx;
  s = mx > 0.0 ? delta / mx : 0.0;
  if (delta <= 0.0) {
    h = 0.0;
  } else if (mx == r) {
    h = std::fmod((g - b) / delta + 6.0, 6.0) / 6.0;
  } else if (mx == g) {
    h = ((b - r) / delta + 2.0) / 6.0;
  } else {
    h = ((r - g) / delta + 4.0) / 6.0;
  }
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double h6 = h * 6.0;
  const double fl = std::floor(h6);
  const double f = h6 - fl;
  const int sector = static_cast<int>(fl) % 6;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

// Reflect-101 index into [0, n).
std::size_t reflect(long i, std::size_t n) {
  if (n == 1) return 0;
  const long last = static_cast<long>(n) - 1;
  while (i < 0 || i > last) {
    if (i < 0) i = -i;
    if (i > last) i = 2 * last - i;
  }
  return static_cast<std::size_t>(i);
}

}  // namespace

// ---- policy ----

AugmentPolicy AugmentPolicy::train_default(std::size_t size) {
  AugmentPolicy p;
  p.target_h = p.target_w = size;
  p.flip_prob = 0.5;
  p.max_rotation_deg = 15.0;
  p.jitter = {0.2, 0.2, 0.2, 0.05};
  p.sharpness_factor = 0.2;
  p.sharpness_prob = 0.5;
  p.blur_enabled = true;
  p.blur_kernel = 3;
  p.blur_sigma_min = 0.1;
  p.blur_sigma_max = 2.0;
  return p;
}

AugmentPolicy AugmentPolicy::test_default(std::size_t size) {
  AugmentPolicy p;
  p.target_h = p.target_w = size;
  p.max_rotation_deg = 5.0;
  p.jitter = {0.1, 0.1, 0.1, 0.02};
  return p;
}

AugmentPolicy AugmentPolicy::without_randomness() const {
  AugmentPolicy p;
  p.target_h = target_h;
  p.target_w = target_w;
  return p;
}

void AugmentPolicy::validate() const {
  if (target_h == 0 || target_w == 0) throw ConfigError("augment target size must be positive");
  require_prob(flip_prob, "flip_prob");
  require_prob(sharpness_prob, "sharpness_prob");
  if (!(max_rotation_deg >= 0.0)) throw ConfigError("max_rotation_deg must be >= 0");
  if (!(jitter.brightness >= 0.0 && jitter.contrast >= 0.0 && jitter.saturation >= 0.0 && jitter.hue >= 0.0)) {
    throw ConfigError("color jitter magnitudes must be >= 0");
  }
  if (jitter.hue > 0.5) throw ConfigError("hue jitter must be <= 0.5");
  if (!(sharpness_factor >= 0.0)) throw ConfigError("sharpness_factor must be >= 0");
  if (blur_kernel % 2 == 0) throw ConfigError("blur_kernel must be odd");
  if (!(blur_sigma_min > 0.0 && blur_sigma_min <= blur_sigma_max)) {
    throw ConfigError("blur sigma range must be positive and ordered");
  }
}

// ---- geometry ----

Image resize_bilinear(const Image& img, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0) throw ConfigError("resize target must be at least 1x1");
  if (h == img.height && w == img.width) return img;
  Image out(h, w);
  const double sy = static_cast<double>(img.height) / static_cast<double>(h);
  const double sx = static_cast<double>(img.width) / static_cast<double>(w);
  for (std::size_t r = 0; r < h; ++r) {
    const double src_r = std::max(0.0, (static_cast<double>(r) + 0.5) * sy - 0.5);
    for (std::size_t c = 0; c < w; ++c) {
      const double src_c = std::max(0.0, (static_cast<double>(c) + 0.5) * sx - 0.5);
      double px[3] = {0.0, 0.0, 0.0};
      sample_bilinear(img, std::min(src_r, static_cast<double>(img.height - 1)),
                      std::min(src_c, static_cast<double>(img.width - 1)), px);
      for (std::size_t ch = 0; ch < 3; ++ch) out.at(r, c, ch) = clamp01(px[ch]);
    }
  }
  return out;
}

Image horizontal_flip(const Image& img) {
  Image out(img.height, img.width);
  for (std::size_t r = 0; r < img.height; ++r)
    for (std::size_t c = 0; c < img.width; ++c)
      for (std::size_t ch = 0; ch < 3; ++ch) out.at(r, img.width - 1 - c, ch) = img.at(r, c, ch);
  return out;
}

Image random_horizontal_flip(const Image& img, double prob, RngStream rng) {
  require_prob(prob, "flip probability");
  return rng.uniform() < prob ? horizontal_flip(img) : img;
}

Image rotate(const Image& img, double degrees) {
  if (degrees == 0.0) return img;
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  Image out(img.height, img.width, 0.0);
  for (std::size_t r = 0; r < img.height; ++r) {
    const double dr = static_cast<double>(r) - cy;
    for (std::size_t c = 0; c < img.width; ++c) {
      const double dc = static_cast<double>(c) - cx;
      // Inverse of the forward map (dr, dc) -> (dr cos + dc sin, dc cos - dr sin).
      const double sr = cy + cs * dr - sn * dc;
      const double sc = cx + sn * dr + cs * dc;
      double px[3] = {0.0, 0.0, 0.0};
      if (!sample_bilinear(img, sr, sc, px)) continue;
      for (std::size_t ch = 0; ch < 3; ++ch) out.at(r, c, ch) = clamp01(px[ch]);
    }
  }
  return out;
}

Image random_rotation(const Image& img, double max_deg, RngStream rng) {
  if (!(max_deg >= 0.0)) throw ConfigError("max rotation must be >= 0");
  if (max_deg == 0.0) return img;
  return rotate(img, rng.uniform(-max_deg, max_deg));
}

Image rotate90(const Image& img, int k) {
  k = ((k % 4) + 4) % 4;
  Image cur = img;
  for (int step = 0; step < k; ++step) {
    Image next(cur.width, cur.height);
    for (std::size_t r = 0; r < cur.height; ++r)
      for (std::size_t c = 0; c < cur.width; ++c)
        for (std::size_t ch = 0; ch < 3; ++ch) next.at(c, cur.height - 1 - r, ch) = cur.at(r, c, ch);
    cur = std::move(next);
  }
  return cur;
}

// ---- photometric ----

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

Image adjust_brightness(const Image& img, double factor) {
  Image out = img;
  for (double& v : out.pixels) v = clamp01(v * factor);
  return out;
}

Image adjust_contrast(const Image& img, double factor) {
  double mean = 0.0;
  const std::size_t n = img.height * img.width;
  for (std::size_t i = 0; i < n; ++i) mean += luma(img.pixels[3 * i], img.pixels[3 * i + 1], img.pixels[3 * i + 2]);
  mean /= static_cast<double>(n);
  Image out = img;
  for (double& v : out.pixels) v = clamp01(factor * v + (1.0 - factor) * mean);
  return out;
}

Image adjust_saturation(const Image& img, double factor) {
  Image out = img;
  const std::size_t n = img.height * img.width;
  for (std::size_t i = 0; i < n; ++i) {
    const double gray = luma(img.pixels[3 * i], img.pixels[3 * i + 1], img.pixels[3 * i + 2]);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      out.pixels[3 * i + ch] = clamp01(factor * img.pixels[3 * i + ch] + (1.0 - factor) * gray);
    }
  }
  return out;
}

Image adjust_hue(const Image& img, double shift) {
  if (shift == 0.0) return img;
  Image out = img;
  const std::size_t n = img.height * img.width;
  for (std::size_t i = 0; i < n; ++i) {
    double h, s, v;
    rgb_to_hsv(img.pixels[3 * i], img.pixels[3 * i + 1], img.pixels[3 * i + 2], h, s, v);
    h = std::fmod(h + shift, 1.0);
    if (h < 0.0) h += 1.0;
    double r, g, b;
    hsv_to_rgb(h, s, v, r, g, b);
    out.pixels[3 * i] = clamp01(r);
    out.pixels[3 * i + 1] = clamp01(g);
    out.pixels[3 * i + 2] = clamp01(b);
  }
  return out;
}

Image color_jitter(const Image& img, const ColorJitter& jitter, RngStream rng) {
  const auto factor = [&](double f) { return rng.uniform(std::max(0.0, 1.0 - f), 1.0 + f); };
  const double brightness = factor(jitter.brightness);
  const double contrast = factor(jitter.contrast);
  const double saturation = factor(jitter.saturation);
  const double hue = rng.uniform(-jitter.hue, jitter.hue);
  std::array<int, 4> order{0, 1, 2, 3};
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

  Image out = img;
  for (int step : order) {
    switch (step) {
      case 0:
        if (brightness != 1.0) out = adjust_brightness(out, brightness);
        break;
      case 1:
        if (contrast != 1.0) out = adjust_contrast(out, contrast);
        break;
      case 2:
        if (saturation != 1.0) out = adjust_saturation(out, saturation);
        break;
      default:
        out = adjust_hue(out, hue);
        break;
    }
  }
  return out;
}

Image smooth3x3(const Image& img) {
  Image out = img;
  if (img.height < 3 || img.width < 3) return out;
  for (std::size_t r = 1; r + 1 < img.height; ++r) {
    for (std::size_t c = 1; c + 1 < img.width; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (std::size_t dr = 0; dr < 3; ++dr)
          for (std::size_t dc = 0; dc < 3; ++dc) {
            const double weight = (dr == 1 && dc == 1) ? 5.0 : 1.0;
            acc += weight * img.at(r + dr - 1, c + dc - 1, ch);
          }
        out.at(r, c, ch) = acc / 13.0;
      }
    }
  }
  return out;
}

Image adjust_sharpness(const Image& img, double factor) {
  if (!(factor >= 0.0)) throw ConfigError("sharpness factor must be >= 0");
  const Image blur = smooth3x3(img);
  Image out = img;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = clamp01(blur.pixels[i] + factor * (img.pixels[i] - blur.pixels[i]));
  }
  return out;
}

Image random_sharpness(const Image& img, double factor, double prob, RngStream rng) {
  require_prob(prob, "sharpness probability");
  return rng.uniform() < prob ? adjust_sharpness(img, factor) : img;
}

std::vector<double> gaussian_kernel(std::size_t kernel, double sigma) {
  if (kernel % 2 == 0) throw ConfigError("gaussian kernel size must be odd, got " + std::to_string(kernel));
  if (!(sigma > 0.0)) throw ConfigError("gaussian sigma must be positive");
  std::vector<double> w(kernel);
  const double half = static_cast<double>(kernel / 2);
  double total = 0.0;
  for (std::size_t i = 0; i < kernel; ++i) {
    const double x = static_cast<double>(i) - half;
    w[i] = std::exp(-x * x / (2.0 * sigma * sigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

Image gaussian_blur(const Image& img, std::size_t kernel, double sigma) {
  const auto w = gaussian_kernel(kernel, sigma);
  const long half = static_cast<long>(kernel / 2);
  Image tmp(img.height, img.width);
  for (std::size_t r = 0; r < img.height; ++r)
    for (std::size_t c = 0; c < img.width; ++c)
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (long k = -half; k <= half; ++k) {
          acc += w[static_cast<std::size_t>(k + half)] * img.at(r, reflect(static_cast<long>(c) + k, img.width), ch);
        }
        tmp.at(r, c, ch) = acc;
      }
  Image out(img.height, img.width);
  for (std::size_t r = 0; r < img.height; ++r)
    for (std::size_t c = 0; c < img.width; ++c)
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (long k = -half; k <= half; ++k) {
          acc += w[static_cast<std::size_t>(k + half)] * tmp.at(reflect(static_cast<long>(r) + k, img.height), c, ch);
        }
        out.at(r, c, ch) = clamp01(acc);
      }
  return out;
}

// ---- pipeline ----

Image augment(const Image& img, const AugmentPolicy& policy, RngStream rng) {
  policy.validate();
  Image out = resize_bilinear(img, policy.target_h, policy.target_w);
  if (policy.flip_prob > 0.0) out = random_horizontal_flip(out, policy.flip_prob, rng.child("flip"));
  if (policy.max_rotation_deg > 0.0) out = random_rotation(out, policy.max_rotation_deg, rng.child("rotate"));
  const ColorJitter& j = policy.jitter;
  if (j.brightness > 0.0 || j.contrast > 0.0 || j.saturation > 0.0 || j.hue > 0.0) {
    out = color_jitter(out, j, rng.child("jitter"));
  }
  if (policy.sharpness_prob > 0.0) {
    out = random_sharpness(out, policy.sharpness_factor, policy.sharpness_prob, rng.child("sharpness"));
  }
  if (policy.blur_enabled) {
    RngStream blur_rng = rng.child("blur");
    out = gaussian_blur(out, policy.blur_kernel, blur_rng.uniform(policy.blur_sigma_min, policy.blur_sigma_max));
  }
  return out;
}

DatasetStats compute_stats(std::span<const ImageSample> samples, std::size_t h, std::size_t w) {
  if (samples.empty()) throw DatasetError("cannot compute normalization statistics of an empty training split");
  std::vector<Image> resized;
  resized.reserve(samples.size());
  for (const auto& s : samples) resized.push_back(resize_bilinear(s.image, h, w));

  std::array<double, 3> sum{0.0, 0.0, 0.0};
  std::size_t count = 0;
  for (const Image& img : resized) {
    for (std::size_t i = 0; i < img.pixels.size(); ++i) sum[i % 3] += img.pixels[i];
    count += img.height * img.width;
  }
  DatasetStats stats;
  for (std::size_t ch = 0; ch < 3; ++ch) stats.mean[ch] = sum[ch] / static_cast<double>(count);
  std::array<double, 3> sq{0.0, 0.0, 0.0};
  for (const Image& img : resized) {
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      const double d = img.pixels[i] - stats.mean[i % 3];
      sq[i % 3] += d * d;
    }
  }
  for (std::size_t ch = 0; ch < 3; ++ch) {
    stats.std[ch] = std::max(kStdFloor, std::sqrt(sq[ch] / static_cast<double>(count)));
  }
  return stats;
}

void normalize_into(const Image& img, const DatasetStats& stats, std::span<double> out) {
  const std::size_t plane = img.height * img.width;
  if (out.size() < 3 * plane) throw DimensionError("normalize_into: output buffer too small");
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const double mean = stats.mean[ch];
    const double sd = stats.std[ch];
    for (std::size_t i = 0; i < plane; ++i) out[ch * plane + i] = (img.pixels[3 * i + ch] - mean) / sd;
  }
}

Tensor normalize(const Image& img, const DatasetStats& stats) {
  std::vector<double> data(3 * img.height * img.width);
  normalize_into(img, stats, data);
  return Tensor::from_data({3, img.height, img.width}, std::move(data));
}

std::pair<Image, int> rotation_pretext_sample(const Image& img, RngStream rng) {
  if (img.height != img.width) {
    throw GeometryError("rotation pretext needs a square image, got " + std::to_string(img.height) + "x" +
                        std::to_string(img.width));
  }
  const int label = static_cast<int>(rng.below(4));
  return {rotate90(img, label), label};
}

}  // namespace hgt::data
