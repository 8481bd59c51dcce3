#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>

#include "hgtnet/image.hpp"
#include "hgtnet/rng.hpp"
#include "hgtnet/tensor.hpp"

namespace hgt::data {

struct ColorJitter {
  double brightness = 0.0;
  double contrast = 0.0;
  double saturation = 0.0;
  double hue = 0.0;  // fraction of a turn, <= 0.5
};

struct AugmentPolicy {
  std::size_t target_h = 224;
  std::size_t target_w = 224;
  double flip_prob = 0.0;
  double max_rotation_deg = 0.0;
  ColorJitter jitter;
  double sharpness_factor = 1.0;
  double sharpness_prob = 0.0;
  bool blur_enabled = false;
  std::size_t blur_kernel = 3;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;

  // Flip 0.5, rotation up to 15 degrees, jitter 0.2/0.2/0.2/0.05,
  // sharpness 0.2 at 0.5, 3x3 blur with sigma in [0.1, 2.0].
  static AugmentPolicy train_default(std::size_t size);
  // Rotation up to 5 degrees and jitter 0.1/0.1/0.1/0.02 only.
  static AugmentPolicy test_default(std::size_t size);
  // Same target size, every random transform disabled.
  AugmentPolicy without_randomness() const;

  void validate() const;
};

struct DatasetStats {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> std{1.0, 1.0, 1.0};
};

inline constexpr double kStdFloor = 1e-6;

// ---- geometry ----

// Half-pixel-centre bilinear resampling (corners not aligned).
Image resize_bilinear(const Image& img, std::size_t h, std::size_t w);
Image horizontal_flip(const Image& img);
Image random_horizontal_flip(const Image& img, double prob, RngStream rng);
// Rotation about the image centre by `degrees`; +90 maps pixel (r, c) to
// (c, H-1-r). Bilinear resampling, zero fill outside the source.
Image rotate(const Image& img, double degrees);
Image random_rotation(const Image& img, double max_deg, RngStream rng);
// Exact quarter turns: k times the +90 degree map.
Image rotate90(const Image& img, int k);

// ---- photometric ----

Image adjust_brightness(const Image& img, double factor);
// Blend with the mean luma of the whole image.
Image adjust_contrast(const Image& img, double factor);
// Blend with the per-pixel luma.
Image adjust_saturation(const Image& img, double factor);
// Rotate hue by `shift` turns in HSV.
Image adjust_hue(const Image& img, double shift);
double luma(double r, double g, double b);
// Factors uniform in [1 - f, 1 + f] (hue in [-f, f]), applied in random order.
Image color_jitter(const Image& img, const ColorJitter& jitter, RngStream rng);

// 3x3 smoothing ([1 1 1; 1 5 1; 1 1 1] / 13); border pixels are kept.
Image smooth3x3(const Image& img);
// blur + factor * (img - blur), clamped.
Image adjust_sharpness(const Image& img, double factor);
Image random_sharpness(const Image& img, double factor, double prob, RngStream rng);

// Normalized 1-D Gaussian weights; `kernel` must be odd.
std::vector<double> gaussian_kernel(std::size_t kernel, double sigma);
// Separable blur with reflect-101 borders.
Image gaussian_blur(const Image& img, std::size_t kernel, double sigma);

// ---- pipeline ----

// resize -> flip -> rotation -> jitter -> sharpness -> blur. Each step draws
// from its own child stream of `rng`.
Image augment(const Image& img, const AugmentPolicy& policy, RngStream rng);

// Per-channel mean and population std over every pixel of the given samples,
// each resized to (h, w) first when its size differs. std floored at kStdFloor.
DatasetStats compute_stats(std::span<const ImageSample> samples, std::size_t h, std::size_t w);

// Channel-first tensor 3 x H x W of (value - mean) / std.
Tensor normalize(const Image& img, const DatasetStats& stats);
// Writes the normalized channels of `img` into out[0 .. 3*H*W).
void normalize_into(const Image& img, const DatasetStats& stats, std::span<double> out);

// Quarter-turn pretext view: label uniform in {0, 1, 2, 3}, image rotated by
// 90 * label degrees without interpolation.
std::pair<Image, int> rotation_pretext_sample(const Image& img, RngStream rng);

}  // namespace hgt::data
