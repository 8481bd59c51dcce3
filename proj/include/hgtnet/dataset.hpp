#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hgtnet/image.hpp"
#include "hgtnet/rng.hpp"

namespace hgt::data {

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<ImageSample> samples;

  std::size_t num_classes() const { return class_names.size(); }
  std::vector<ImageSample> split(Split which) const;
};

// `<root>/<class>/<file>.ppm`; classes ranked by name in byte order, files
// sorted the same way. Ids are `<class>/<file>`.
Dataset load_dataset(const std::filesystem::path& root);
void write_dataset(const std::filesystem::path& root, const Dataset& dataset);

// Five oriented-sinusoid texture classes with class-specific tint, frequency
// and orientation plus Gaussian noise. Balanced and deterministic per stream.
Dataset synth_dataset(std::size_t num_per_class, std::size_t size, RngStream rng);

// Seeded stratified split: per class, round(test_fraction * n) samples go to
// the test split (at least one when the class has two or more samples).
void split_stratified(Dataset& dataset, double test_fraction, std::uint64_t seed);

// Stream for all randomness applied to one sample in one epoch.
RngStream sample_stream(std::uint64_t seed, const std::string& sample_id, std::uint64_t epoch);

}  // namespace hgt::data
