#include "hgtnet/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "hgtnet/errors.hpp"

namespace hgt::data {

namespace fs = std::filesystem;

std::vector<ImageSample> Dataset::split(Split which) const {
  std::vector<ImageSample> out;
  for (const auto& s : samples)
    if (s.split == which) out.push_back(s);
  return out;
}

Dataset load_dataset(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw DatasetError("dataset root is not a directory: " + root.string());

  std::vector<std::string> classes;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) classes.push_back(entry.path().filename().string());
  }
  std::sort(classes.begin(), classes.end());
  if (classes.empty()) throw DatasetError("no class directories under " + root.string());

  Dataset ds;
  ds.class_names = classes;
  for (std::size_t label = 0; label < classes.size(); ++label) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(root / classes[label])) {
      if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
        files.push_back(entry.path().filename().string());
      }
    }
    if (files.empty()) throw DatasetError("class directory has no .ppm files: " + (root / classes[label]).string());
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      ImageSample s;
      s.id = classes[label] + "/" + file;
      s.image = read_ppm(root / classes[label] / file);
      s.label = static_cast<int>(label);
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

void write_dataset(const fs::path& root, const Dataset& dataset) {
  for (const auto& s : dataset.samples) {
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= dataset.num_classes()) {
      throw ContractError("sample " + s.id + " has label outside the class list");
    }
    const std::string& cls = dataset.class_names[static_cast<std::size_t>(s.label)];
    const std::string file = fs::path(s.id).filename().string();
    write_ppm(root / cls / file, s.image);
  }
}

Dataset synth_dataset(std::size_t num_per_class, std::size_t size, RngStream rng) {
  if (num_per_class == 0) throw ConfigError("synthetic dataset needs at least one image per class");
  if (size < 16) throw ConfigError("synthetic images must be at least 16 pixels wide");

  constexpr std::size_t kClasses = 5;
  static constexpr std::array<std::array<double, 3>, kClasses> kTint{{
      {0.70, 0.42, 0.55},
      {0.52, 0.40, 0.68},
      {0.44, 0.60, 0.50},
      {0.64, 0.62, 0.40},
      {0.40, 0.50, 0.64},
  }};

  Dataset ds;
  for (std::size_t k = 0; k < kClasses; ++k) ds.class_names.push_back("class_" + std::to_string(k));

  const double n = static_cast<double>(size);
  for (std::size_t k = 0; k < kClasses; ++k) {
    const double cycles = 2.0 + 1.5 * static_cast<double>(k);
    const double angle = static_cast<double>(k) * std::numbers::pi / 5.0;
    const double amplitude = 0.10 + 0.03 * static_cast<double>(k);
    const double dr = std::sin(angle), dc = std::cos(angle);
    for (std::size_t i = 0; i < num_per_class; ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "class_%zu/synth_%04zu.ppm", k, i);
      RngStream srng = rng.child(name);
      const double phase = srng.uniform(0.0, 2.0 * std::numbers::pi);
      const double tint_shift = srng.uniform(-0.03, 0.03);
      Image img(size, size);
      for (std::size_t r = 0; r < size; ++r) {
        for (std::size_t c = 0; c < size; ++c) {
          const double u = (static_cast<double>(r) * dr + static_cast<double>(c) * dc) / n;
          const double wave = amplitude * std::sin(2.0 * std::numbers::pi * cycles * u + phase);
          for (std::size_t ch = 0; ch < 3; ++ch) {
            const double v = kTint[k][ch] + tint_shift + wave + 0.03 * srng.normal();
            img.at(r, c, ch) = std::clamp(v, 0.0, 1.0);
          }
        }
      }
      ds.samples.push_back({name, std::move(img), static_cast<int>(k), Split::kTrain});
    }
  }
  return ds;
}

void split_stratified(Dataset& dataset, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must be in [0, 1)");
  const RngStream root(seed, stream_key("split"));
  for (std::size_t k = 0; k < dataset.num_classes(); ++k) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i)
      if (dataset.samples[i].label == static_cast<int>(k)) members.push_back(i);
    RngStream rng = root.child(k);
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.below(i)]);
    auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(members.size()) + 0.5));
    if (test_fraction > 0.0 && n_test == 0 && members.size() >= 2) n_test = 1;
    for (std::size_t j = 0; j < members.size(); ++j) {
      dataset.samples[members[j]].split = j < n_test ? Split::kTest : Split::kTrain;
    }
  }
}

RngStream sample_stream(std::uint64_t seed, const std::string& sample_id, std::uint64_t epoch) {
  return RngStream(seed, stream_key(sample_id)).child(mix64(epoch + 0x5eed));
}

}  // namespace hgt::data
