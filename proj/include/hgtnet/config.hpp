#pragma once

// Flat `key = value` text with `#` comments. Doubles are written with 17
// significant digits so a round trip is exact.

#include <cstdint>
#include <string>
#include <vector>

#include "hgtnet/augment.hpp"
#include "hgtnet/model.hpp"
#include "hgtnet/training.hpp"

namespace hgt::config {

struct Entry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

// ConfigError naming `source` and the line on a malformed line.
std::vector<Entry> parse(const std::string& text, const std::string& source);

std::string format_double(double v);
double parse_double(const Entry& e);
std::uint64_t parse_u64(const Entry& e);
bool parse_bool(const Entry& e);
std::vector<std::size_t> parse_size_list(const Entry& e);

// Each setter returns false when the key does not belong to its section.
bool set_model_field(model::ModelConfig& cfg, const Entry& e);
bool set_train_field(train::TrainConfig& cfg, const Entry& e);
bool set_augment_field(data::AugmentPolicy& policy, const Entry& e);

std::string model_to_text(const model::ModelConfig& cfg);
std::string train_to_text(const train::TrainConfig& cfg);
std::string augment_to_text(const data::AugmentPolicy& policy);

}  // namespace hgt::config
