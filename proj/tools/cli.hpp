#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hgtnet/augment.hpp"
#include "hgtnet/config.hpp"
#include "hgtnet/model.hpp"
#include "hgtnet/training.hpp"

namespace hgt::cli {

// Exit codes, one per failure class.
enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kConfigError = 2,
  kDataError = 3,
  kIoError = 4,
  kCheckpointError = 5,
};

struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  data::AugmentPolicy augment = data::AugmentPolicy::train_default(224);
  std::string data_root;
  bool synth = false;
  std::size_t per_class = 40;
  std::string out_dir = "out";

  // Unknown keys are a ConfigError.
  void apply(const config::Entry& e);
  void apply_text(const std::string& text, const std::string& source);
  // Ties the augmentation target to the model input size, then validates.
  void finalize();
  std::string to_text() const;
};

// Runs one command line (args excludes the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hgt::cli
