#pragma once

// End-to-end checks shared by the command line tool and the acceptance run.

#include <cstdint>
#include <string>
#include <vector>

#include "hgtnet/gradcheck.hpp"
#include "hgtnet/model.hpp"
#include "hgtnet/op_gradcheck.hpp"

namespace hgt::verify {

// Small network used for finite-difference checks: 32 x 32 input, 16 x 16
// patches, width 8, two heads, one encoder layer, one 4-channel conv block.
model::ModelConfig gradcheck_config();

struct ModelCheckOptions {
  std::uint64_t seed = 1;
  int instances = 20;
  // Coordinates sampled per parameter tensor (and from the input).
  std::size_t elements_per_tensor = 3;
  double tolerance = 1e-3;
  // Scales the gradient flowing into the class logits (checker self-test).
  bool inject_fault = false;
};

struct ModelCheckResult {
  GradCheckResult worst;
  int instances = 0;
  double tolerance = 1e-3;
  bool passed = false;
};

// Combined classification + rotation loss of the training-mode network with a
// fixed dropout stream, differentiated w.r.t. every parameter and the input.
ModelCheckResult run_model_gradcheck(const ModelCheckOptions& options = {});

struct NormalizationResult {
  double max_row_error = 0.0;          // |row sum - 1| over self, cross and graph attention
  double max_nonadjacent_weight = 0.0;  // largest |weight| on a non-edge of the graph
  std::size_t rows = 0;
  std::size_t nonadjacent_entries = 0;
  int forwards = 0;
};

// Random eval and training forwards on a 6 x 6 token grid.
NormalizationResult check_attention_normalization(std::uint64_t seed, int forwards);

}  // namespace hgt::verify
