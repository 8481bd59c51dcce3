#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hgtnet/gradcheck.hpp"

namespace hgt {

struct OpCheckResult {
  std::string name;
  GradCheckResult worst;  // merged over all instances
  double tolerance = 1e-4;
  bool passed = false;
};

struct OpSuiteOptions {
  std::uint64_t seed = 1;
  int instances = 20;
  // Name of an op whose backward is deliberately corrupted (checker self-test).
  std::string fault_op;
};

// Names of every differentiable op covered by the suite.
std::vector<std::string> op_gradcheck_names();

// Backward vs central differences for every differentiable op on
// `instances` random small inputs each. Scalar objective: sum(op(x) * R)
// with a fixed random R.
std::vector<OpCheckResult> run_op_gradchecks(const OpSuiteOptions& options = {});

}  // namespace hgt
