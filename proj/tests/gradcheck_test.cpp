#include <gtest/gtest.h>

#include "hgtnet/op_gradcheck.hpp"

using namespace hgt;

TEST(OpGradcheck, EveryOpMatchesCentralDifferences) {
  const auto results = run_op_gradchecks({.seed = 1, .instances = 20, .fault_op = ""});
  ASSERT_EQ(results.size(), op_gradcheck_names().size());
  for (const auto& r : results) {
    EXPECT_TRUE(r.passed) << r.name << " rel=" << r.worst.max_rel_error
                          << " abs=" << r.worst.max_small_abs_error;
    EXPECT_GT(r.worst.checked, 0u) << r.name;
  }
}

TEST(OpGradcheck, SeedDoesNotMatter) {
  for (std::uint64_t seed : {7u, 99u}) {
    for (const auto& r : run_op_gradchecks({.seed = seed, .instances = 5, .fault_op = ""})) {
      EXPECT_TRUE(r.passed) << r.name << " seed " << seed;
    }
  }
}

TEST(OpGradcheck, CorruptedBackwardIsDetected) {
  const auto results = run_op_gradchecks({.seed = 1, .instances = 3, .fault_op = "softmax"});
  for (const auto& r : results) {
    if (r.name == "softmax") {
      EXPECT_FALSE(r.passed);
    } else {
      EXPECT_TRUE(r.passed) << r.name;
    }
  }
}
