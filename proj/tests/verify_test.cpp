#include <gtest/gtest.h>

#include "hgtnet/verify.hpp"

using namespace hgt;
using namespace hgt::verify;

TEST(ModelGradcheck, EndToEndMatchesCentralDifferences) {
  ModelCheckOptions opt;
  opt.instances = 4;
  const auto r = run_model_gradcheck(opt);
  EXPECT_EQ(r.instances, 4);
  EXPECT_TRUE(r.passed) << r.worst.max_rel_error << " " << r.worst.max_small_abs_error;
  EXPECT_GT(r.worst.checked, 100u);
}

TEST(ModelGradcheck, InjectedFaultIsDetected) {
  ModelCheckOptions opt;
  opt.instances = 1;
  opt.inject_fault = true;
  EXPECT_FALSE(run_model_gradcheck(opt).passed);
}

TEST(Normalization, RowsSumToOneAndNonEdgesAreZero) {
  const auto r = check_attention_normalization(3, 4);
  EXPECT_EQ(r.forwards, 4);
  EXPECT_GT(r.nonadjacent_entries, 0u);
  EXPECT_LT(r.max_row_error, 1e-9);
  EXPECT_EQ(r.max_nonadjacent_weight, 0.0);
}
