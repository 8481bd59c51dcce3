#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "hgtnet/errors.hpp"
#include "hgtnet/gradcheck.hpp"
#include "hgtnet/ops.hpp"
#include "test_util.hpp"

using namespace hgt;
using hgt::testing::bitwise_equal;
using hgt::testing::random_tensor;

namespace {

// Naive triple loop, independent of the gemm kernels.
std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a.at({i, p}) * b.at({p, j});
  return c;
}

// Direct window sum over a zero-padded input.
std::vector<double> window_sum_conv(const Tensor& x, const Tensor& w, std::size_t pad) {
  const std::size_t f_count = w.dim(0), channels = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = h + 2 * pad - kh + 1, ow = wd + 2 * pad - kw + 1;
  std::vector<double> out;
  for (std::size_t b = 0; b < x.dim(0); ++b)
    for (std::size_t f = 0; f < f_count; ++f)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          long double acc = 0.0L;
          for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const long iy = static_cast<long>(oy + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
                acc += static_cast<long double>(w.at({f, c, ky, kx})) *
                       x.at({b, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)});
              }
          out.push_back(static_cast<double>(acc));
        }
  return out;
}

}  // namespace

// ---- construction and invariants ----

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor::from_data({2, 3}, std::vector<double>(5)), DimensionError);
  EXPECT_THROW(Tensor::zeros({2, 0}), DimensionError);
}

TEST(Tensor, CloneIsIndependent) {
  Tensor a = Tensor::from_data({2}, {1.0, 2.0});
  Tensor b = a.clone();
  b.mutable_data()[0] = 5.0;
  EXPECT_EQ(a.data()[0], 1.0);
}

// ---- matmul ----

TEST(Matmul, IdentityAndZero) {
  RngStream rng(1, 1);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor eye = Tensor::zeros({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.mutable_data()[i * 3 + i] = 1.0;
  EXPECT_TRUE(bitwise_equal(matmul(eye, x).data(), x.data()));

  Tensor y = random_tensor({2, 2}, rng);
  Tensor z = matmul(Tensor::zeros({2, 2}), y);
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, MatchesTripleLoopOracle) {
  RngStream rng(2, 1);
  Tensor a = random_tensor({2, 3}, rng);
  Tensor b = random_tensor({3, 2}, rng);
  const auto expected = naive_matmul(a, b);
  Tensor c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 2}));
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(c.data()[i], expected[i], 1e-12);
}

TEST(Matmul, RandomInstancesUpToEight) {
  RngStream rng(3, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.below(8), k = 1 + rng.below(8), n = 1 + rng.below(8);
    Tensor a = random_tensor({m, k}, rng);
    Tensor b = random_tensor({k, n}, rng);
    const auto expected = naive_matmul(a, b);
    Tensor c = matmul(a, b);
    for (std::size_t i = 0; i < expected.size(); ++i) ASSERT_NEAR(c.data()[i], expected[i], 1e-12);
  }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[4x2]"), std::string::npos);
  }
}

// ---- conv2d ----

TEST(Conv2d, DeltaKernelIsIdentity) {
  RngStream rng(4, 1);
  Tensor x = random_tensor({1, 2, 5, 5}, rng);
  Tensor w = Tensor::zeros({2, 2, 3, 3});
  for (std::size_t c = 0; c < 2; ++c) w.mutable_data()[((c * 2 + c) * 3 + 1) * 3 + 1] = 1.0;
  Tensor y = conv2d(x, w, Tensor::zeros({2}), 1, 1);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(y.data()[i], x.data()[i]);
}

TEST(Conv2d, ZeroKernelGivesZero) {
  RngStream rng(5, 1);
  Tensor y = conv2d(random_tensor({2, 3, 6, 6}, rng), Tensor::zeros({4, 3, 3, 3}), Tensor::zeros({4}), 1, 1);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, BoxFilterOnRampMatchesWindowSum) {
  std::vector<double> ramp(25);
  std::iota(ramp.begin(), ramp.end(), 0.0);
  Tensor x = Tensor::from_data({1, 1, 5, 5}, ramp);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0 / 9.0);
  for (std::size_t pad : {0u, 1u}) {
    const auto expected = window_sum_conv(x, w, pad);
    Tensor y = conv2d(x, w, Tensor(), 1, pad);
    ASSERT_EQ(y.numel(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(y.data()[i], expected[i], 1e-12);
  }
  // Interior of the unpadded case is the window mean of a linear ramp: the center value.
  Tensor y = conv2d(x, w, Tensor(), 1, 0);
  EXPECT_NEAR(y.at({0, 0, 0, 0}), 6.0, 1e-12);
}

TEST(Conv2d, RandomInstancesMatchOracle) {
  RngStream rng(6, 1);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t c = 1 + rng.below(3), f = 1 + rng.below(3);
    const std::size_t k = 1 + 2 * rng.below(2);
    const std::size_t h = k + rng.below(6), wd = k + rng.below(6);
    const std::size_t pad = rng.below(2);
    Tensor x = random_tensor({2, c, h, wd}, rng);
    Tensor w = random_tensor({f, c, k, k}, rng);
    const auto expected = window_sum_conv(x, w, pad);
    Tensor y = conv2d(x, w, Tensor(), 1, pad);
    for (std::size_t i = 0; i < expected.size(); ++i) ASSERT_NEAR(y.data()[i], expected[i], 1e-12);
  }
}

TEST(Conv2d, PatchStrideTilesExactly) {
  Tensor y = conv2d(Tensor::zeros({1, 3, 32, 32}), Tensor::zeros({8, 3, 16, 16}), Tensor::zeros({8}), 16, 0);
  EXPECT_EQ(y.shape(), (Shape{1, 8, 2, 2}));
  EXPECT_THROW(conv2d(Tensor::zeros({1, 3, 30, 30}), Tensor::zeros({8, 3, 16, 16}), Tensor(), 16, 0),
               GeometryError);
}

// ---- max pool ----

TEST(MaxPool, ConstantImage) {
  Tensor y = max_pool2d(Tensor::full({1, 2, 4, 4}, 0.25), 2, 2);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 2, 2}));
  for (double v : y.data()) EXPECT_EQ(v, 0.25);
}

TEST(MaxPool, DistinctValuesMatchWindowScan) {
  const std::vector<double> v = {3, 1, 4, 15, 9, 2, 6, 5, 8, 7, 10, 0, 11, 13, 12, 14};
  Tensor y = max_pool2d(Tensor::from_data({1, 1, 4, 4}, v), 2, 2);
  std::vector<double> expected;
  for (std::size_t oy = 0; oy < 2; ++oy)
    for (std::size_t ox = 0; ox < 2; ++ox) {
      double m = -1e300;
      for (std::size_t ky = 0; ky < 2; ++ky)
        for (std::size_t kx = 0; kx < 2; ++kx) m = std::max(m, v[(2 * oy + ky) * 4 + 2 * ox + kx]);
      expected.push_back(m);
    }
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), expected);
  EXPECT_EQ(expected, (std::vector<double>{9, 15, 13, 14}));
}

TEST(MaxPool, UnitWindowIsIdentity) {
  RngStream rng(7, 1);
  Tensor x = random_tensor({2, 3, 5, 4}, rng);
  EXPECT_TRUE(bitwise_equal(max_pool2d(x, 1, 1).data(), x.data()));
}

TEST(MaxPool, TieRoutesGradientToFirstElement) {
  Tensor x = Tensor::full({1, 1, 2, 2}, 1.0, true);
  sum(max_pool2d(x, 2, 2)).backward();
  EXPECT_EQ(x.grad(), (std::vector<double>{1, 0, 0, 0}));
}

TEST(MaxPool, WindowLargerThanInput) {
  EXPECT_THROW(max_pool2d(Tensor::zeros({1, 1, 2, 2}), 3, 1), GeometryError);
}

// ---- softmax ----

TEST(Softmax, UniformAndSingleton) {
  Tensor y = softmax(Tensor::zeros({3}));
  for (double v : y.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(softmax(Tensor::scalar(42.0)).item(), 1.0);
}

TEST(Softmax, MatchesExtendedPrecisionOracle) {
  Tensor y = softmax(Tensor::from_data({3}, {1, 2, 3}));
  long double total = 0.0L;
  for (int i = 1; i <= 3; ++i) total += std::exp(static_cast<long double>(i));
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(y.data()[i], static_cast<double>(std::exp(static_cast<long double>(i + 1)) / total), 1e-15);
  }
  const double frozen[] = {0.090031, 0.244728, 0.665241};
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(y.data()[i], frozen[i], 1e-5);
}

TEST(Softmax, StableForLargeMagnitudes) {
  RngStream rng(8, 1);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor y = softmax(random_tensor({4, 7}, rng, -1e3, 1e3));
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        const double v = y.at({r, j});
        ASSERT_TRUE(std::isfinite(v));
        ASSERT_GE(v, 0.0);
        total += v;
      }
      ASSERT_NEAR(total, 1.0, 1e-9);
    }
  }
}

TEST(MaskedSoftmax, MaskedEntriesAreExactlyZero) {
  const std::vector<std::uint8_t> mask = {1, 1, 0, 1, 1, 1, 0, 1, 1};
  RngStream rng(9, 1);
  Tensor x = random_tensor({2, 3, 3}, rng, -5, 5, true);
  Tensor y = masked_softmax(x, mask);
  for (std::size_t b = 0; b < 2; ++b) {
    EXPECT_EQ(y.at({b, 0, 2}), 0.0);
    EXPECT_EQ(y.at({b, 2, 0}), 0.0);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_NEAR(y.at({b, i, 0}) + y.at({b, i, 1}) + y.at({b, i, 2}), 1.0, 1e-12);
    }
  }
  Tensor w = random_tensor({2, 3, 3}, rng);
  sum(mul(y, w)).backward();
  const auto g = x.grad();
  EXPECT_EQ(g[2], 0.0);
  EXPECT_EQ(g[6], 0.0);
}

TEST(MaskedSoftmax, EmptyRowIsContractError) {
  const std::vector<std::uint8_t> mask = {1, 0, 0, 0};
  EXPECT_THROW(masked_softmax(Tensor::zeros({2, 2}), mask), ContractError);
}

// ---- layer norm ----

TEST(LayerNorm, ConstantSliceGivesZeros) {
  Tensor y = layer_norm(Tensor::full({2, 4}, 3.5), Tensor::full({4}, 1.0), Tensor::zeros({4}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, AlreadyNormalizedSlice) {
  Tensor y = layer_norm(Tensor::from_data({2}, {-1, 1}), Tensor::full({2}, 1.0), Tensor::zeros({2}));
  EXPECT_NEAR(y.data()[0], -1.0, 1e-2);
  EXPECT_NEAR(y.data()[1], 1.0, 1e-2);
}

TEST(LayerNorm, MatchesMomentOracle) {
  RngStream rng(10, 1);
  Tensor x = random_tensor({3, 6}, rng, -4, 4);
  Tensor gamma = random_tensor({6}, rng);
  Tensor beta = random_tensor({6}, rng);
  Tensor y = layer_norm(x, gamma, beta, 1e-5);
  for (std::size_t r = 0; r < 3; ++r) {
    long double mean = 0.0L, var = 0.0L;
    for (std::size_t j = 0; j < 6; ++j) mean += x.at({r, j});
    mean /= 6;
    for (std::size_t j = 0; j < 6; ++j) var += (x.at({r, j}) - mean) * (x.at({r, j}) - mean);
    var /= 6;
    for (std::size_t j = 0; j < 6; ++j) {
      const long double expected = gamma.data()[j] * (x.at({r, j}) - mean) / std::sqrt(var + 1e-5L) + beta.data()[j];
      EXPECT_NEAR(y.at({r, j}), static_cast<double>(expected), 1e-10);
    }
  }
}

TEST(LayerNorm, OutputMomentsProperty) {
  RngStream rng(11, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 2 + rng.below(30);
    Tensor x = random_tensor({3, d}, rng, -10, 10);
    Tensor y = layer_norm(x, Tensor::full({d}, 1.0), Tensor::zeros({d}));
    for (std::size_t r = 0; r < 3; ++r) {
      // Non-degenerate: input variance >= 0.1 keeps the eps bias below 1e-4.
      double in_mean = 0.0, in_var = 0.0;
      for (std::size_t j = 0; j < d; ++j) in_mean += x.at({r, j}) / static_cast<double>(d);
      for (std::size_t j = 0; j < d; ++j) in_var += (x.at({r, j}) - in_mean) * (x.at({r, j}) - in_mean);
      if (in_var / static_cast<double>(d) < 0.1) continue;
      double mean = 0.0, var = 0.0;
      for (std::size_t j = 0; j < d; ++j) mean += y.at({r, j});
      mean /= static_cast<double>(d);
      for (std::size_t j = 0; j < d; ++j) var += (y.at({r, j}) - mean) * (y.at({r, j}) - mean);
      var /= static_cast<double>(d);
      ASSERT_NEAR(mean, 0.0, 1e-8);
      ASSERT_NEAR(var, 1.0, 1e-4);
    }
  }
}

// ---- activations ----

TEST(Activation, Definitions) {
  Tensor r = relu(Tensor::from_data({3}, {-1, 0, 2}));
  EXPECT_EQ(std::vector<double>(r.data().begin(), r.data().end()), (std::vector<double>{0, 0, 2}));
  EXPECT_EQ(gelu(Tensor::scalar(0.0)).item(), 0.0);
  EXPECT_DOUBLE_EQ(leaky_relu(Tensor::scalar(-5.0), 0.2).item(), -1.0);
  EXPECT_DOUBLE_EQ(activation(Tensor::scalar(-5.0), {ActivationKind::kLeakyRelu, 0.2}).item(), -1.0);
  EXPECT_THROW(parse_activation("swish"), ConfigError);
  EXPECT_EQ(parse_activation("gelu"), ActivationKind::kGelu);
}

TEST(Activation, ReluSubgradientAtZeroIsZero) {
  Tensor x = Tensor::from_data({1}, {0.0}, true);
  sum(relu(x)).backward();
  EXPECT_EQ(x.grad()[0], 0.0);
}

// ---- dropout ----

TEST(Dropout, EvalAndZeroRateAreIdentity) {
  RngStream rng(12, 1);
  Tensor x = random_tensor({4, 5}, rng);
  EXPECT_TRUE(bitwise_equal(dropout(x, 0.5, false, rng).data(), x.data()));
  EXPECT_TRUE(bitwise_equal(dropout(x, 0.0, true, rng).data(), x.data()));
  EXPECT_TRUE(bitwise_equal(dropout(x, 0.0, false, rng).data(), x.data()));
}

TEST(Dropout, MonteCarloStatistics) {
  Tensor x = Tensor::full({100000}, 1.0);
  Tensor y = dropout(x, 0.5, true, RngStream(13, 7));
  std::size_t survivors = 0;
  double mean = 0.0;
  for (double v : y.data()) {
    survivors += v != 0.0;
    mean += v;
  }
  mean /= 1e5;
  EXPECT_NEAR(static_cast<double>(survivors) / 1e5, 0.5, 0.01);
  EXPECT_NEAR(mean, 1.0, 0.02);
}

TEST(Dropout, RateOutOfRange) {
  EXPECT_THROW(dropout(Tensor::zeros({2}), 1.0, true, RngStream()), ConfigError);
  EXPECT_THROW(dropout(Tensor::zeros({2}), -0.1, true, RngStream()), ConfigError);
}

// ---- backward ----

TEST(Backward, SumGivesOnes) {
  Tensor x = Tensor::zeros({2, 3}, true);
  sum(x).backward();
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, DisconnectedInputGetsZeros) {
  Tensor x = Tensor::full({3}, 2.0, true);
  Tensor y = Tensor::full({3}, 1.0, true);
  sum(y).backward();
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor x = Tensor::zeros({2}, true);
  EXPECT_THROW(scale(x, 2.0).backward(), ContractError);
}

TEST(Backward, MultipleUsesAccumulate) {
  Tensor x = Tensor::from_data({2}, {1.5, -2.0}, true);
  sum(add(mul(x, x), x)).backward();  // d/dx (x^2 + x) = 2x + 1
  EXPECT_EQ(x.grad(), (std::vector<double>{4.0, -3.0}));
}

TEST(Backward, NoGradGuardSkipsRecording) {
  Tensor x = Tensor::zeros({2}, true);
  NoGradGuard guard;
  EXPECT_FALSE(scale(x, 2.0).requires_grad());
}

// ---- finite differences ----

TEST(FiniteDifference, LinearAndQuadratic) {
  RngStream rng(14, 1);
  Tensor x = random_tensor({5}, rng);
  Tensor g = finite_difference_gradient([](const Tensor& t) { return sum(t); }, x);
  for (double v : g.data()) EXPECT_NEAR(v, 1.0, 1e-9);
  Tensor q = finite_difference_gradient([](const Tensor& t) { return scale(sum(mul(t, t)), 0.5); }, x);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(q.data()[i], x.data()[i], 1e-7);
}

TEST(FiniteDifference, ComposedChainAgreesWithBackward) {
  RngStream rng(15, 1);
  Tensor w = random_tensor({4, 3}, rng);
  Tensor gamma = random_tensor({3}, rng);
  Tensor beta = random_tensor({3}, rng);
  Tensor r = random_tensor({2, 3}, rng);
  const ScalarFn f = [&](const Tensor& x) {
    return sum(mul(softmax(layer_norm(matmul(x, w), gamma, beta)), r));
  };
  Tensor x = random_tensor({2, 4}, rng, -1, 1, true);
  f(x).backward();
  Tensor numeric = finite_difference_gradient(f, x);
  const auto result = compare_gradients(x.grad(), numeric.data());
  EXPECT_TRUE(result.passed(1e-4)) << result.max_rel_error;
}

TEST(Determinism, SeededGraphRerunsBitwise) {
  auto run = [] {
    RngStream rng(16, 1);
    Tensor x = random_tensor({2, 1, 6, 6}, rng, -1, 1, true);
    Tensor w = random_tensor({3, 1, 3, 3}, rng, -1, 1, true);
    Tensor h = dropout(gelu(conv2d(x, w, Tensor(), 1, 1)), 0.3, true, rng.child(9));
    Tensor loss = sum(softmax(reshape(max_pool2d(h, 2, 2), {2, 27})));
    loss.backward();
    std::vector<double> out(h.data().begin(), h.data().end());
    const auto gx = x.grad();
    const auto gw = w.grad();
    out.insert(out.end(), gx.begin(), gx.end());
    out.insert(out.end(), gw.begin(), gw.end());
    return out;
  };
  EXPECT_TRUE(bitwise_equal(run(), run()));
}

TEST(Rng, StreamsAreReproducibleAndIndependent) {
  RngStream a(5, 1), b(5, 1), c(5, 2);
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    EXPECT_EQ(va, b.next_u64());
    EXPECT_NE(va, c.next_u64());
  }
  RngStream d(5, 1);
  EXPECT_EQ(d.at(3), RngStream(5, 1).at(3));
  EXPECT_NE(d.child("x").stream_id(), d.child("y").stream_id());
}
