#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "sslprobe/batchnorm.hpp"

using namespace sslprobe;

namespace {

Batch random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0, double offset = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(offset, scale);
  Batch b(rows, cols);
  for (auto& v : b.values) v = normal(rng);
  return b;
}

}  // namespace

TEST(BatchNorm, TrainModeMatchesStandardizeOracle) {
  const auto x = random_batch(17, 5, 1, 3.0, 2.0);
  BatchNormState s(5, 1e-5);
  const auto out = batchnorm_forward(s, x, BnMode::train);
  const auto expect = oracle::standardize(x.values, 17, 5, 1e-5);
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(out.values[i], expect[i], 1e-12);
}

TEST(BatchNorm, OutputHasZeroMeanUnitVariance) {
  const auto x = random_batch(64, 3, 2, 10.0, -5.0);
  const auto out = batchnorm_forward(BatchNormState(3, 0.0), x, BnMode::train);
  for (std::size_t j = 0; j < 3; ++j) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 64; ++i) m += out(i, j);
    m /= 64;
    for (std::size_t i = 0; i < 64; ++i) v += (out(i, j) - m) * (out(i, j) - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 64, 1.0, 1e-12);
  }
}

TEST(BatchNorm, FirstUpdateSeedsRunningStats) {
  Batch x(2, 1, {1.0, 3.0});
  const auto r = apply_batchnorm(BatchNormState(1), x, BnMode::train);
  EXPECT_TRUE(r.state.seeded);
  EXPECT_DOUBLE_EQ(r.state.running_mean[0], 2.0);
  EXPECT_DOUBLE_EQ(r.state.running_var[0], 1.0);  // population variance

  Batch y(2, 1, {5.0, 5.0});
  const auto r2 = apply_batchnorm(r.state, y, BnMode::train);
  EXPECT_DOUBLE_EQ(r2.state.running_mean[0], 0.9 * 2.0 + 0.1 * 5.0);
  EXPECT_DOUBLE_EQ(r2.state.running_var[0], 0.9 * 1.0);
}

TEST(BatchNorm, EvalModeUsesRunningStatsAndLeavesStateAlone) {
  BatchNormState s(2, 0.0);
  s.running_mean = {1.0, -1.0};
  s.running_var = {4.0, 0.25};
  s.seeded = true;
  Batch x(1, 2, {3.0, 0.0});
  const auto r = apply_batchnorm(s, x, BnMode::eval);
  EXPECT_DOUBLE_EQ(r.output(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(r.output(0, 1), 2.0);
  EXPECT_EQ(r.state.running_mean, s.running_mean);
  EXPECT_EQ(r.state.running_var, s.running_var);
}

TEST(BatchNorm, ConstantColumnWithZeroEpsilonGivesZero) {
  Batch x(3, 2, {7, 1, 7, 2, 7, 3});
  const auto out = batchnorm_forward(BatchNormState(2, 0.0), x, BnMode::train);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(out(i, 0), 0.0);
    EXPECT_TRUE(std::isfinite(out(i, 1)));
  }
}

TEST(BatchNorm, SingleRowTrainBatchIsRejected) {
  Batch x(1, 3, {1, 2, 3});
  try {
    batchnorm_forward(BatchNormState(3), x, BnMode::train);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate);
  }
}

TEST(BatchNorm, AffineInvarianceWithZeroEpsilon) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> log_a(-2, 2), b(-50, 50);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_batch(32, 8, rng());
    Batch y = x;
    for (std::size_t j = 0; j < 8; ++j) {
      const double a = std::pow(10.0, log_a(rng)), shift = b(rng);
      for (std::size_t i = 0; i < 32; ++i) y(i, j) = a * x(i, j) + shift;
    }
    const BatchNormState s(8, 0.0);
    const auto ox = batchnorm_forward(s, x, BnMode::train);
    const auto oy = batchnorm_forward(s, y, BnMode::train);
    for (std::size_t i = 0; i < ox.values.size(); ++i) EXPECT_NEAR(ox.values[i], oy.values[i], 1e-6);
  }
}

TEST(BatchNorm, FrozenAffineIsIdentity) {
  EXPECT_EQ(BatchNormState::gamma(), 1.0);
  EXPECT_EQ(BatchNormState::beta(), 0.0);
}

TEST(BatchNorm, ShapeMismatchAndBadConfig) {
  EXPECT_THROW(batchnorm_forward(BatchNormState(2), Batch(3, 3), BnMode::train), Error);
  BatchNormState bad(2, -1.0);
  EXPECT_THROW(bad.validate(), Error);
  BatchNormState bad_momentum(2, 1e-5, 0.0);
  EXPECT_THROW(bad_momentum.validate(), Error);
}
