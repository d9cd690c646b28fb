#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "vat/correlation.hpp"
#include "vat/oracles.hpp"

using vat::InputError;

namespace {

// Grid-valued vectors with heavy ties, the shape of real shift trajectories.
std::vector<double> grid_vector(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> level(-4, 4);
  std::vector<double> v(n);
  for (auto& x : v) x = 0.5 * level(rng);
  return v;
}

}  // namespace

TEST(AverageRanks, TiesShareMeanRank) {
  const std::vector<double> x = {10, 20, 20, 5};
  EXPECT_EQ(vat::average_ranks(x), (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Spearman, ComonotoneAndAntitone) {
  const std::vector<double> x = {1, 2, 3};
  EXPECT_EQ(vat::spearman(x, std::vector<double>{10, 20, 30}).value, 1.0);
  EXPECT_EQ(vat::spearman(x, std::vector<double>{3, 2, 1}).value, -1.0);
}

TEST(Spearman, AverageRankTies) {
  // Ranks by hand: (1, 2.5, 2.5, 4) for both inputs, so rho = 1.
  const std::vector<double> x = {1, 2, 2, 4};
  const std::vector<double> y = {1, 3, 3, 4};
  EXPECT_NEAR(vat::spearman(x, y).value, 1.0, 1e-15);
  EXPECT_NEAR(vat::oracle::oracle_spearman(x, y), 1.0, 1e-15);
}

TEST(Spearman, ConstantInputIsFlaggedZero) {
  const auto c = vat::spearman(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3});
  EXPECT_TRUE(c.constant);
  EXPECT_EQ(c.value, 0.0);
}

TEST(Spearman, Errors) {
  EXPECT_THROW(vat::spearman(std::vector<double>{1, 2}, std::vector<double>{1}), InputError);
  EXPECT_THROW(vat::spearman(std::vector<double>{1}, std::vector<double>{1}), InputError);
}

TEST(Spearman, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<std::size_t> len(2, 40);
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = len(rng);
    auto x = grid_vector(rng, n);
    const auto y = grid_vector(rng, n);
    const double before = vat::spearman(x, y).value;
    for (auto& v : x) v = v * v * v + v;
    EXPECT_EQ(vat::spearman(x, y).value, before);
  }
}

TEST(Kendall, Examples) {
  const std::vector<double> x = {1, 2, 3};
  EXPECT_EQ(vat::kendall(x, x).value, 1.0);
  EXPECT_EQ(vat::kendall(x, std::vector<double>{3, 2, 1}).value, -1.0);
  EXPECT_EQ(vat::oracle::oracle_kendall(std::vector<double>{1, 2}, std::vector<double>{2, 1}), -1.0);
}

TEST(Kendall, TauBWithTies) {
  // Pair enumeration by hand: 4 concordant, 0 discordant, one pair tied only
  // in x and one only in y, so tau_b = 4 / sqrt(5 * 5).
  const std::vector<double> x = {1, 1, 2, 3};
  const std::vector<double> y = {1, 2, 2, 3};
  EXPECT_NEAR(vat::kendall(x, y).value, 0.8, 1e-15);
  EXPECT_NEAR(vat::oracle::oracle_kendall(x, y), 0.8, 1e-15);
}

TEST(Kendall, ConstantInputIsFlaggedZero) {
  const auto c = vat::kendall(std::vector<double>{1, 2, 3}, std::vector<double>{0, 0, 0});
  EXPECT_TRUE(c.constant);
  EXPECT_EQ(c.value, 0.0);
}

TEST(Correlation, AgreesWithOraclesOnRandomGridInputs) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> len(2, 50);
  for (int trial = 0; trial < 500; ++trial) {
    const auto n = len(rng);
    const auto x = grid_vector(rng, n);
    const auto y = grid_vector(rng, n);
    const auto s = vat::spearman(x, y);
    const auto k = vat::kendall(x, y);
    EXPECT_NEAR(s.value, vat::oracle::oracle_spearman(x, y), 1e-12);
    EXPECT_NEAR(k.value, vat::oracle::oracle_kendall(x, y), 1e-12);
    EXPECT_LE(std::abs(s.value), 1.0);
    EXPECT_LE(std::abs(k.value), 1.0);
  }
}

TEST(Correlation, SignAgreementOnStrictlyMonotonePairs) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(20), up(20), down(20);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = normal(rng);
      up[i] = std::exp(x[i]);
      down[i] = -x[i] * 3.0;
    }
    EXPECT_GT(vat::spearman(x, up).value, 0.0);
    EXPECT_GT(vat::kendall(x, up).value, 0.0);
    EXPECT_LT(vat::spearman(x, down).value, 0.0);
    EXPECT_LT(vat::kendall(x, down).value, 0.0);
  }
}
