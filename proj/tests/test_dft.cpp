#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "properties.hpp"
#include "slm/dft.hpp"
#include "slm/random.hpp"

namespace {

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), 0);
  return r;
}

}  // namespace

TEST(Thresholds, UniformBinBoundaries) {
  const auto t = slm::candidate_thresholds(0.0, 1.0, 4);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_DOUBLE_EQ(t[0], 0.25);
  EXPECT_DOUBLE_EQ(t[1], 0.5);
  EXPECT_DOUBLE_EQ(t[2], 0.75);
  EXPECT_EQ(slm::candidate_thresholds(-2.0, 6.0, 2), std::vector<double>{2.0});
}

TEST(Thresholds, ConstantColumnHasNone) {
  EXPECT_TRUE(slm::candidate_thresholds(3.0, 3.0, 16).empty());
  EXPECT_THROW(slm::candidate_thresholds(0.0, 1.0, 1), slm::InvalidArgument);
}

TEST(Entropy, NaturalLog) {
  const std::vector<int> even = {0, 1, 0, 1};
  EXPECT_NEAR(slm::entropy(even, 2), std::log(2.0), 1e-15);
  const std::vector<int> pure = {2, 2, 2};
  EXPECT_EQ(slm::entropy(pure, 3), 0.0);
  const std::vector<int> three = {0, 1, 2};
  EXPECT_NEAR(slm::entropy(three, 3), std::log(3.0), 1e-15);
  EXPECT_THROW(slm::entropy(std::vector<int>{}, 2), slm::InvalidArgument);
}

TEST(DftCost, SeparableColumnHasZeroLoss) {
  const std::vector<int> y = {0, 0, 1, 1};
  const auto rows = iota_rows(4);
  const auto col = slm::ProjectedColumn::from_values({0.0, 1.0, 2.0, 3.0});
  const auto e = slm::dft_cost(col, slm::TargetView::classification(y, 2), rows, 4);
  EXPECT_EQ(e.loss, 0.0);
  EXPECT_DOUBLE_EQ(e.threshold, 1.5);
  EXPECT_EQ(e.n_left, 2u);
  EXPECT_EQ(e.n_right, 2u);
}

TEST(DftCost, TiesGoToSmallestThreshold) {
  const std::vector<int> y = {0, 1};
  const auto rows = iota_rows(2);
  const auto e = slm::dft_cost(slm::ProjectedColumn::from_values({0.0, 10.0}), slm::TargetView::classification(y, 2),
                               rows, 10);
  EXPECT_EQ(e.loss, 0.0);
  EXPECT_DOUBLE_EQ(e.threshold, 1.0);
}

TEST(DftCost, ConstantColumnIsInfeasible) {
  const std::vector<int> y = {0, 1, 0};
  const auto rows = iota_rows(3);
  const auto e = slm::dft_cost(slm::ProjectedColumn::from_values({2.0, 2.0, 2.0}),
                               slm::TargetView::classification(y, 2), rows, 16);
  EXPECT_FALSE(e.feasible());
  EXPECT_EQ(e.loss, slm::kInfeasible);
}

TEST(DftCost, RejectsTooFewSamples) {
  const std::vector<int> y = {0};
  const std::vector<std::size_t> rows = {0};
  EXPECT_THROW(slm::dft_cost(slm::ProjectedColumn::from_values({1.0}), slm::TargetView::classification(y, 2), rows, 4),
               slm::InvalidArgument);
}

TEST(SplitLoss, ValueAtThresholdGoesRight) {
  const std::vector<int> y = {0, 1, 1};
  const auto rows = iota_rows(3);
  const auto col = slm::ProjectedColumn::from_values({0.0, 1.0, 2.0});
  const auto e = slm::split_loss(col, slm::TargetView::classification(y, 2), rows, 1.0);
  EXPECT_EQ(e.n_left, 1u);
  EXPECT_EQ(e.n_right, 2u);
  EXPECT_EQ(e.loss, 0.0);
  EXPECT_FALSE(slm::split_loss(col, slm::TargetView::classification(y, 2), rows, -5.0).feasible());
}

TEST(SplitLoss, MseIsWeightedVariance) {
  const std::vector<double> y = {1.0, 3.0, 10.0, 14.0};
  const auto rows = iota_rows(4);
  const auto col = slm::ProjectedColumn::from_values({0.0, 1.0, 2.0, 3.0});
  const auto e = slm::split_loss(col, slm::TargetView::regression(y), rows, 1.5);
  // Left {1,3} variance 1, right {10,14} variance 4.
  EXPECT_NEAR(e.loss, (2 * 1.0 + 2 * 4.0) / 4.0, 1e-12);
}

TEST(SplitLoss, ConstantTargetsGiveExactZero) {
  const std::vector<double> y(5, 1e8 + 0.1);
  const auto rows = iota_rows(5);
  const auto col = slm::ProjectedColumn::from_values({0.0, 1.0, 2.0, 3.0, 4.0});
  EXPECT_EQ(slm::dft_cost(col, slm::TargetView::regression(y), rows, 4).loss, 0.0);
  EXPECT_EQ(slm::unsplit_loss(slm::TargetView::regression(y), rows), 0.0);
}

TEST(SplitLoss, SecondOrderStructureScore) {
  const std::vector<double> g = {-1.0, -2.0, 3.0, 1.0};
  const std::vector<double> h = {1.0, 1.0, 2.0, 1.0};
  const double lambda = 0.5;
  const auto rows = iota_rows(4);
  const auto col = slm::ProjectedColumn::from_values({0.0, 1.0, 2.0, 3.0});
  const auto e = slm::split_loss(col, slm::TargetView::second_order(g, h, lambda), rows, 1.5);
  const double want = -(9.0 / 2.5) - (16.0 / 3.5);
  EXPECT_NEAR(e.loss, want, 1e-12);
  EXPECT_NEAR(slm::unsplit_loss(slm::TargetView::second_order(g, h, lambda), rows), -1.0 / 5.5, 1e-12);
}

TEST(NodeLoss, MatchesFamily) {
  const std::vector<int> y = {0, 0, 1, 1};
  const auto rows = iota_rows(4);
  EXPECT_NEAR(slm::node_loss(slm::TargetView::classification(y, 2), rows), std::log(2.0), 1e-15);
  const std::vector<double> v = {1.0, 2.0, 3.0, 4.0};
  EXPECT_NEAR(slm::node_loss(slm::TargetView::regression(v), rows), 1.25, 1e-12);
  // Identical Newton targets leave nothing to gain.
  const std::vector<double> g = {2.0, 4.0, 6.0, 8.0};
  const std::vector<double> h = {1.0, 2.0, 3.0, 4.0};
  EXPECT_NEAR(slm::node_loss(slm::TargetView::second_order(g, h, 0.0), rows), 0.0, 1e-12);
}

TEST(PartitionLoss, AgreesWithTwoWaySplit) {
  const std::vector<int> y = {0, 1, 1, 0, 2};
  const auto rows = iota_rows(5);
  const auto col = slm::ProjectedColumn::from_values({0.0, 1.0, 2.0, 3.0, 4.0});
  const auto t = slm::TargetView::classification(y, 3);
  const auto e = slm::split_loss(col, t, rows, 2.0);
  const std::vector<std::vector<std::size_t>> cells = {{0, 1}, {}, {2, 3, 4}};
  EXPECT_DOUBLE_EQ(slm::partition_loss(t, cells), e.loss);
}

TEST(RankFeatures, MostDiscriminantFirst) {
  slm::Matrix x(6, 3);
  const std::vector<int> y = {0, 0, 0, 1, 1, 1};
  for (std::size_t i = 0; i < 6; ++i) {
    x(i, 0) = 5.0;                              // constant
    x(i, 1) = static_cast<double>(i % 2);       // useless
    x(i, 2) = static_cast<double>(i);           // separates
  }
  const auto ranked = slm::rank_features(x, iota_rows(6), slm::TargetView::classification(y, 2), 8);
  ASSERT_EQ(ranked.size(), 3u);
  EXPECT_EQ(ranked[0].dim, 2u);
  EXPECT_EQ(ranked[1].dim, 1u);
  EXPECT_EQ(ranked[2].dim, 0u);
  EXPECT_FALSE(ranked[2].cost.feasible());
}

TEST(Project, DimensionChecked) {
  slm::Matrix x(2, 3);
  const std::vector<double> a = {1.0, 0.0};
  EXPECT_THROW(slm::project(a, x), slm::InvalidArgument);
}

TEST(DftOracle, EntropyExactOnRandomInstances) {
  const auto o = props::dft_entropy_oracle(500, 101);
  EXPECT_TRUE(o.ok()) << o.first_failure;
}

TEST(DftOracle, MseOnRandomInstances) {
  const auto o = props::dft_mse_oracle(500, 102);
  EXPECT_TRUE(o.ok()) << o.first_failure;
}

TEST(DftOracle, SubsetRowsMatchOracle) {
  // Node rows index into the full target array.
  slm::Rng rng(103);
  std::vector<int> y(50);
  for (auto& l : y) l = static_cast<int>(rng.below(3));
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < 50; i += 3) rows.push_back(i);
  std::vector<double> v;
  std::vector<int> sub;
  for (auto r : rows) {
    v.push_back(rng.normal());
    sub.push_back(y[r]);
  }
  const auto got = slm::dft_cost(slm::ProjectedColumn::from_values(v), slm::TargetView::classification(y, 3), rows, 7);
  const auto want = oracle::entropy_scan(v, sub, 3, 7);
  EXPECT_EQ(got.loss, want.loss);
  EXPECT_EQ(got.threshold, want.threshold);
}
