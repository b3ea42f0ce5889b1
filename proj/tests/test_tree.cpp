#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "properties.hpp"
#include "slm/generators.hpp"
#include "slm/tree.hpp"

namespace {

slm::TreeParams small_params() {
  slm::TreeParams tp;
  tp.max_depth = 5;
  tp.min_samples = 10;
  return tp;
}

// Nodes visited by sample i of `ds`, root first.
std::vector<std::size_t> path_of(const slm::Tree& t, std::span<const double> x) {
  std::vector<double> z;
  for (auto d : t.subspace) z.push_back(x[d]);
  std::vector<std::size_t> path = {0};
  while (!t.nodes[path.back()].is_leaf()) {
    const auto& n = t.nodes[path.back()];
    const auto key = slm::cell_key(n.splits, z);
    bool found = false;
    for (const auto& [k, child] : n.children)
      if (k == key) {
        path.push_back(child);
        found = true;
      }
    if (!found) return {};
  }
  return path;
}

slm::Dataset tiny_regression(std::vector<double> y) {
  slm::Dataset ds;
  ds.task = slm::Task::regression;
  ds.features = slm::Matrix(y.size(), 2);
  for (std::size_t i = 0; i < y.size(); ++i) ds.features(i, 0) = ds.features(i, 1) = 1.0;
  ds.values = std::move(y);
  return ds;
}

}  // namespace

TEST(TreeParams, Validation) {
  slm::TreeParams tp;
  EXPECT_NO_THROW(tp.validate());
  tp.projection.q_max = 32;
  EXPECT_THROW(tp.validate(), slm::InvalidArgument);
  tp = {};
  tp.min_samples = 1;
  EXPECT_THROW(tp.validate(), slm::InvalidArgument);
  tp = {};
  tp.max_depth = 0;
  EXPECT_THROW(tp.validate(), slm::InvalidArgument);
  tp = {};
  tp.bins = 1;
  EXPECT_THROW(tp.validate(), slm::InvalidArgument);
}

TEST(BuildTree, StructureInvariants) {
  const auto ds = slm::gen_moons(4, 100, 0.2, 3);
  const auto tp = small_params();
  slm::Rng rng(1);
  const auto t = slm::build_tree(ds, tp, rng);
  ASSERT_FALSE(t.nodes.empty());
  EXPECT_EQ(t.root().depth, 0u);
  EXPECT_EQ(t.root().n_samples, ds.size());
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    const auto& n = t.nodes[i];
    EXPECT_LE(n.depth, tp.max_depth);
    if (n.is_leaf()) {
      EXPECT_TRUE(n.children.empty());
      EXPECT_EQ(std::accumulate(n.histogram.begin(), n.histogram.end(), std::size_t{0}), n.n_samples);
      continue;
    }
    EXPECT_GE(n.n_samples, tp.min_samples);
    EXPECT_LE(n.splits.size(), tp.projection.q_max);
    EXPECT_GE(n.children.size(), 2u);
    std::size_t below = 0;
    for (std::size_t c = 0; c < n.children.size(); ++c) {
      if (c > 0) {
        EXPECT_LT(n.children[c - 1].first, n.children[c].first);
      }
      EXPECT_GT(n.children[c].second, i);  // preorder
      EXPECT_EQ(t.nodes[n.children[c].second].depth, n.depth + 1);
      below += t.nodes[n.children[c].second].n_samples;
    }
    EXPECT_EQ(below, n.n_samples);
    for (const auto& s : n.splits) {
      double norm = 0.0;
      for (double u : s.unit) norm += u * u;
      EXPECT_NEAR(norm, 1.0, 1e-12);
    }
  }
}

TEST(BuildTree, TrainingSamplesFollowTrainedCells) {
  const auto ds = slm::gen_circle_and_ring(100, 0.2, 4);
  slm::Rng rng(2);
  const auto t = slm::build_tree(ds, small_params(), rng);
  std::map<std::size_t, std::size_t> per_leaf;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto path = path_of(t, ds.features.row(i));
    ASSERT_FALSE(path.empty()) << "sample " << i << " hit an untrained cell";
    EXPECT_EQ(path.back(), slm::leaf_index(t, ds.features.row(i)));
    ++per_leaf[path.back()];
  }
  for (const auto& [leaf, count] : per_leaf) EXPECT_EQ(count, t.nodes[leaf].n_samples);
}

TEST(BuildTree, SplitLossBelowParentLoss) {
  const auto ds = slm::gen_moons(2, 150, 0.3, 5);
  slm::Rng rng(3);
  const auto t = slm::build_tree(ds, small_params(), rng);
  std::vector<std::vector<std::size_t>> rows_at(t.nodes.size());
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (auto n : path_of(t, ds.features.row(i))) rows_at[n].push_back(i);
  const auto target = slm::TargetView::classification(ds.labels, ds.num_classes);
  std::size_t internal = 0;
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    const auto& n = t.nodes[i];
    if (n.is_leaf()) continue;
    ++internal;
    std::vector<std::vector<std::size_t>> cells;
    for (const auto& c : n.children) cells.push_back(rows_at[c.second]);
    const double parent = slm::unsplit_loss(target, rows_at[i]);
    EXPECT_LT(n.splits.front().loss, parent);
    EXPECT_LE(slm::partition_loss(target, cells), parent + 1e-12);
  }
  EXPECT_GT(internal, 0u);
}

TEST(BuildTree, SameSeedSameTree) {
  const auto ds = slm::gen_moons(2, 100, 0.3, 6);
  slm::TreeParams tp = small_params();
  tp.projection.a_int = 30.0;  // sampled search
  slm::Rng a(11), b(11), c(12);
  const auto ta = slm::build_tree(ds, tp, a);
  EXPECT_EQ(ta, slm::build_tree(ds, tp, b));
  const auto tc = slm::build_tree(ds, tp, c);
  EXPECT_FALSE(ta == tc);
}

TEST(BuildTree, PureNodeIsLeaf) {
  auto ds = slm::gen_moons(2, 20, 0.0, 7);
  for (auto& y : ds.labels) y = 1;
  slm::Rng rng(1);
  const auto t = slm::build_tree(ds, slm::TreeParams{}, rng);
  ASSERT_EQ(t.nodes.size(), 1u);
  const auto p = slm::predict(t, ds.features.row(0));
  EXPECT_EQ(p.label, 1);
  EXPECT_DOUBLE_EQ(p.probabilities[1], 1.0);
}

TEST(BuildTree, DepthOneStump) {
  const auto ds = slm::gen_moons(2, 50, 0.2, 8);
  slm::TreeParams tp;
  tp.max_depth = 1;
  slm::Rng rng(1);
  const auto t = slm::build_tree(ds, tp, rng);
  const auto s = slm::tree_stats(t);
  EXPECT_EQ(s.depth, 1u);
  EXPECT_EQ(s.leaves, t.nodes.size() - 1);
}

TEST(BuildTree, MinLossStopsSplitting) {
  const auto ds = slm::gen_moons(2, 50, 0.2, 9);
  slm::TreeParams tp;
  tp.min_loss = 10.0;  // above ln 2
  slm::Rng rng(1);
  EXPECT_EQ(slm::build_tree(ds, tp, rng).nodes.size(), 1u);
}

TEST(BuildTree, RegressionLeafIsMean) {
  const auto ds = tiny_regression({1.0, 2.0, 3.0});
  slm::TreeParams tp;
  slm::Rng rng(1);
  const auto t = slm::build_tree(ds, tp, rng);
  ASSERT_EQ(t.nodes.size(), 1u);  // constant features cannot split
  EXPECT_DOUBLE_EQ(slm::predict(t, ds.features.row(0)).value, 2.0);
}

TEST(BuildTree, RegressionReducesError) {
  const auto ds = slm::gen_friedman(1, 400, 10, 3);
  slm::TreeParams tp;
  tp.max_depth = 6;
  tp.projection.d0 = 5;
  slm::Rng rng(1);
  const auto t = slm::build_tree(ds, tp, rng);
  EXPECT_EQ(t.subspace.size(), 5u);
  EXPECT_EQ(t.task, slm::Task::regression);
  double mean = 0.0;
  for (double v : ds.values) mean += v;
  mean /= static_cast<double>(ds.size());
  double sse_tree = 0.0, sse_mean = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double p = slm::predict(t, ds.features.row(i)).value;
    sse_tree += (p - ds.values[i]) * (p - ds.values[i]);
    sse_mean += (mean - ds.values[i]) * (mean - ds.values[i]);
  }
  EXPECT_LT(sse_tree, 0.5 * sse_mean);
}

TEST(SelectSubspace, KeepsMostDiscriminantDims) {
  auto ds = slm::gen_friedman(1, 500, 10, 4);
  const auto dims = slm::select_subspace(ds, 4, 16, slm::LossKind::mse);
  ASSERT_EQ(dims.size(), 4u);
  EXPECT_TRUE(std::is_sorted(dims.begin(), dims.end()));
  for (auto d : dims) EXPECT_LT(d, 5u) << "irrelevant column " << d << " retained";
  EXPECT_EQ(slm::select_subspace(ds, 0, 16, slm::LossKind::mse).size(), 10u);
  EXPECT_EQ(slm::select_subspace(ds, 99, 16, slm::LossKind::mse).size(), 10u);
}

TEST(Routing, UnseenCellFallsBackToNearestKey) {
  slm::Tree t;
  t.num_classes = 2;
  t.num_features = 2;
  t.subspace = {0, 1};
  slm::TreeNode root;
  root.splits = {{{1, 0}, {1.0, 0.0}, 0.0, 0.0}, {{0, 1}, {0.0, 1.0}, 0.0, 0.0}};
  root.children = {{0b00, 1}, {0b11, 2}};
  root.n_samples = 10;
  slm::TreeNode a, b;
  a.depth = b.depth = 1;
  a.n_samples = 3;
  a.histogram = {3, 0};
  b.n_samples = 7;
  b.histogram = {0, 7};
  t.nodes = {root, a, b};
  EXPECT_EQ(slm::leaf_index(t, std::vector<double>{-1.0, -1.0}), 1u);
  EXPECT_EQ(slm::leaf_index(t, std::vector<double>{1.0, 1.0}), 2u);
  // Key 0b01 and 0b10 are one bit from both children: the larger child wins.
  EXPECT_EQ(slm::leaf_index(t, std::vector<double>{1.0, -1.0}), 2u);
  t.nodes[1].n_samples = 8;
  EXPECT_EQ(slm::leaf_index(t, std::vector<double>{-1.0, 1.0}), 1u);
}

TEST(Routing, TotalOverRandomInputs) {
  const auto ds = slm::gen_moons(4, 80, 0.2, 10);
  slm::TreeParams tp = small_params();
  tp.projection.q_max = 3;
  tp.projection.theta_minimax = 0.95;
  slm::Rng rng(1);
  const auto t = slm::build_tree(ds, tp, rng);
  slm::Rng probe(2);
  for (int i = 0; i < 2000; ++i) {
    const std::vector<double> x = {probe.normal(0.0, 20.0), probe.normal(0.0, 20.0)};
    const auto leaf = slm::leaf_index(t, x);
    ASSERT_LT(leaf, t.nodes.size());
    EXPECT_TRUE(t.nodes[leaf].is_leaf());
    const auto p = slm::predict(t, x);
    EXPECT_NEAR(std::accumulate(p.probabilities.begin(), p.probabilities.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(Routing, RejectsBadInput) {
  const auto ds = slm::gen_moons(2, 20, 0.2, 11);
  slm::Rng rng(1);
  const auto t = slm::build_tree(ds, slm::TreeParams{}, rng);
  EXPECT_THROW(slm::leaf_index(t, std::vector<double>{1.0}), slm::InvalidArgument);
  EXPECT_THROW(slm::leaf_index(t, std::vector<double>{1.0, NAN}), slm::InvalidArgument);
}

namespace {

slm::Tree with_partitions(std::size_t partitions, std::size_t d0) {
  slm::Tree t;
  t.subspace.resize(d0);
  for (std::size_t i = 0; i < partitions; ++i) {
    slm::TreeNode n;
    n.splits.resize(1);
    t.nodes.push_back(n);
  }
  t.nodes.emplace_back();
  return t;
}

}  // namespace

TEST(ParamCount, FixturesFromModelSizeAccounting) {
  EXPECT_EQ(slm::param_count(with_partitions(13, 2)), 39u);
  EXPECT_EQ(slm::param_count(with_partitions(4, 4)), 20u);
  EXPECT_EQ(slm::param_count(with_partitions(0, 7)), 0u);
}

TEST(ParamCount, CountsEveryHyperplane) {
  const auto ds = slm::gen_moons(2, 100, 0.3, 12);
  slm::TreeParams tp = small_params();
  tp.projection.q_max = 2;
  slm::Rng rng(1);
  const auto t = slm::build_tree(ds, tp, rng);
  const auto s = slm::tree_stats(t);
  EXPECT_EQ(slm::param_count(t), s.partitions * (t.subspace.size() + 1));
  std::size_t per_level = 0;
  for (auto c : s.level_counts) per_level += c;
  EXPECT_EQ(per_level, t.nodes.size());
}

TEST(CartDegeneration, RestrictedTreeMatchesAxisAlignedReference) {
  const auto o = props::cart_degeneration(100, 301);
  EXPECT_TRUE(o.ok()) << o.first_failure;
}
