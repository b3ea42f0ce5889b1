#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "properties.hpp"
#include "slm/ensemble.hpp"
#include "slm/generators.hpp"
#include "slm/split.hpp"

namespace {

// One-leaf regression tree predicting `value` everywhere.
slm::Tree constant_tree(double value, std::size_t features = 2) {
  slm::Tree t;
  t.task = slm::Task::regression;
  t.num_features = features;
  for (std::size_t j = 0; j < features; ++j) t.subspace.push_back(j);
  slm::TreeNode leaf;
  leaf.value = value;
  leaf.n_samples = 1;
  t.nodes = {leaf};
  return t;
}

slm::Tree constant_classifier(int label, int k) {
  slm::Tree t;
  t.num_classes = k;
  t.num_features = 2;
  t.subspace = {0, 1};
  slm::TreeNode leaf;
  leaf.histogram.assign(static_cast<std::size_t>(k), 0);
  leaf.histogram[static_cast<std::size_t>(label)] = 5;
  leaf.n_samples = 5;
  t.nodes = {leaf};
  return t;
}

slm::ForestParams forest_params(std::uint64_t seed) {
  slm::ForestParams fp;
  fp.n_trees = 7;
  fp.seed = seed;
  fp.tree.max_depth = 4;
  fp.tree.min_samples = 10;
  fp.tree.projection.a_int = 25;
  return fp;
}

slm::BoostParams boost_params(std::size_t rounds) {
  slm::BoostParams bp;
  bp.n_rounds = rounds;
  bp.seed = 5;
  bp.tree.max_depth = 3;
  bp.tree.min_samples = 10;
  return bp;
}

const std::vector<double> kOrigin = {0.0, 0.0};

}  // namespace

TEST(Vote, MajorityAndShares) {
  const auto p = slm::detail::vote({0, 0, 1}, 2);
  EXPECT_EQ(p.label, 0);
  EXPECT_DOUBLE_EQ(p.probabilities[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(p.probabilities[1], 1.0 / 3.0);
}

TEST(Vote, TieGoesToSmallerClass) {
  EXPECT_EQ(slm::detail::vote({2, 1, 1, 2}, 3).label, 1);
}

TEST(Forest, ClassificationVoteOverMembers) {
  slm::EnsembleModel m;
  m.kind = slm::ModelKind::forest;
  m.num_classes = 2;
  m.num_features = 2;
  m.trees = {constant_classifier(0, 2), constant_classifier(0, 2), constant_classifier(1, 2)};
  const auto p = slm::predict_model(m, kOrigin);
  EXPECT_EQ(p.label, 0);
  EXPECT_DOUBLE_EQ(p.probabilities[0], 2.0 / 3.0);
}

TEST(Forest, RegressionMean) {
  slm::EnsembleModel m;
  m.kind = slm::ModelKind::forest;
  m.task = slm::Task::regression;
  m.num_features = 2;
  m.trees = {constant_tree(1.0), constant_tree(2.0), constant_tree(3.0)};
  EXPECT_DOUBLE_EQ(slm::predict_model(m, kOrigin).value, 2.0);
}

TEST(Forest, MemberOrderDoesNotMatter) {
  const auto ds = slm::gen_moons(4, 60, 0.2, 1);
  auto m = slm::fit_forest(ds, forest_params(3)).model;
  auto shuffled = m;
  std::reverse(shuffled.trees.begin(), shuffled.trees.end());
  std::rotate(shuffled.trees.begin(), shuffled.trees.begin() + 2, shuffled.trees.end());
  slm::Rng rng(9);
  for (int i = 0; i < 500; ++i) {
    const std::vector<double> x = {rng.uniform(-2.0, 7.0), rng.uniform(-2.0, 2.0)};
    const auto a = slm::predict_model(m, x);
    const auto b = slm::predict_model(shuffled, x);
    EXPECT_EQ(a.label, b.label);
    EXPECT_EQ(a.probabilities, b.probabilities);
  }
}

TEST(Forest, IndependentOfThreadCount) {
  const auto ds = slm::gen_circle_and_ring(80, 0.2, 2);
  auto fp = forest_params(4);
  fp.threads = 1;
  const auto one = slm::fit_forest(ds, fp);
  fp.threads = 5;
  const auto many = slm::fit_forest(ds, fp);
  EXPECT_EQ(one.model, many.model);
  ASSERT_EQ(one.curve.points.size(), many.curve.points.size());
  for (std::size_t i = 0; i < one.curve.points.size(); ++i)
    EXPECT_EQ(one.curve.points[i].train_metric, many.curve.points[i].train_metric);
}

TEST(Forest, MembersUseDerivedSeeds) {
  const auto ds = slm::gen_moons(2, 60, 0.3, 3);
  const auto fp = forest_params(8);
  const auto m = slm::fit_forest(ds, fp).model;
  ASSERT_EQ(m.trees.size(), fp.n_trees);
  for (std::size_t t = 0; t < fp.n_trees; ++t) {
    EXPECT_EQ(m.tree_seeds[t], slm::derive_seed(fp.seed, t));
    slm::Rng rng(m.tree_seeds[t]);
    EXPECT_EQ(m.trees[t], slm::build_tree(ds, fp.tree, rng));
  }
  // Sampled projections make the members differ.
  EXPECT_FALSE(m.trees[0] == m.trees[1]);
}

TEST(Forest, BaggingChangesMembers) {
  const auto ds = slm::gen_moons(2, 60, 0.3, 4);
  auto fp = forest_params(1);
  fp.tree.projection.a_int = 3;  // exhaustive search: only bagging can diversify
  const auto plain = slm::fit_forest(ds, fp).model;
  EXPECT_EQ(plain.trees[0], plain.trees[1]);
  fp.bagging = true;
  const auto bagged = slm::fit_forest(ds, fp).model;
  EXPECT_FALSE(bagged.trees[0] == bagged.trees[1]);
}

TEST(Forest, CurveHasOnePointPerTree) {
  const auto [train, test] = slm::train_test_split(slm::gen_moons(2, 100, 0.3, 5), {0.6, 1, true});
  const auto fit = slm::fit_forest(train, forest_params(2), &test);
  EXPECT_EQ(fit.curve.metric, "accuracy");
  ASSERT_EQ(fit.curve.points.size(), 7u);
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_EQ(fit.curve.points[i].index, i + 1);
    ASSERT_TRUE(fit.curve.points[i].holdout_metric.has_value());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i)
    acc += slm::predict_model(fit.model, test.features.row(i)).label == test.labels[i];
  EXPECT_DOUBLE_EQ(*fit.curve.points.back().holdout_metric, acc / static_cast<double>(test.size()));
}

TEST(Gradients, SquaredErrorAtZero) {
  const auto gh = slm::squared_error_grad(0.0, 3.0);
  EXPECT_DOUBLE_EQ(gh.g, -3.0);
  EXPECT_DOUBLE_EQ(gh.h, 1.0);
}

TEST(Gradients, LogisticAtZero) {
  const auto gh = slm::logistic_grad(0.0, 1.0);
  EXPECT_DOUBLE_EQ(gh.g, -0.5);
  EXPECT_DOUBLE_EQ(gh.h, 0.25);
}

TEST(Gradients, SoftmaxUniform) {
  const std::vector<double> s = {0.0, 0.0, 0.0, 0.0};
  const auto own = slm::softmax_grad(s, 2, 2);
  EXPECT_DOUBLE_EQ(own.g, 0.25 - 1.0);
  EXPECT_DOUBLE_EQ(own.h, 0.25 * 0.75);
  EXPECT_DOUBLE_EQ(slm::softmax_grad(s, 0, 2).g, 0.25);
}

TEST(Gradients, StableAtExtremeScores) {
  EXPECT_DOUBLE_EQ(slm::sigmoid(-800.0), 0.0);
  EXPECT_DOUBLE_EQ(slm::sigmoid(800.0), 1.0);
  EXPECT_TRUE(std::isfinite(slm::logistic_loss(800.0, 0.0)));
  EXPECT_NEAR(slm::logistic_loss(800.0, 0.0), 800.0, 1e-9);
  const std::vector<double> s = {1000.0, 0.0};
  const auto p = slm::softmax(s);
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_NEAR(slm::softmax_loss(s, 1), 1000.0, 1e-9);
}

TEST(Gradients, FiniteDifferenceCheck) {
  const auto o = props::gradient_check(1000, 401);
  EXPECT_TRUE(o.ok()) << o.first_failure;
}

TEST(Boost, ScoresAreAdditive) {
  slm::EnsembleModel m;
  m.kind = slm::ModelKind::boost;
  m.task = slm::Task::regression;
  m.num_features = 2;
  m.learning_rate = 0.5;
  m.base_score = 1.0;
  m.trees = {constant_tree(2.0)};
  EXPECT_DOUBLE_EQ(slm::predict_model(m, kOrigin).value, 1.0 + 0.5 * 2.0);
  m.trees.push_back(constant_tree(-6.0));
  EXPECT_DOUBLE_EQ(slm::predict_model(m, kOrigin).value, 1.0 + 0.5 * (2.0 - 6.0));
}

TEST(Boost, OneRoundIsHalfNewtonStep) {
  // Constant features: one leaf holding -G/H = mean(y) from base score 0.
  slm::Dataset ds;
  ds.task = slm::Task::regression;
  ds.features = slm::Matrix(4, 1);
  ds.values = {1.0, 2.0, 3.0, 6.0};
  slm::BoostParams bp = boost_params(1);
  bp.learning_rate = 0.5;
  const auto fit = slm::fit_boost(ds, bp);
  ASSERT_EQ(fit.model.trees.size(), 1u);
  EXPECT_DOUBLE_EQ(fit.model.trees[0].root().value, 3.0);
  EXPECT_DOUBLE_EQ(slm::predict_model(fit.model, std::vector<double>{0.0}).value, 1.5);
}

TEST(Boost, CurveHasOneRowPerRound) {
  const auto ds = slm::gen_moons(2, 60, 0.3, 6);
  const auto fit = slm::fit_boost(ds, boost_params(5));
  EXPECT_EQ(fit.curve.metric, "logloss");
  ASSERT_EQ(fit.curve.points.size(), 5u);
  std::ostringstream os;
  slm::export_learning_curve(fit.curve, os);
  std::size_t rows = 0;
  std::string line;
  std::istringstream in(os.str());
  while (std::getline(in, line)) rows += !line.empty() && line[0] != '#' && line.rfind("index", 0) != 0;
  EXPECT_EQ(rows, 5u);
}

TEST(Boost, TrainingLossNonIncreasing) {
  const auto ds = slm::gen_moons(2, 100, 0.3, 7);
  const auto fit = slm::fit_boost(ds, boost_params(40));
  for (std::size_t i = 1; i < fit.curve.points.size(); ++i)
    EXPECT_LE(fit.curve.points[i].train_metric, fit.curve.points[i - 1].train_metric + 1e-9) << "round " << i + 1;
}

TEST(Boost, MulticlassGrowsOneTreePerClass) {
  const auto ds = slm::gen_moons(4, 40, 0.2, 8);
  const auto bp = boost_params(3);
  const auto m = slm::fit_boost(ds, bp).model;
  EXPECT_EQ(m.trees_per_round, 4u);
  EXPECT_EQ(m.trees.size(), 12u);
  EXPECT_EQ(m.rounds(), 3u);
  for (std::size_t i = 0; i < m.trees.size(); ++i) EXPECT_EQ(m.tree_seeds[i], slm::derive_seed(bp.seed, i));
  slm::Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> x = {rng.uniform(-2.0, 7.0), rng.uniform(-2.0, 2.0)};
    const auto p = slm::predict_model(m, x);
    ASSERT_EQ(p.probabilities.size(), 4u);
    EXPECT_NEAR(std::accumulate(p.probabilities.begin(), p.probabilities.end(), 0.0), 1.0, 1e-12);
    EXPECT_EQ(p.label, std::max_element(p.probabilities.begin(), p.probabilities.end()) - p.probabilities.begin());
  }
}

TEST(Boost, BinaryUsesSingleLogit) {
  const auto ds = slm::gen_moons(2, 40, 0.3, 9);
  const auto m = slm::fit_boost(ds, boost_params(4)).model;
  EXPECT_EQ(m.trees_per_round, 1u);
  EXPECT_EQ(m.trees.size(), 4u);
  const auto scores = slm::boost_scores(m, ds.features.row(0));
  ASSERT_EQ(scores.size(), 1u);
  const auto p = slm::predict_model(m, ds.features.row(0));
  EXPECT_DOUBLE_EQ(p.probabilities[1], slm::sigmoid(scores[0]));
}

TEST(Boost, ClassicSplitsUseNewtonLeaves) {
  const auto ds = slm::gen_friedman(1, 200, 10, 2);
  auto bp = boost_params(10);
  bp.classic_splits = true;
  bp.tree.projection.d0 = 5;
  const auto fit = slm::fit_boost(ds, bp);
  EXPECT_EQ(fit.model.trees.front().params.loss, slm::LossKind::mse);
  EXPECT_LT(fit.curve.points.back().train_metric, fit.curve.points.front().train_metric);
}

TEST(Boost, RegressionImprovesOnMean) {
  const auto [train, test] = slm::train_test_split(slm::gen_friedman(1, 500, 10, 3), {0.6, 3, false});
  auto bp = boost_params(60);
  bp.tree.projection.d0 = 10;
  const auto m = slm::fit_boost(train, bp).model;
  double mean = 0.0;
  for (double v : train.values) mean += v;
  mean /= static_cast<double>(train.size());
  double sse = 0.0, sse_mean = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const double d = slm::predict_model(m, test.features.row(i)).value - test.values[i];
    sse += d * d;
    sse_mean += (mean - test.values[i]) * (mean - test.values[i]);
  }
  EXPECT_LT(sse, 0.3 * sse_mean);
}

TEST(Boost, NonFiniteLossRaisesTrainingError) {
  const auto ds = slm::gen_friedman(1, 50, 10, 4);
  auto bp = boost_params(2);
  bp.base_score = 1e300;
  try {
    slm::fit_boost(ds, bp);
    FAIL() << "expected TrainingError";
  } catch (const slm::TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("round 1"), std::string::npos) << e.what();
  }
}

TEST(Boost, ParameterValidation) {
  const auto ds = slm::gen_moons(2, 20, 0.3, 5);
  auto bp = boost_params(0);
  EXPECT_THROW(slm::fit_boost(ds, bp), slm::InvalidArgument);
  bp = boost_params(1);
  bp.learning_rate = 0.0;
  EXPECT_THROW(slm::fit_boost(ds, bp), slm::InvalidArgument);
  EXPECT_THROW(slm::predict_boost(slm::fit_boost(ds, boost_params(1)).model, std::vector<double>{1.0}),
               slm::InvalidArgument);
}

TEST(Boost, SameSeedSameModel) {
  const auto ds = slm::gen_circle_and_ring(50, 0.2, 6);
  auto bp = boost_params(5);
  bp.tree.projection.a_int = 20;
  EXPECT_EQ(slm::fit_boost(ds, bp).model, slm::fit_boost(ds, bp).model);
}

TEST(TreeModel, WrapsSingleTree) {
  const auto ds = slm::gen_moons(2, 50, 0.3, 7);
  slm::TreeParams tp;
  tp.max_depth = 4;
  const auto m = slm::fit_tree_model(ds, tp, 42);
  ASSERT_EQ(m.trees.size(), 1u);
  EXPECT_EQ(m.tree_seeds, std::vector<std::uint64_t>{42});
  slm::Rng rng(42);
  EXPECT_EQ(m.trees[0], slm::build_tree(ds, tp, rng));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto p = slm::predict_model(m, ds.features.row(i));
    EXPECT_NEAR(std::accumulate(p.probabilities.begin(), p.probabilities.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(ModelStats, SumsOverMembers) {
  slm::EnsembleModel m;
  slm::Tree a;
  a.subspace = {0, 1};
  a.nodes.resize(14);
  for (std::size_t i = 0; i < 13; ++i) a.nodes[i].splits.resize(1);
  slm::Tree b;
  b.subspace = {0, 1, 2, 3};
  b.nodes.resize(3);
  b.nodes[0].splits.resize(4);
  b.nodes[1].depth = b.nodes[2].depth = 1;
  m.trees = {a, b};
  EXPECT_EQ(slm::param_count(m), 39u + 20u);
  const auto s = slm::model_stats(m);
  EXPECT_EQ(s.trees, 2u);
  EXPECT_EQ(s.partitions, 17u);
  EXPECT_EQ(s.param_count, 59u);
  EXPECT_EQ(s.depth, 1u);
}

TEST(LearningCurve, ExportFormat) {
  slm::LearningCurve c;
  c.metric = "rmse";
  c.points = {{1, 2.5, 3.0}, {2, 1.25, 2.0}};
  std::ostringstream os;
  const std::vector<std::string> comments = {"model = slr-forest"};
  slm::export_learning_curve(c, os, comments);
  EXPECT_EQ(os.str(), "# model = slr-forest\n# metric rmse\nindex,train_metric,holdout_metric\n1,2.5,3\n2,1.25,2\n");
}
