#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <future>
#include <ostream>
#include <optional>
#include <utility>
#include <string>
#include <thread>
#include <vector>

#include "slm/dataset.hpp"
#include "slm/error.hpp"
#include "slm/format.hpp"
#include "slm/metrics.hpp"
#include "slm/random.hpp"
#include "slm/tree.hpp"

namespace slm {

enum class ModelKind { tree, forest, boost };

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::tree: return "tree";
    case ModelKind::forest: return "forest";
    case ModelKind::boost: return "boost";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "tree") return ModelKind::tree;
  if (s == "forest") return ModelKind::forest;
  if (s == "boost") return ModelKind::boost;
  throw InvalidArgument("unknown model kind '" + std::string(s) + "'");
}

struct ForestParams {
  std::size_t n_trees = 20;
  TreeParams tree;
  std::uint64_t seed = 0;
  bool bagging = false;     // bootstrap rows per tree; off: every tree sees all data
  std::size_t threads = 0;  // 0: hardware concurrency
};

struct BoostParams {
  std::size_t n_rounds = 100;
  double learning_rate = 0.1;
  double lambda = 0.0;
  TreeParams tree;
  double base_score = 0.0;
  std::uint64_t seed = 0;
  // Grow trees on the negative gradient with mse splits (leaves still take
  // the Newton step) instead of the second-order gain.
  bool classic_splits = false;
};

/// A single tree, a forest, or a boosted sequence. Boosted multiclass models
/// store `trees_per_round` = K trees per round, class k at position
/// round * K + k.
struct EnsembleModel {
  ModelKind kind = ModelKind::tree;
  Task task = Task::classification;
  int num_classes = 0;
  std::size_t num_features = 0;
  std::vector<Tree> trees;
  std::vector<std::uint64_t> tree_seeds;
  double learning_rate = 1.0;
  double base_score = 0.0;
  std::size_t trees_per_round = 1;
  std::vector<std::string> feature_names;
  std::string target_name = "y";
  // Free-form key/value record carried through save and load; the CLI
  // stores the effective run configuration here.
  std::vector<std::pair<std::string, std::string>> metadata;

  std::size_t rounds() const { return trees.size() / std::max<std::size_t>(trees_per_round, 1); }

  friend bool operator==(const EnsembleModel&, const EnsembleModel&) = default;
};

struct CurvePoint {
  std::size_t index = 0;  // trees (forest) or rounds (boost) so far, from 1
  double train_metric = 0.0;
  std::optional<double> holdout_metric;
};

struct LearningCurve {
  std::string metric;  // accuracy | rmse | logloss | mse
  std::vector<CurvePoint> points;
};

struct FitResult {
  EnsembleModel model;
  LearningCurve curve;
};

// ---------------------------------------------------------------------------
// Single tree

inline EnsembleModel fit_tree_model(const Dataset& train, const TreeParams& params, std::uint64_t seed) {
  Rng rng(seed);
  EnsembleModel m;
  m.kind = ModelKind::tree;
  m.task = train.task;
  m.num_classes = train.task == Task::classification ? train.num_classes : 0;
  m.num_features = train.dims();
  m.feature_names = train.feature_names;
  m.target_name = train.target_name;
  m.trees.push_back(build_tree(train, params, rng));
  m.tree_seeds.push_back(seed);
  return m;
}

// ---------------------------------------------------------------------------
// Forest

namespace detail {

inline Prediction vote(const std::vector<int>& votes, int num_classes) {
  Prediction p;
  p.probabilities.assign(static_cast<std::size_t>(num_classes), 0.0);
  for (int v : votes) p.probabilities[static_cast<std::size_t>(v)] += 1.0;
  std::size_t best = 0;
  for (std::size_t c = 1; c < p.probabilities.size(); ++c)
    if (p.probabilities[c] > p.probabilities[best]) best = c;
  for (auto& v : p.probabilities) v /= static_cast<double>(votes.size());
  p.label = static_cast<int>(best);
  return p;
}

inline Tree fit_forest_member(const Dataset& train, const ForestParams& params, std::size_t index) {
  Rng rng(derive_seed(params.seed, index));
  if (!params.bagging) return build_tree(train, params.tree, rng);
  Rng boot(derive_seed(~params.seed, index));
  std::vector<std::size_t> rows(train.size());
  for (auto& r : rows) r = static_cast<std::size_t>(boot.below(train.size()));
  return build_tree(train.subset(rows), params.tree, rng);
}

}  // namespace detail

/// Majority vote (classification; ties to the smaller class, probabilities
/// are vote shares) or mean (regression) of the member trees.
inline Prediction predict_forest(const EnsembleModel& model, std::span<const double> x) {
  if (model.trees.empty()) throw InvalidArgument("forest has no trees");
  if (model.task == Task::classification) {
    std::vector<int> votes;
    votes.reserve(model.trees.size());
    for (const auto& t : model.trees) votes.push_back(predict(t, x).label);
    return detail::vote(votes, model.num_classes);
  }
  Prediction p;
  double s = 0.0;
  for (const auto& t : model.trees) s += predict(t, x).value;
  p.value = s / static_cast<double>(model.trees.size());
  return p;
}

/// Trains n_trees trees on all samples and all features; tree t draws its
/// projections from the stream derive_seed(seed, t). Trees are built
/// concurrently; the result does not depend on the thread count.
inline FitResult fit_forest(const Dataset& train, const ForestParams& params, const Dataset* holdout = nullptr) {
  train.validate();
  detail::require(params.n_trees >= 1, "n_trees must be at least 1");
  params.tree.validate();
  EnsembleModel m;
  m.kind = ModelKind::forest;
  m.task = train.task;
  m.num_classes = train.task == Task::classification ? train.num_classes : 0;
  m.num_features = train.dims();
  m.feature_names = train.feature_names;
  m.target_name = train.target_name;
  m.trees.resize(params.n_trees);
  for (std::size_t t = 0; t < params.n_trees; ++t) m.tree_seeds.push_back(derive_seed(params.seed, t));

  std::size_t threads = params.threads ? params.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, params.n_trees);
  if (threads <= 1) {
    for (std::size_t t = 0; t < params.n_trees; ++t) m.trees[t] = detail::fit_forest_member(train, params, t);
  } else {
    std::vector<std::future<void>> jobs;
    for (std::size_t w = 0; w < threads; ++w)
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t t = w; t < params.n_trees; t += threads) m.trees[t] = detail::fit_forest_member(train, params, t);
      }));
    for (auto& j : jobs) j.get();
  }

  // Cumulative-vote curve: metric of the first t trees, t = 1..n_trees.
  FitResult out;
  out.curve.metric = train.task == Task::classification ? "accuracy" : "rmse";
  const auto curve_on = [&](const Dataset& ds) {
    std::vector<double> metric(params.n_trees);
    std::vector<std::vector<int>> votes(ds.size());
    std::vector<double> sums(ds.size(), 0.0);
    for (std::size_t t = 0; t < params.n_trees; ++t) {
      std::vector<int> labels(ds.size());
      std::vector<double> values(ds.size());
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto p = predict(m.trees[t], ds.features.row(i));
        if (ds.task == Task::classification) {
          votes[i].push_back(p.label);
          labels[i] = detail::vote(votes[i], m.num_classes).label;
        } else {
          sums[i] += p.value;
          values[i] = sums[i] / static_cast<double>(t + 1);
        }
      }
      metric[t] = ds.task == Task::classification ? accuracy(labels, ds.labels) : rmse(values, ds.values);
    }
    return metric;
  };
  const auto train_curve = curve_on(train);
  std::vector<double> hold_curve;
  if (holdout) hold_curve = curve_on(*holdout);
  for (std::size_t t = 0; t < params.n_trees; ++t) {
    CurvePoint pt{t + 1, train_curve[t], std::nullopt};
    if (holdout) pt.holdout_metric = hold_curve[t];
    out.curve.points.push_back(pt);
  }
  out.model = std::move(m);
  return out;
}

// ---------------------------------------------------------------------------
// Boost

inline double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

inline std::vector<double> softmax(std::span<const double> s) {
  const double mx = *std::max_element(s.begin(), s.end());
  std::vector<double> p(s.size());
  double total = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) total += p[k] = std::exp(s[k] - mx);
  for (auto& v : p) v /= total;
  return p;
}

struct GradHess {
  double g = 0.0;
  double h = 0.0;
};

// Squared error 1/2 (score - y)^2.
inline GradHess squared_error_grad(double score, double y) { return {score - y, 1.0}; }

// Binary log-loss on the logit, y in {0, 1}.
inline GradHess logistic_grad(double score, double y) {
  const double p = sigmoid(score);
  return {p - y, p * (1.0 - p)};
}

// Softmax cross-entropy, derivative with respect to the class-k score.
inline GradHess softmax_grad(std::span<const double> scores, std::size_t k, int label) {
  const auto p = softmax(scores);
  const double y = static_cast<int>(k) == label ? 1.0 : 0.0;
  return {p[k] - y, p[k] * (1.0 - p[k])};
}

inline double squared_error_loss(double score, double y) { return 0.5 * (score - y) * (score - y); }

inline double logistic_loss(double score, double y) {
  // log(1 + e^s) - y s, evaluated stably
  const double softplus = score > 0.0 ? score + std::log1p(std::exp(-score)) : std::log1p(std::exp(score));
  return softplus - y * score;
}

inline double softmax_loss(std::span<const double> scores, int label) {
  const double mx = *std::max_element(scores.begin(), scores.end());
  double total = 0.0;
  for (double s : scores) total += std::exp(s - mx);
  return mx + std::log(total) - scores[static_cast<std::size_t>(label)];
}

namespace detail {

inline std::size_t score_width(const EnsembleModel& m) {
  return m.task == Task::classification && m.num_classes > 2 ? static_cast<std::size_t>(m.num_classes) : 1;
}

inline Prediction finish_scores(const EnsembleModel& m, std::span<const double> scores) {
  Prediction p;
  if (m.task == Task::regression) {
    p.value = scores[0];
    return p;
  }
  if (m.num_classes == 2) {
    const double p1 = sigmoid(scores[0]);
    p.probabilities = {1.0 - p1, p1};
  } else {
    p.probabilities = softmax(scores);
  }
  p.label = static_cast<int>(std::max_element(p.probabilities.begin(), p.probabilities.end()) - p.probabilities.begin());
  return p;
}

}  // namespace detail

/// Raw additive scores base_score + learning_rate * sum of tree outputs, one
/// per class for multiclass models.
inline std::vector<double> boost_scores(const EnsembleModel& model, std::span<const double> x) {
  const std::size_t width = detail::score_width(model);
  std::vector<double> scores(width, model.base_score);
  std::vector<double> sums(width, 0.0);
  for (std::size_t i = 0; i < model.trees.size(); ++i) sums[i % width] += predict(model.trees[i], x).value;
  for (std::size_t k = 0; k < width; ++k) scores[k] += model.learning_rate * sums[k];
  return scores;
}

inline Prediction predict_boost(const EnsembleModel& model, std::span<const double> x) {
  if (x.size() != model.num_features)
    throw InvalidArgument("expected " + std::to_string(model.num_features) + " features, found " +
                          std::to_string(x.size()));
  return detail::finish_scores(model, boost_scores(model, x));
}

/// Second-order gradient boosting over SLR-structured trees. Every round
/// computes (g, h) of the loss at the current scores, grows one tree per
/// score column on them, and adds learning_rate times its output. The curve
/// records the training loss (mse or logloss) after each round.
inline FitResult fit_boost(const Dataset& train, const BoostParams& params, const Dataset* holdout = nullptr) {
  train.validate();
  detail::require(params.n_rounds >= 1, "n_rounds must be at least 1");
  detail::require(params.learning_rate > 0.0 && params.learning_rate <= 1.0, "learning_rate must lie in (0, 1]");
  detail::require(params.lambda >= 0.0, "lambda must be nonnegative");

  EnsembleModel m;
  m.kind = ModelKind::boost;
  m.task = train.task;
  m.num_classes = train.task == Task::classification ? train.num_classes : 0;
  m.num_features = train.dims();
  m.feature_names = train.feature_names;
  m.target_name = train.target_name;
  m.learning_rate = params.learning_rate;
  m.base_score = params.base_score;
  const std::size_t width = detail::score_width(m);
  m.trees_per_round = width;

  TreeParams tp = params.tree;
  tp.loss = params.classic_splits ? LossKind::mse : LossKind::xgb_gain;
  tp.lambda = params.lambda;
  tp.validate();

  const std::size_t n = train.size();
  std::vector<double> scores(n * width, params.base_score);
  std::vector<double> grad(n), hess(n), neg_grad(n);

  const auto training_loss = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::span<const double> sc(scores.data() + i * width, width);
      if (train.task == Task::regression)
        s += (sc[0] - train.values[i]) * (sc[0] - train.values[i]);
      else if (width == 1)
        s += logistic_loss(sc[0], train.labels[i]);
      else
        s += softmax_loss(sc, train.labels[i]);
    }
    return s / static_cast<double>(n);
  };
  const auto holdout_loss = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < holdout->size(); ++i) {
      const auto sc = boost_scores(m, holdout->features.row(i));
      if (holdout->task == Task::regression)
        s += (sc[0] - holdout->values[i]) * (sc[0] - holdout->values[i]);
      else if (width == 1)
        s += logistic_loss(sc[0], holdout->labels[i]);
      else
        s += softmax_loss(sc, holdout->labels[i]);
    }
    return s / static_cast<double>(holdout->size());
  };

  FitResult out;
  out.curve.metric = train.task == Task::regression ? "mse" : "logloss";
  for (std::size_t round = 0; round < params.n_rounds; ++round) {
    std::vector<Tree> round_trees;
    for (std::size_t k = 0; k < width; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::span<const double> sc(scores.data() + i * width, width);
        GradHess gh;
        if (train.task == Task::regression)
          gh = squared_error_grad(sc[0], train.values[i]);
        else if (width == 1)
          gh = logistic_grad(sc[0], train.labels[i]);
        else
          gh = softmax_grad(sc, k, train.labels[i]);
        if (!std::isfinite(gh.g) || !std::isfinite(gh.h))
          throw TrainingError("non-finite gradient in boosting round " + std::to_string(round + 1));
        grad[i] = gh.g;
        hess[i] = gh.h;
        neg_grad[i] = -gh.g;
      }
      const std::uint64_t seed = derive_seed(params.seed, round * width + k);
      Rng rng(seed);
      const auto second_order = TargetView::second_order(grad, hess, params.lambda);
      Tree tree = params.classic_splits
                      ? build_tree(train.features, TargetView::regression(neg_grad), Task::regression, 0, tp, rng)
                      : build_tree(train.features, second_order, Task::regression, 0, tp, rng);
      if (params.classic_splits) {
        // Newton leaf values on the mse-grown structure.
        std::vector<double> g_sum(tree.nodes.size(), 0.0), h_sum(tree.nodes.size(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          const auto leaf = leaf_index(tree, train.features.row(i));
          g_sum[leaf] += grad[i];
          h_sum[leaf] += hess[i];
        }
        for (std::size_t j = 0; j < tree.nodes.size(); ++j)
          if (tree.nodes[j].is_leaf())
            tree.nodes[j].value = h_sum[j] + params.lambda > 0.0 ? -g_sum[j] / (h_sum[j] + params.lambda) : 0.0;
      }
      round_trees.push_back(std::move(tree));
      m.tree_seeds.push_back(seed);
    }
    // Scores advance only after all K trees of the round saw the same state.
    for (std::size_t k = 0; k < width; ++k) {
      for (std::size_t i = 0; i < n; ++i)
        scores[i * width + k] += params.learning_rate * predict(round_trees[k], train.features.row(i)).value;
      m.trees.push_back(std::move(round_trees[k]));
    }
    CurvePoint pt{round + 1, training_loss(), std::nullopt};
    if (!std::isfinite(pt.train_metric))
      throw TrainingError("non-finite training loss in boosting round " + std::to_string(round + 1));
    if (holdout) pt.holdout_metric = holdout_loss();
    out.curve.points.push_back(pt);
  }
  out.model = std::move(m);
  return out;
}

// ---------------------------------------------------------------------------
// Reporting

inline std::size_t param_count(const EnsembleModel& model) {
  std::size_t n = 0;
  for (const auto& t : model.trees) n += param_count(t);
  return n;
}

struct ModelStats {
  std::size_t trees = 0;
  std::size_t depth = 0;  // deepest member tree
  std::size_t partitions = 0;
  std::size_t leaves = 0;
  std::size_t param_count = 0;
};

inline ModelStats model_stats(const EnsembleModel& model) {
  ModelStats s;
  s.trees = model.trees.size();
  for (const auto& t : model.trees) {
    const auto ts = tree_stats(t);
    s.depth = std::max(s.depth, ts.depth);
    s.partitions += ts.partitions;
    s.leaves += ts.leaves;
    s.param_count += param_count(t);
  }
  return s;
}

/// CSV with columns index, train_metric and, when recorded, holdout_metric.
/// Comment lines go first, each prefixed with "# ".
inline void export_learning_curve(const LearningCurve& curve, std::ostream& out,
                                  std::span<const std::string> comments = {}) {
  for (const auto& c : comments) out << "# " << c << '\n';
  out << "# metric " << curve.metric << '\n';
  const bool holdout = !curve.points.empty() && curve.points.front().holdout_metric.has_value();
  out << "index,train_metric" << (holdout ? ",holdout_metric" : "") << '\n';
  for (const auto& p : curve.points) {
    out << p.index << ',' << format_real(p.train_metric);
    if (holdout) out << ',' << format_real(p.holdout_metric.value_or(0.0));
    out << '\n';
  }
}

inline void export_learning_curve(const LearningCurve& curve, const std::string& path,
                                  std::span<const std::string> comments = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path);
  export_learning_curve(curve, out, comments);
  if (!out) throw InvalidArgument("write failed: " + path);
}

// ---------------------------------------------------------------------------

inline Prediction predict_model(const EnsembleModel& model, std::span<const double> x) {
  switch (model.kind) {
    case ModelKind::tree: return predict(model.trees.front(), x);
    case ModelKind::forest: return predict_forest(model, x);
    case ModelKind::boost: return predict_boost(model, x);
  }
  return {};
}

}  // namespace slm
