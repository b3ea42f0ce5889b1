#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "slm/dataset.hpp"
#include "slm/dft.hpp"
#include "slm/error.hpp"
#include "slm/projection.hpp"
#include "slm/random.hpp"

namespace slm {

struct TreeParams {
  ProjectionParams projection;
  std::size_t max_depth = 8;  // leaves sit at depth <= max_depth; the root is depth 0
  std::size_t min_samples = 2;
  double min_loss = 0.0;
  int bins = 16;
  LossKind loss = LossKind::entropy;
  double lambda = 0.0;  // xgb_gain leaf regularizer

  void validate() const {
    projection.validate();
    detail::require(max_depth >= 1, "max_depth must be at least 1");
    detail::require(min_samples >= 2, "min_samples must be at least 2");
    detail::require(min_loss >= 0.0, "min_loss must be nonnegative");
    detail::require(bins >= 2, "bins must be at least 2");
    detail::require(projection.q_max <= 31, "q_max above 31 is not supported");
    detail::require(lambda >= 0.0, "lambda must be nonnegative");
  }

  friend bool operator==(const TreeParams&, const TreeParams&) = default;
};

/// Sign-vector key of a sample at an internal node: bit j is set when the
/// sample lies on the positive side (>= threshold) of split j.
using CellKey = std::uint32_t;

struct TreeNode {
  std::size_t depth = 0;
  std::size_t n_samples = 0;
  std::vector<SplitRecord> splits;                        // empty for a leaf
  std::vector<std::pair<CellKey, std::size_t>> children;  // ascending key -> node index
  std::vector<std::size_t> histogram;                     // classification leaves
  double value = 0.0;  // regression leaves: mean target (mse) or Newton step (xgb_gain)

  bool is_leaf() const noexcept { return splits.empty(); }

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// An SLM (classification) or SLR (regression) tree. Projections act on the
/// retained subspace `subspace` of the input; node 0 is the root.
struct Tree {
  Task task = Task::classification;
  int num_classes = 0;
  std::size_t num_features = 0;
  std::vector<std::size_t> subspace;
  TreeParams params;
  std::vector<TreeNode> nodes;

  const TreeNode& root() const { return nodes.front(); }

  friend bool operator==(const Tree&, const Tree&) = default;
};

struct Prediction {
  int label = -1;
  std::vector<double> probabilities;
  double value = 0.0;
};

/// The `d0` dimensions with the lowest discriminant cost, returned in
/// ascending dimension order. d0 = 0 or d0 >= D keeps every dimension.
inline std::vector<std::size_t> select_subspace(const Matrix& features, std::span<const std::size_t> rows,
                                                const TargetView& targets, std::size_t d0, int bins) {
  const std::size_t d = features.cols();
  std::vector<std::size_t> dims;
  if (d0 == 0 || d0 >= d) {
    dims.resize(d);
    std::iota(dims.begin(), dims.end(), 0);
    return dims;
  }
  const auto ranked = rank_features(features, rows, targets, bins);
  for (std::size_t i = 0; i < d0; ++i) dims.push_back(ranked[i].dim);
  std::sort(dims.begin(), dims.end());
  return dims;
}

inline std::vector<std::size_t> select_subspace(const Dataset& ds, std::size_t d0, int bins, LossKind loss) {
  std::vector<std::size_t> rows(ds.size());
  std::iota(rows.begin(), rows.end(), 0);
  const auto t = loss == LossKind::entropy ? TargetView::classification(ds.labels, ds.num_classes)
                                           : TargetView::regression(ds.values);
  return select_subspace(ds.features, rows, t, d0, bins);
}

inline CellKey cell_key(std::span<const SplitRecord> splits, std::span<const double> z) {
  CellKey key = 0;
  for (std::size_t j = 0; j < splits.size(); ++j)
    if (dot(splits[j].unit, z) >= splits[j].threshold) key |= CellKey{1} << j;
  return key;
}

struct NodeSplit {
  std::vector<SplitRecord> splits;
  std::vector<std::pair<CellKey, std::vector<std::size_t>>> cells;  // nonempty, ascending key
};

/// Decides whether a node splits, and how. `z` holds subspace features of
/// the whole training set. Returns nothing when the node must be a leaf:
/// depth or sample-count cap reached, impurity below min_loss, no usable
/// candidate, or no candidate improves on the unsplit loss.
inline std::optional<NodeSplit> split_node(const Matrix& z, std::span<const std::size_t> rows,
                                           const TargetView& targets, const TreeParams& params, std::size_t depth,
                                           Rng& rng) {
  if (depth >= params.max_depth || rows.size() < params.min_samples || rows.size() < 2) return std::nullopt;
  if (node_loss(targets, rows) < params.min_loss) return std::nullopt;

  std::vector<std::size_t> ranking;
  for (const auto& rf : rank_features(z, rows, targets, params.bins)) ranking.push_back(rf.dim);
  const NodeContext ctx{z, rows, targets, params.bins, std::move(ranking)};
  auto cands = sample_candidates(ctx, params.projection, rng);
  if (cands.status != CandidateStatus::ok) return std::nullopt;
  std::erase_if(cands.vectors, [](const ProjectionVector& v) { return !v.cost.feasible(); });
  if (cands.vectors.empty()) return std::nullopt;

  NodeSplit out;
  out.splits = select_decorrelated(cands.vectors, params.projection.q_max, params.projection.theta_minimax);
  const double base = unsplit_loss(targets, rows);
  if (!(out.splits.front().loss < base - 1e-12)) return std::nullopt;

  std::map<CellKey, std::vector<std::size_t>> cells;
  for (auto r : rows) cells[cell_key(out.splits, z.row(r))].push_back(r);
  for (auto& [key, members] : cells) out.cells.emplace_back(key, std::move(members));
  return out;
}

namespace detail {

inline void fill_leaf(TreeNode& node, const TargetView& t, std::span<const std::size_t> rows) {
  switch (t.kind) {
    case LossKind::entropy:
      node.histogram.assign(static_cast<std::size_t>(t.num_classes), 0);
      for (auto r : rows) ++node.histogram[static_cast<std::size_t>(t.labels[r])];
      break;
    case LossKind::mse: {
      double s = 0.0;
      for (auto r : rows) s += t.values[r];
      node.value = s / static_cast<double>(rows.size());
      break;
    }
    case LossKind::xgb_gain: {
      double g = 0.0, h = 0.0;
      for (auto r : rows) {
        g += t.grad[r];
        h += t.hess[r];
      }
      node.value = h + t.lambda > 0.0 ? -g / (h + t.lambda) : 0.0;
      break;
    }
  }
}

class TreeBuilder {
 public:
  TreeBuilder(Tree& tree, const Matrix& z, const TargetView& targets, Rng& rng)
      : tree_(tree), z_(z), targets_(targets), rng_(rng) {}

  std::size_t grow(std::vector<std::size_t> rows, std::size_t depth) {
    const std::size_t idx = tree_.nodes.size();
    tree_.nodes.emplace_back();
    tree_.nodes[idx].depth = depth;
    tree_.nodes[idx].n_samples = rows.size();
    auto split = split_node(z_, rows, targets_, tree_.params, depth, rng_);
    if (!split) {
      fill_leaf(tree_.nodes[idx], targets_, rows);
      return idx;
    }
    tree_.nodes[idx].splits = std::move(split->splits);
    for (auto& [key, members] : split->cells) {
      const auto child = grow(std::move(members), depth + 1);
      tree_.nodes[idx].children.emplace_back(key, child);
    }
    return idx;
  }

 private:
  Tree& tree_;
  const Matrix& z_;
  const TargetView& targets_;
  Rng& rng_;
};

}  // namespace detail

/// Grows a tree on arbitrary targets. `task` and `num_classes` describe what
/// the leaves predict; entropy targets give classification leaves, mse and
/// xgb_gain targets give real-valued leaves.
inline Tree build_tree(const Matrix& features, const TargetView& targets, Task task, int num_classes,
                       const TreeParams& params, Rng& rng) {
  params.validate();
  if (features.rows() == 0) throw InvalidArgument("empty training set");
  if (targets.size() != features.rows()) throw InvalidArgument("targets do not match the feature rows");

  Tree tree;
  tree.task = task;
  tree.num_classes = task == Task::classification ? num_classes : 0;
  tree.num_features = features.cols();
  tree.params = params;
  std::vector<std::size_t> rows(features.rows());
  std::iota(rows.begin(), rows.end(), 0);
  tree.subspace = select_subspace(features, rows, targets, params.projection.d0, params.bins);
  const Matrix z = features.select_columns(tree.subspace);
  detail::TreeBuilder(tree, z, targets, rng).grow(std::move(rows), 0);
  return tree;
}

inline Tree build_tree(const Dataset& train, const TreeParams& params, Rng& rng) {
  train.validate();
  if (train.task == Task::classification) {
    auto p = params;
    p.loss = LossKind::entropy;
    return build_tree(train.features, TargetView::classification(train.labels, train.num_classes),
                      Task::classification, train.num_classes, p, rng);
  }
  auto p = params;
  p.loss = LossKind::mse;
  return build_tree(train.features, TargetView::regression(train.values), Task::regression, 0, p, rng);
}

/// Index of the leaf reached by x. A sign vector with no trained child
/// routes to the child with the nearest key in Hamming distance, then the
/// one with more training samples, then the smaller key.
inline std::size_t leaf_index(const Tree& tree, std::span<const double> x) {
  if (x.size() != tree.num_features)
    throw InvalidArgument("expected " + std::to_string(tree.num_features) + " features, found " +
                          std::to_string(x.size()));
  for (double v : x)
    if (!std::isfinite(v)) throw InvalidArgument("non-finite feature value");
  std::vector<double> z(tree.subspace.size());
  for (std::size_t j = 0; j < z.size(); ++j) z[j] = x[tree.subspace[j]];

  std::size_t idx = 0;
  while (!tree.nodes[idx].is_leaf()) {
    const auto& node = tree.nodes[idx];
    const CellKey key = cell_key(node.splits, z);
    const auto it = std::lower_bound(node.children.begin(), node.children.end(), key,
                                     [](const auto& c, CellKey k) { return c.first < k; });
    if (it != node.children.end() && it->first == key) {
      idx = it->second;
      continue;
    }
    const auto* best = &node.children.front();
    for (const auto& c : node.children) {
      const int dc = std::popcount(c.first ^ key);
      const int db = std::popcount(best->first ^ key);
      if (dc < db || (dc == db && tree.nodes[c.second].n_samples > tree.nodes[best->second].n_samples)) best = &c;
    }
    idx = best->second;
  }
  return idx;
}

inline Prediction predict(const Tree& tree, std::span<const double> x) {
  const auto& leaf = tree.nodes[leaf_index(tree, x)];
  Prediction p;
  if (tree.task == Task::classification) {
    const double total = static_cast<double>(std::accumulate(leaf.histogram.begin(), leaf.histogram.end(), std::size_t{0}));
    p.probabilities.resize(leaf.histogram.size());
    std::size_t best = 0;
    for (std::size_t c = 0; c < leaf.histogram.size(); ++c) {
      p.probabilities[c] = static_cast<double>(leaf.histogram[c]) / total;
      if (leaf.histogram[c] > leaf.histogram[best]) best = c;
    }
    p.label = static_cast<int>(best);
  } else {
    p.value = leaf.value;
  }
  return p;
}

/// Model size: every hyperplane costs d0 weights plus one threshold.
inline std::size_t param_count(const Tree& tree) {
  std::size_t splits = 0;
  for (const auto& n : tree.nodes) splits += n.splits.size();
  return splits * (tree.subspace.size() + 1);
}

struct TreeStats {
  std::size_t depth = 0;
  std::vector<std::size_t> level_counts;
  std::size_t partitions = 0;
  std::size_t leaves = 0;
};

inline TreeStats tree_stats(const Tree& tree) {
  TreeStats s;
  for (const auto& n : tree.nodes) {
    if (s.level_counts.size() <= n.depth) s.level_counts.resize(n.depth + 1, 0);
    ++s.level_counts[n.depth];
    s.partitions += n.splits.size();
    if (n.is_leaf()) {
      ++s.leaves;
      s.depth = std::max(s.depth, n.depth);
    }
  }
  return s;
}

}  // namespace slm
