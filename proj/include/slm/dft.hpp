#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string_view>
#include <vector>

#include "slm/dataset.hpp"
#include "slm/error.hpp"

namespace slm {

enum class LossKind { entropy, mse, xgb_gain };

inline std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::entropy: return "entropy";
    case LossKind::mse: return "mse";
    case LossKind::xgb_gain: return "xgb_gain";
  }
  return "?";
}

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "entropy") return LossKind::entropy;
  if (s == "mse") return LossKind::mse;
  if (s == "xgb_gain") return LossKind::xgb_gain;
  throw InvalidArgument("unknown loss kind '" + std::string(s) + "'");
}

inline constexpr double kInfeasible = std::numeric_limits<double>::infinity();

/// Targets of the whole training set; nodes address them by sample index.
struct TargetView {
  LossKind kind = LossKind::entropy;
  std::span<const int> labels;   // entropy
  int num_classes = 0;
  std::span<const double> values;  // mse
  std::span<const double> grad;    // xgb_gain
  std::span<const double> hess;
  double lambda = 0.0;

  static TargetView classification(std::span<const int> labels, int num_classes) {
    TargetView t;
    t.kind = LossKind::entropy;
    t.labels = labels;
    t.num_classes = num_classes;
    return t;
  }
  static TargetView regression(std::span<const double> values) {
    TargetView t;
    t.kind = LossKind::mse;
    t.values = values;
    return t;
  }
  static TargetView second_order(std::span<const double> grad, std::span<const double> hess, double lambda) {
    TargetView t;
    t.kind = LossKind::xgb_gain;
    t.grad = grad;
    t.hess = hess;
    t.lambda = lambda;
    return t;
  }

  std::size_t size() const noexcept {
    switch (kind) {
      case LossKind::entropy: return labels.size();
      case LossKind::mse: return values.size();
      case LossKind::xgb_gain: return grad.size();
    }
    return 0;
  }
};

/// Values a^T x of the node samples, in node order.
struct ProjectedColumn {
  std::vector<double> values;
  double f_min = 0.0;
  double f_max = 0.0;

  static ProjectedColumn from_values(std::vector<double> v) {
    ProjectedColumn c;
    c.values = std::move(v);
    if (!c.values.empty()) {
      const auto [lo, hi] = std::minmax_element(c.values.begin(), c.values.end());
      c.f_min = *lo;
      c.f_max = *hi;
    }
    return c;
  }
};

struct SplitEvaluation {
  double threshold = 0.0;
  double loss = kInfeasible;
  std::size_t n_left = 0;
  std::size_t n_right = 0;

  bool feasible() const noexcept { return loss != kInfeasible; }
};

// The single definition of a^T x used for training and inference alike, so
// routing of a training sample never depends on which path evaluated it.
inline double dot(std::span<const double> a, std::span<const double> x) noexcept {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) s += a[d] * x[d];
  return s;
}

inline ProjectedColumn project(std::span<const double> a, const Matrix& features,
                               std::span<const std::size_t> rows) {
  if (a.size() != features.cols())
    throw InvalidArgument("projection has dimension " + std::to_string(a.size()) + " but features have " +
                          std::to_string(features.cols()));
  std::vector<double> v;
  v.reserve(rows.size());
  for (auto r : rows) v.push_back(dot(a, features.row(r)));
  return ProjectedColumn::from_values(std::move(v));
}

inline ProjectedColumn project(std::span<const double> a, const Matrix& features) {
  std::vector<std::size_t> rows(features.rows());
  std::iota(rows.begin(), rows.end(), 0);
  return project(a, features, rows);
}

/// Bin boundaries t_b = f_min + b (f_max - f_min) / bins for b = 1..bins-1.
inline std::vector<double> candidate_thresholds(double f_min, double f_max, int bins) {
  detail::require(bins >= 2, "bins must be at least 2");
  std::vector<double> t;
  if (!(f_max > f_min)) return t;
  const double width = f_max - f_min;
  t.reserve(static_cast<std::size_t>(bins - 1));
  for (int b = 1; b < bins; ++b) t.push_back(f_min + width * b / bins);
  return t;
}

inline std::vector<double> candidate_thresholds(const ProjectedColumn& col, int bins) {
  return candidate_thresholds(col.f_min, col.f_max, bins);
}

/// -sum p_c ln p_c with 0 ln 0 = 0; counts must total n > 0.
template <typename Count>
double entropy_from_counts(std::span<const Count> counts, std::size_t n) {
  double h = 0.0;
  const double total = static_cast<double>(n);
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return h;
}

inline double entropy(std::span<const int> labels, int num_classes) {
  if (labels.empty()) throw InvalidArgument("entropy of an empty set");
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return entropy_from_counts<std::size_t>(counts, labels.size());
}

namespace detail {

// Sufficient statistics of one side of a split. For mse the targets are
// shifted by a per-node reference value so that constant targets give an
// exact zero.
struct SideStats {
  std::vector<std::size_t> counts;
  double s1 = 0.0;  // mse: sum of shifted y; xgb: sum of g
  double s2 = 0.0;  // mse: sum of squared shifted y; xgb: sum of h
  std::size_t n = 0;

  void merge(const SideStats& o) {
    for (std::size_t c = 0; c < counts.size(); ++c) counts[c] += o.counts[c];
    s1 += o.s1;
    s2 += o.s2;
    n += o.n;
  }
};

class LossAccumulator {
 public:
  LossAccumulator(const TargetView& t, std::span<const std::size_t> rows) : t_(t) {
    if (t.kind == LossKind::mse && !rows.empty()) shift_ = t.values[rows.front()];
  }

  SideStats empty() const {
    SideStats s;
    if (t_.kind == LossKind::entropy) s.counts.assign(static_cast<std::size_t>(t_.num_classes), 0);
    return s;
  }

  void add(SideStats& s, std::size_t row) const {
    ++s.n;
    switch (t_.kind) {
      case LossKind::entropy:
        ++s.counts[static_cast<std::size_t>(t_.labels[row])];
        break;
      case LossKind::mse: {
        const double y = t_.values[row] - shift_;
        s.s1 += y;
        s.s2 += y * y;
        break;
      }
      case LossKind::xgb_gain:
        s.s1 += t_.grad[row];
        s.s2 += t_.hess[row];
        break;
    }
  }

  // Loss of one side on its own (entropy / mean squared deviation /
  // structure score -G^2/(H+lambda)).
  double side_loss(const SideStats& s) const {
    switch (t_.kind) {
      case LossKind::entropy:
        return entropy_from_counts<std::size_t>(s.counts, s.n);
      case LossKind::mse: {
        const double n = static_cast<double>(s.n);
        const double mean = s.s1 / n;
        return std::max(0.0, s.s2 / n - mean * mean);
      }
      case LossKind::xgb_gain: {
        const double denom = s.s2 + t_.lambda;
        return denom > 0.0 ? -(s.s1 * s.s1) / denom : 0.0;
      }
    }
    return 0.0;
  }

  // Combined loss of a partition into nonempty parts: sample-weighted mean
  // for entropy/mse, plain sum of structure scores for xgb_gain.
  double combine(std::span<const SideStats> parts) const {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& p : parts) {
      if (t_.kind == LossKind::xgb_gain)
        total += side_loss(p);
      else
        total += static_cast<double>(p.n) * side_loss(p);
      n += p.n;
    }
    return t_.kind == LossKind::xgb_gain ? total : total / static_cast<double>(n);
  }

  double pair(const SideStats& left, const SideStats& right) const {
    if (t_.kind == LossKind::xgb_gain) return side_loss(left) + side_loss(right);
    const double nl = static_cast<double>(left.n);
    const double nr = static_cast<double>(right.n);
    return (nl * side_loss(left) + nr * side_loss(right)) / (nl + nr);
  }

 private:
  const TargetView& t_;
  double shift_ = 0.0;
};

}  // namespace detail

/// Loss of the node left unsplit, on the same scale as split losses.
inline double unsplit_loss(const TargetView& t, std::span<const std::size_t> rows) {
  detail::LossAccumulator acc(t, rows);
  auto s = acc.empty();
  for (auto r : rows) acc.add(s, r);
  return acc.side_loss(s);
}

/// Node impurity used by the minimum-loss stopping rule. For xgb_gain this is
/// the hessian-weighted variance of the Newton targets -g/h, i.e. the
/// objective reduction available if every sample had its own leaf, per unit
/// hessian.
inline double node_loss(const TargetView& t, std::span<const std::size_t> rows) {
  if (rows.empty()) throw InvalidArgument("loss of an empty node");
  if (t.kind != LossKind::xgb_gain) return unsplit_loss(t, rows);
  double g_sum = 0.0, h_sum = 0.0, g2_over_h = 0.0;
  for (auto r : rows) {
    const double h = std::max(t.hess[r], 1e-16);
    g_sum += t.grad[r];
    h_sum += h;
    g2_over_h += t.grad[r] * t.grad[r] / h;
  }
  return std::max(0.0, (g2_over_h - g_sum * g_sum / h_sum) / h_sum);
}

/// Loss of an arbitrary partition of the node into cells (empty cells ignored).
inline double partition_loss(const TargetView& t, std::span<const std::vector<std::size_t>> cells) {
  std::vector<std::size_t> any;
  for (const auto& c : cells)
    if (!c.empty()) {
      any.push_back(c.front());
      break;
    }
  detail::LossAccumulator acc(t, any);
  std::vector<detail::SideStats> parts;
  for (const auto& c : cells) {
    if (c.empty()) continue;
    auto s = acc.empty();
    for (auto r : c) acc.add(s, r);
    parts.push_back(std::move(s));
  }
  return acc.combine(parts);
}

/// Loss of splitting the node at `threshold`: left = {v < t}, right = {v >= t}.
/// An empty side yields an infeasible evaluation (loss = +inf).
inline SplitEvaluation split_loss(const ProjectedColumn& col, const TargetView& t,
                                  std::span<const std::size_t> rows, double threshold) {
  if (col.values.size() != rows.size()) throw InvalidArgument("projected column and targets differ in length");
  detail::require(std::isfinite(threshold), "threshold must be finite");
  detail::LossAccumulator acc(t, rows);
  auto left = acc.empty();
  auto right = acc.empty();
  for (std::size_t i = 0; i < rows.size(); ++i) acc.add(col.values[i] < threshold ? left : right, rows[i]);
  SplitEvaluation e;
  e.threshold = threshold;
  e.n_left = left.n;
  e.n_right = right.n;
  if (left.n > 0 && right.n > 0) e.loss = acc.pair(left, right);
  return e;
}

/// Best split of the projected column over the bins-1 uniform bin boundaries.
/// Ties go to the smaller threshold; a constant column is infeasible.
inline SplitEvaluation dft_cost(const ProjectedColumn& col, const TargetView& t,
                                std::span<const std::size_t> rows, int bins) {
  if (rows.size() < 2) throw InvalidArgument("discriminant test needs at least two samples");
  if (col.values.size() != rows.size()) throw InvalidArgument("projected column and targets differ in length");
  const auto thresholds = candidate_thresholds(col, bins);
  SplitEvaluation best;
  best.threshold = col.f_min;
  if (thresholds.empty()) return best;

  // Slot k holds samples with exactly k thresholds <= v, so threshold b
  // (1-based) sends slots [0, b) left.
  detail::LossAccumulator acc(t, rows);
  const auto n_slots = static_cast<std::size_t>(bins);
  std::vector<detail::SideStats> slots(n_slots, acc.empty());
  const double scale = static_cast<double>(bins) / (col.f_max - col.f_min);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double v = col.values[i];
    auto k = static_cast<std::ptrdiff_t>(std::floor((v - col.f_min) * scale));
    k = std::clamp<std::ptrdiff_t>(k, 0, bins - 1);
    while (k > 0 && v < thresholds[static_cast<std::size_t>(k - 1)]) --k;
    while (k < bins - 1 && v >= thresholds[static_cast<std::size_t>(k)]) ++k;
    acc.add(slots[static_cast<std::size_t>(k)], rows[i]);
  }

  auto total = acc.empty();
  for (const auto& s : slots) total.merge(s);
  auto left = acc.empty();
  for (std::size_t b = 1; b < n_slots; ++b) {
    left.merge(slots[b - 1]);
    if (left.n == 0 || left.n == total.n) continue;
    auto right = acc.empty();
    for (std::size_t j = b; j < n_slots; ++j) right.merge(slots[j]);
    const double loss = acc.pair(left, right);
    if (loss < best.loss) {
      best.loss = loss;
      best.threshold = thresholds[b - 1];
      best.n_left = left.n;
      best.n_right = right.n;
    }
  }
  return best;
}

struct RankedFeature {
  std::size_t dim = 0;
  SplitEvaluation cost;
};

/// Dimensions sorted by ascending discriminant cost of their basis
/// projection; stable on ties, so constant columns keep their order at the end.
inline std::vector<RankedFeature> rank_features(const Matrix& features, std::span<const std::size_t> rows,
                                                const TargetView& t, int bins) {
  std::vector<RankedFeature> ranked;
  ranked.reserve(features.cols());
  for (std::size_t d = 0; d < features.cols(); ++d) {
    std::vector<double> v;
    v.reserve(rows.size());
    for (auto r : rows) v.push_back(features(r, d));
    ranked.push_back({d, dft_cost(ProjectedColumn::from_values(std::move(v)), t, rows, bins)});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedFeature& a, const RankedFeature& b) { return a.cost.loss < b.cost.loss; });
  return ranked;
}

}  // namespace slm
