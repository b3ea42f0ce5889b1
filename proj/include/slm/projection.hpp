#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <span>
#include <vector>

#include "slm/dft.hpp"
#include "slm/error.hpp"
#include "slm/random.hpp"

namespace slm {

// One generation round; overrides the base decay rates and active count.
struct ProjectionRound {
  double alpha = 0.5;
  double beta = 0.5;
  std::size_t r = 2;

  friend bool operator==(const ProjectionRound&, const ProjectionRound&) = default;
};

struct ProjectionParams {
  std::size_t d0 = 0;  // retained input dimensions; 0 keeps all
  std::size_t p = 64;  // sampled candidates per round
  std::size_t r = 2;   // active (nonzero-capable) coefficients per candidate
  double alpha = 0.5;  // envelope decay
  double a_int = 10.0; // envelope scale
  double beta = 0.5;   // selection-probability decay; 0 means uniform
  std::size_t q_max = 2;
  double theta_minimax = 0.7;
  std::vector<ProjectionRound> rounds;  // empty: a single round with the values above
  std::size_t exhaustive_limit = 512;
  std::size_t max_zero_redraws = 100;

  void validate() const {
    detail::require(p >= 1, "p must be at least 1");
    detail::require(r >= 1, "r must be at least 1");
    detail::require(alpha >= 0.0 && a_int > 0.0, "envelope parameters must be positive");
    detail::require(beta >= 0.0, "beta must be nonnegative");
    detail::require(q_max >= 1, "q_max must be at least 1");
    detail::require(theta_minimax > 0.0 && theta_minimax <= 1.0, "theta_minimax must lie in (0, 1]");
    for (const auto& rd : rounds)
      detail::require(rd.r >= 1 && rd.alpha >= 0.0 && rd.beta >= 0.0, "invalid projection round");
  }

  std::vector<ProjectionRound> effective_rounds() const {
    if (!rounds.empty()) return rounds;
    return {ProjectionRound{alpha, beta, r}};
  }

  friend bool operator==(const ProjectionParams&, const ProjectionParams&) = default;
};

/// Candidate direction. `coeffs` are the integer coefficients before
/// normalization, in subspace coordinates; `unit` = coeffs / |coeffs|.
struct ProjectionVector {
  std::vector<int> coeffs;
  std::vector<double> unit;
  SplitEvaluation cost;
};

/// A chosen hyperplane: samples with unit^T z >= threshold fall on the
/// positive side.
struct SplitRecord {
  std::vector<int> coeffs;
  std::vector<double> unit;
  double threshold = 0.0;
  double loss = 0.0;

  friend bool operator==(const SplitRecord&, const SplitRecord&) = default;
};

/// Coefficient bound A_d = a_int * exp(-alpha d), rank d starting at 1.
inline double envelope(double a_int, double alpha, std::size_t d) {
  detail::require(d >= 1, "rank index starts at 1");
  return a_int * std::exp(-alpha * static_cast<double>(d));
}

inline double envelope(const ProjectionParams& p, std::size_t d) { return envelope(p.a_int, p.alpha, d); }

/// P_d proportional to exp(-beta d) over d = 1..d0, normalized to sum to 1.
inline std::vector<double> selection_probabilities(double beta, std::size_t d0) {
  detail::require(d0 >= 1, "d0 must be at least 1");
  std::vector<double> p(d0);
  double total = 0.0;
  for (std::size_t d = 0; d < d0; ++d) total += p[d] = std::exp(-beta * static_cast<double>(d));
  for (auto& v : p) v /= total;
  return p;
}

inline std::vector<double> selection_probabilities(const ProjectionParams& p, std::size_t d0) {
  return selection_probabilities(p.beta, d0);
}

/// Draws `count` distinct positions without replacement, each draw
/// proportional to the remaining weights.
inline std::vector<std::size_t> draw_active_set(std::span<const double> weights, std::size_t count, Rng& rng) {
  std::vector<double> w(weights.begin(), weights.end());
  count = std::min(count, w.size());
  std::vector<std::size_t> picked;
  picked.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    double total = 0.0;
    for (double v : w) total += v;
    double u = rng.uniform() * total;
    std::size_t choice = w.size();
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (w[i] <= 0.0) continue;
      choice = i;
      if (u < w[i]) break;
      u -= w[i];
    }
    picked.push_back(choice);
    w[choice] = 0.0;
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

/// Flips the sign so the first nonzero coefficient is positive. Returns false
/// for the zero vector.
inline bool canonicalize_sign(std::vector<int>& coeffs) {
  for (int c : coeffs) {
    if (c == 0) continue;
    if (c < 0)
      for (auto& v : coeffs) v = -v;
    return true;
  }
  return false;
}

inline std::vector<double> normalize(std::span<const int> coeffs) {
  double norm2 = 0.0;
  for (int c : coeffs) norm2 += static_cast<double>(c) * c;
  const double norm = std::sqrt(norm2);
  std::vector<double> unit;
  unit.reserve(coeffs.size());
  for (int c : coeffs) unit.push_back(static_cast<double>(c) / norm);
  return unit;
}

/// Node state needed to generate candidates: subspace features of the whole
/// training set, the node's rows, and the subspace dims ordered by
/// discriminance (most discriminant first).
struct NodeContext {
  const Matrix& features;
  std::span<const std::size_t> rows;
  const TargetView& targets;
  int bins = 16;
  std::vector<std::size_t> ranking;
};

enum class CandidateStatus { ok, collapsed_envelope };

struct CandidateSet {
  CandidateStatus status = CandidateStatus::ok;
  std::vector<ProjectionVector> vectors;
  bool exhaustive = true;  // every round was enumerated
  // Search-space bounds prod (2 A_d + 1) over the top / bottom r ranks, last round.
  double upper_bound = 0.0;
  double lower_bound = 0.0;
};

namespace detail {

// Number of integer vectors with at most r nonzeros and |a_i| <= ranges[i],
// zero vector included. Saturates well above any sane exhaustive limit.
inline double count_search_space(std::span<const int> ranges, std::size_t r) {
  std::vector<double> e(r + 1, 0.0);
  e[0] = 1.0;
  for (int m : ranges)
    for (std::size_t k = r; k >= 1; --k) e[k] = std::min(1e300, e[k] + e[k - 1] * 2.0 * m);
  double total = 0.0;
  for (double v : e) total += v;
  return total;
}

inline void enumerate_vectors(std::span<const int> ranges, std::size_t r, std::size_t pos, std::size_t nonzero,
                              std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (pos == ranges.size()) {
    if (nonzero > 0) out.push_back(cur);
    return;
  }
  const int m = nonzero < r ? ranges[pos] : 0;
  for (int v = -m; v <= m; ++v) {
    cur[pos] = v;
    enumerate_vectors(ranges, r, pos + 1, nonzero + (v != 0 ? 1 : 0), cur, out);
  }
  cur[pos] = 0;
}

}  // namespace detail

/// Generates and scores candidate projections for one node.
///
/// Coefficients live on the ranked basis: rank d may take integers in
/// [-floor(A_d), floor(A_d)] and exactly r ranks are active per draw, chosen
/// with probabilities P_d. When the whole space (at most r nonzeros) holds no
/// more than `exhaustive_limit` vectors it is enumerated instead of sampled.
/// Only one of a and -a is kept. Each vector is scored with dft_cost.
inline CandidateSet sample_candidates(const NodeContext& ctx, const ProjectionParams& params, Rng& rng) {
  const std::size_t d0 = ctx.ranking.size();
  detail::require(d0 >= 1, "empty subspace");
  detail::require(ctx.rows.size() >= 2, "node needs at least two samples");
  CandidateSet out;
  std::set<std::vector<int>> seen;
  std::vector<std::vector<int>> accepted;

  // Accepts a ranked-basis draw; returns false if it is the zero vector.
  const auto accept = [&](std::span<const int> ranked) {
    std::vector<int> coeffs(d0, 0);
    for (std::size_t i = 0; i < d0; ++i) coeffs[ctx.ranking[i]] = ranked[i];
    if (!canonicalize_sign(coeffs)) return false;
    if (seen.insert(coeffs).second) accepted.push_back(std::move(coeffs));
    return true;
  };

  bool any_range = false;
  for (const auto& round : params.effective_rounds()) {
    const std::size_t r = std::min(round.r, d0);
    std::vector<int> ranges(d0);
    bool round_has_range = false;
    for (std::size_t i = 0; i < d0; ++i) {
      ranges[i] = static_cast<int>(std::floor(envelope(params.a_int, round.alpha, i + 1)));
      round_has_range = round_has_range || ranges[i] >= 1;
    }
    any_range = any_range || round_has_range;
    out.upper_bound = 1.0;
    out.lower_bound = 1.0;
    for (std::size_t i = 0; i < r; ++i) {
      out.upper_bound *= 2.0 * ranges[i] + 1.0;
      out.lower_bound *= 2.0 * ranges[d0 - 1 - i] + 1.0;
    }
    if (!round_has_range) continue;

    if (detail::count_search_space(ranges, r) <= static_cast<double>(params.exhaustive_limit)) {
      std::vector<int> cur(d0, 0);
      std::vector<std::vector<int>> all;
      detail::enumerate_vectors(ranges, r, 0, 0, cur, all);
      for (const auto& v : all) {
        // Both signs are enumerated; keep the canonical one only.
        std::vector<int> coeffs(d0, 0);
        for (std::size_t i = 0; i < d0; ++i) coeffs[ctx.ranking[i]] = v[i];
        const auto first = std::find_if(coeffs.begin(), coeffs.end(), [](int c) { return c != 0; });
        if (*first > 0) accept(v);
      }
      continue;
    }

    out.exhaustive = false;
    const auto probs = selection_probabilities(round.beta, d0);
    bool collapsed = false;
    for (std::size_t draw = 0; draw < params.p && !collapsed; ++draw) {
      for (std::size_t attempt = 0;; ++attempt) {
        if (attempt > params.max_zero_redraws) {
          collapsed = true;
          break;
        }
        std::vector<int> ranked(d0, 0);
        for (auto i : draw_active_set(probs, r, rng))
          ranked[i] = static_cast<int>(rng.integer(-ranges[i], ranges[i]));
        if (accept(ranked)) break;
      }
    }
  }
  if (!any_range || accepted.empty()) {
    out.status = CandidateStatus::collapsed_envelope;
    return out;
  }

  out.vectors.reserve(accepted.size());
  for (auto& coeffs : accepted) {
    ProjectionVector v;
    v.unit = normalize(coeffs);
    v.coeffs = std::move(coeffs);
    v.cost = dft_cost(project(v.unit, ctx.features, ctx.rows), ctx.targets, ctx.rows, ctx.bins);
    out.vectors.push_back(std::move(v));
  }
  return out;
}

inline double abs_cosine(std::span<const double> a, std::span<const double> b) {
  return std::abs(dot(a, b));
}

// |cos| values closer than this are treated as equal.
inline constexpr double kCosineTie = 1e-12;

/// Greedy minimax decorrelation. The first pick has the lowest cost (ties to
/// the lexicographically smallest coefficient vector); every later pick
/// minimizes its largest |cos| against all picks so far (ties to lower cost,
/// then smaller coefficients). Stops at q_max picks or when the best
/// remaining candidate exceeds theta_minimax.
inline std::vector<SplitRecord> select_decorrelated(std::span<const ProjectionVector> candidates,
                                                    std::size_t q_max, double theta_minimax) {
  std::vector<SplitRecord> chosen;
  if (candidates.empty() || q_max == 0) return chosen;
  const auto better_cost = [&](std::size_t a, std::size_t b) {
    if (candidates[a].cost.loss != candidates[b].cost.loss) return candidates[a].cost.loss < candidates[b].cost.loss;
    return candidates[a].coeffs < candidates[b].coeffs;
  };
  std::vector<char> used(candidates.size(), 0);
  std::vector<double> worst_cos(candidates.size(), 0.0);

  std::size_t pick = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i)
    if (better_cost(i, pick)) pick = i;

  for (;;) {
    const auto& c = candidates[pick];
    chosen.push_back({c.coeffs, c.unit, c.cost.threshold, c.cost.loss});
    used[pick] = 1;
    if (chosen.size() >= q_max) break;
    for (std::size_t i = 0; i < candidates.size(); ++i)
      if (!used[i]) worst_cos[i] = std::max(worst_cos[i], abs_cosine(candidates[i].unit, c.unit));
    std::size_t next = candidates.size();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (used[i]) continue;
      if (next == candidates.size() || worst_cos[i] < worst_cos[next] - kCosineTie ||
          (std::abs(worst_cos[i] - worst_cos[next]) <= kCosineTie && better_cost(i, next)))
        next = i;
    }
    if (next == candidates.size() || worst_cos[next] > theta_minimax) break;
    pick = next;
  }
  return chosen;
}

}  // namespace slm
