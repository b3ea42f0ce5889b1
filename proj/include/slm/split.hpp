#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "slm/dataset.hpp"
#include "slm/error.hpp"
#include "slm/random.hpp"

namespace slm {

struct SplitSpec {
  double train_fraction = 0.6;
  std::uint64_t seed = 0;
  bool stratify = true;  // classification only
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

namespace detail {
inline void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}
}  // namespace detail

/// Index partition with |train| = floor(L * fraction). With stratification
/// every class gets floor(n_c * fraction) training slots and the leftover
/// slots go to the classes with the largest fractional remainder (ties to
/// the smaller class id), so each class is within one sample of its share.
/// Both index lists are returned in ascending order.
inline SplitIndices split_indices(const Dataset& ds, const SplitSpec& spec) {
  const double f = spec.train_fraction;
  detail::require(f > 0.0 && f < 1.0, "train fraction must lie in (0, 1)");
  const std::size_t n = ds.size();
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * f));
  if (n_train < 1 || n_train >= n) throw InvalidArgument("degenerate split: one side would be empty");

  Rng rng(spec.seed);
  std::vector<char> in_train(n, 0);
  if (ds.task == Task::classification && spec.stratify) {
    const auto k = static_cast<std::size_t>(ds.num_classes);
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    std::vector<std::size_t> quota(k);
    std::vector<double> remainder(k);
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double share = static_cast<double>(members[c].size()) * f;
      quota[c] = static_cast<std::size_t>(std::floor(share));
      remainder[c] = share - static_cast<double>(quota[c]);
      assigned += quota[c];
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t i = 0; assigned < n_train && i < k; ++i) {
      const auto c = order[i];
      if (quota[c] < members[c].size()) {
        ++quota[c];
        ++assigned;
      }
    }
    for (std::size_t c = 0; c < k; ++c) {
      detail::shuffle(members[c], rng);
      for (std::size_t i = 0; i < quota[c]; ++i) in_train[members[c][i]] = 1;
    }
  } else {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    detail::shuffle(all, rng);
    for (std::size_t i = 0; i < n_train; ++i) in_train[all[i]] = 1;
  }

  SplitIndices out;
  for (std::size_t i = 0; i < n; ++i) (in_train[i] ? out.train : out.test).push_back(i);
  return out;
}

inline std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, const SplitSpec& spec) {
  const auto idx = split_indices(ds, spec);
  return {ds.subset(idx.train), ds.subset(idx.test)};
}

}  // namespace slm
