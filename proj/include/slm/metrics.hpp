#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "slm/error.hpp"

namespace slm {

inline double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  detail::require(predicted.size() == truth.size() && !truth.empty(), "accuracy needs equal, nonempty inputs");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

inline double mse(std::span<const double> predicted, std::span<const double> truth) {
  detail::require(predicted.size() == truth.size() && !truth.empty(), "mse needs equal, nonempty inputs");
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) s += (predicted[i] - truth[i]) * (predicted[i] - truth[i]);
  return s / static_cast<double>(truth.size());
}

inline double rmse(std::span<const double> predicted, std::span<const double> truth) {
  return std::sqrt(mse(predicted, truth));
}

// Mean negative log-likelihood of the true class; probabilities are clipped
// to [1e-15, 1].
inline double log_loss(std::span<const std::vector<double>> probabilities, std::span<const int> truth) {
  detail::require(probabilities.size() == truth.size() && !truth.empty(), "log_loss needs equal, nonempty inputs");
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    s -= std::log(std::max(probabilities[i][static_cast<std::size_t>(truth[i])], 1e-15));
  return s / static_cast<double>(truth.size());
}

}  // namespace slm
