#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "slm/dataset.hpp"
#include "slm/error.hpp"
#include "slm/random.hpp"

namespace slm {

// Shape and noise knobs for the 2D generators. The noisy fraction of samples
// is chosen uniformly without replacement and receives isotropic Gaussian
// jitter of standard deviation `jitter` on top of the per-sample noise.
struct CircleRingOptions {
  double blob_std = 0.5;     // inner class: isotropic Gaussian around the origin
  double ring_inner = 1.4;   // outer class: radius uniform on [ring_inner, ring_outer]
  double ring_outer = 2.4;
  double jitter = 1.0;
};

struct MoonsOptions {
  double point_noise = 0.05;  // per-coordinate Gaussian noise on every sample
  double jitter = 0.5;
  double pair_shift = 3.5;  // horizontal offset between consecutive moon pairs
};

enum class FriedmanRanges {
  standard,  // x1 in [0,100], x2 in [40pi,560pi], x3 in [0,1], x4 in [1,11] (variants 2, 3)
  unit,      // every input uniform on [0,1]
};

struct FriedmanOptions {
  double noise = 0.0;  // std of additive Gaussian noise on the target
  FriedmanRanges ranges = FriedmanRanges::standard;
};

namespace detail {

inline void add_boundary_noise(Matrix& x, double fraction, double jitter, Rng& rng) {
  const std::size_t n = x.rows();
  const auto n_noisy = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < n_noisy; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
    for (std::size_t c = 0; c < x.cols(); ++c) x(idx[i], c) += rng.normal(0.0, jitter);
  }
}

inline void check_2d_args(std::size_t n_per_class, double noise_fraction) {
  require(n_per_class >= 1, "n_per_class must be at least 1");
  require(noise_fraction >= 0.0 && noise_fraction <= 1.0, "noise fraction must lie in [0, 1]");
}

}  // namespace detail

/// Inner Gaussian blob (class 0) surrounded by an annulus (class 1).
inline Dataset gen_circle_and_ring(std::size_t n_per_class, double noise_fraction, std::uint64_t seed,
                                   const CircleRingOptions& opt = {}) {
  detail::check_2d_args(n_per_class, noise_fraction);
  Rng rng(seed);
  Dataset ds;
  ds.task = Task::classification;
  ds.num_classes = 2;
  ds.feature_names = {"x0", "x1"};
  ds.features = Matrix(2 * n_per_class, 2);
  for (std::size_t i = 0; i < n_per_class; ++i) {
    ds.features(i, 0) = rng.normal(0.0, opt.blob_std);
    ds.features(i, 1) = rng.normal(0.0, opt.blob_std);
    ds.labels.push_back(0);
  }
  for (std::size_t i = 0; i < n_per_class; ++i) {
    const double r = rng.uniform(opt.ring_inner, opt.ring_outer);
    const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
    ds.features(n_per_class + i, 0) = r * std::cos(t);
    ds.features(n_per_class + i, 1) = r * std::sin(t);
    ds.labels.push_back(1);
  }
  detail::add_boundary_noise(ds.features, noise_fraction, opt.jitter, rng);
  return ds;
}

/// Interleaving half-circle arcs, one class per moon. Even moons open
/// downward, odd moons upward; the second pair of moons is shifted right by
/// `pair_shift` so that four moons form a chain of interleaved arcs.
inline Dataset gen_moons(int n_moons, std::size_t n_per_class, double noise_fraction, std::uint64_t seed,
                         const MoonsOptions& opt = {}) {
  detail::require(n_moons == 2 || n_moons == 4, "n_moons must be 2 or 4");
  detail::check_2d_args(n_per_class, noise_fraction);
  Rng rng(seed);
  Dataset ds;
  ds.task = Task::classification;
  ds.num_classes = n_moons;
  ds.feature_names = {"x0", "x1"};
  ds.features = Matrix(static_cast<std::size_t>(n_moons) * n_per_class, 2);
  std::size_t row = 0;
  for (int k = 0; k < n_moons; ++k) {
    const double shift = opt.pair_shift * static_cast<double>(k / 2);
    for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
      const double t = rng.uniform(0.0, std::numbers::pi);
      double x = std::cos(t);
      double y = std::sin(t);
      if (k % 2 == 1) {
        x = 1.0 - x;
        y = 0.5 - y;
      }
      ds.features(row, 0) = x + shift + rng.normal(0.0, opt.point_noise);
      ds.features(row, 1) = y + rng.normal(0.0, opt.point_noise);
      ds.labels.push_back(k);
    }
  }
  detail::add_boundary_noise(ds.features, noise_fraction, opt.jitter, rng);
  return ds;
}

/// Noise-free Friedman response. Variant 1 reads only x[0..4].
inline double friedman_response(int variant, std::span<const double> x) {
  using std::numbers::pi;
  switch (variant) {
    case 1:
      return 10.0 * std::sin(pi * x[0] * x[1]) + 20.0 * (x[2] - 0.5) * (x[2] - 0.5) + 10.0 * x[3] + 5.0 * x[4];
    case 2:
      return std::sqrt(x[0] * x[0] + std::pow(x[1] * x[2] - 1.0 / (x[1] * x[3]), 2.0));
    case 3:
      return std::atan((x[1] * x[2] - 1.0 / (x[1] * x[3])) / x[0]);
    default:
      detail::fail_argument("friedman variant must be 1, 2 or 3");
  }
}

/// Friedman regression benchmarks. Variant 1 draws n_features inputs on
/// [0,1], of which only the first five influence the target; variants 2 and 3
/// have four inputs.
inline Dataset gen_friedman(int variant, std::size_t n, std::size_t n_features, std::uint64_t seed,
                            const FriedmanOptions& opt = {}) {
  detail::require(variant >= 1 && variant <= 3, "friedman variant must be 1, 2 or 3");
  detail::require(n >= 1, "n must be at least 1");
  if (variant == 1 && n_features <= 5) detail::fail_argument("friedman1 requires more than 5 features");
  detail::require(opt.noise >= 0.0, "noise must be nonnegative");
  const std::size_t d = variant == 1 ? n_features : 4;
  Rng rng(seed);
  Dataset ds;
  ds.task = Task::regression;
  ds.features = Matrix(n, d);
  for (std::size_t j = 0; j < d; ++j) ds.feature_names.push_back("x" + std::to_string(j));
  const bool wide = variant != 1 && opt.ranges == FriedmanRanges::standard;
  for (std::size_t i = 0; i < n; ++i) {
    auto x = ds.features.row(i);
    for (std::size_t j = 0; j < d; ++j) x[j] = rng.uniform();
    if (wide) {
      x[0] *= 100.0;
      x[1] = 40.0 * std::numbers::pi + x[1] * 520.0 * std::numbers::pi;
      x[3] = 1.0 + x[3] * 10.0;
    }
    ds.values.push_back(friedman_response(variant, x) + opt.noise * rng.normal());
  }
  return ds;
}

}  // namespace slm
