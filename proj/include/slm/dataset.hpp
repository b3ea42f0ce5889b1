#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slm/error.hpp"

namespace slm {

enum class Task { classification, regression };

inline std::string_view to_string(Task t) {
  return t == Task::classification ? "classification" : "regression";
}

inline Task parse_task(std::string_view s) {
  if (s == "classification") return Task::classification;
  if (s == "regression") return Task::regression;
  throw InvalidArgument("unknown task '" + std::string(s) + "'");
}

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<const double> data() const noexcept { return data_; }

  void push_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    if (values.size() != cols_) throw InvalidArgument("row length does not match matrix width");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  // Column subset, in the order given.
  Matrix select_columns(std::span<const std::size_t> cols) const {
    Matrix out(rows_, cols.size());
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t j = 0; j < cols.size(); ++j) out(r, j) = (*this)(r, cols[j]);
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Feature matrix plus either integer class labels or real targets.
///
/// For classification the class count is carried explicitly, so a split that
/// happens to miss a class still reports the full K.
struct Dataset {
  Matrix features;
  Task task = Task::classification;
  std::vector<int> labels;     // classification only, values in [0, num_classes)
  std::vector<double> values;  // regression only
  int num_classes = 0;         // classification only
  std::vector<std::string> feature_names;
  std::string target_name = "y";

  std::size_t size() const noexcept { return features.rows(); }
  std::size_t dims() const noexcept { return features.cols(); }

  void validate() const {
    detail::require(size() >= 1, "dataset has no samples");
    detail::require(dims() >= 1, "dataset has no feature columns");
    for (double v : features.data())
      if (!std::isfinite(v)) throw InvalidArgument("dataset contains a non-finite feature value");
    if (!feature_names.empty() && feature_names.size() != dims())
      throw InvalidArgument("feature_names length does not match dimension");
    if (task == Task::classification) {
      detail::require(labels.size() == size(), "label count does not match sample count");
      detail::require(num_classes >= 2, "classification needs at least two classes");
      for (int y : labels)
        if (y < 0 || y >= num_classes)
          throw InvalidArgument("label " + std::to_string(y) + " outside [0, " +
                                std::to_string(num_classes) + ")");
    } else {
      detail::require(values.size() == size(), "target count does not match sample count");
      for (double v : values)
        if (!std::isfinite(v)) throw InvalidArgument("dataset contains a non-finite target");
    }
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset out;
    out.task = task;
    out.num_classes = num_classes;
    out.feature_names = feature_names;
    out.target_name = target_name;
    out.features = Matrix(idx.size(), dims());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto src = features.row(idx[i]);
      std::copy(src.begin(), src.end(), out.features.row(i).begin());
    }
    if (task == Task::classification) {
      out.labels.reserve(idx.size());
      for (auto i : idx) out.labels.push_back(labels[i]);
    } else {
      out.values.reserve(idx.size());
      for (auto i : idx) out.values.push_back(values[i]);
    }
    return out;
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

}  // namespace slm
