#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "slm/dataset.hpp"
#include "slm/error.hpp"
#include "slm/format.hpp"

namespace slm {

enum class CsvErrorKind {
  not_found,
  empty_file,
  malformed_row,
  non_numeric_cell,
  unknown_target_column,
  bad_target,
};

inline std::string_view to_string(CsvErrorKind k) {
  switch (k) {
    case CsvErrorKind::not_found: return "input not found";
    case CsvErrorKind::empty_file: return "empty file";
    case CsvErrorKind::malformed_row: return "malformed row";
    case CsvErrorKind::non_numeric_cell: return "non-numeric cell";
    case CsvErrorKind::unknown_target_column: return "unknown target column";
    case CsvErrorKind::bad_target: return "bad target value";
  }
  return "csv error";
}

/// Ingestion failure. `row` is the 1-based data row (header and comment lines
/// are not counted), 0 when the error is not tied to a row.
class CsvError : public InvalidArgument {
 public:
  CsvError(CsvErrorKind kind, std::size_t row, std::string column, const std::string& detail)
      : InvalidArgument(compose(kind, row, column, detail)),
        kind_(kind),
        row_(row),
        column_(std::move(column)) {}

  CsvErrorKind kind() const noexcept { return kind_; }
  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  static std::string compose(CsvErrorKind kind, std::size_t row, const std::string& column,
                             const std::string& detail) {
    std::string msg(to_string(kind));
    if (row > 0) msg += ": row " + std::to_string(row);
    if (!column.empty()) msg += (row > 0 ? ", column \"" : ": column \"") + column + "\"";
    if (!detail.empty()) msg += " (" + detail + ")";
    return msg;
  }

  CsvErrorKind kind_;
  std::size_t row_;
  std::string column_;
};

// Target column by header name or by zero-based position.
using TargetColumn = std::variant<std::string, std::size_t>;

struct CsvReadOptions {
  TargetColumn target = std::string("y");
  Task task = Task::classification;
  bool has_header = true;
  int num_classes = 0;  // 0: one more than the largest label
};

namespace detail {

struct RawCsv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline RawCsv read_cells(std::istream& in, bool has_header) {
  RawCsv raw;
  std::string line;
  bool header_pending = has_header;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::vector<std::string> cells;
    for (auto c : split_on(t, ',')) cells.emplace_back(trim(c));
    if (header_pending) {
      raw.header = std::move(cells);
      header_pending = false;
      continue;
    }
    raw.rows.push_back(std::move(cells));
  }
  if (raw.rows.empty()) throw CsvError(CsvErrorKind::empty_file, 0, "", "no data rows");
  return raw;
}

}  // namespace detail

// Selects the rightmost column as the target.
inline constexpr std::size_t kLastColumn = static_cast<std::size_t>(-1);

/// Reads the comma-separated dialect: optional single header row, '.' decimal
/// point, lines starting with '#' and blank lines skipped.
inline Dataset read_csv(std::istream& in, const CsvReadOptions& opt) {
  auto [header, rows] = detail::read_cells(in, opt.has_header);
  const std::size_t width = header.empty() ? rows.front().size() : header.size();
  if (width < 2) throw CsvError(CsvErrorKind::malformed_row, 1, "", "need at least two columns");

  std::size_t target = 0;
  if (const auto* name = std::get_if<std::string>(&opt.target)) {
    const auto it = std::find(header.begin(), header.end(), *name);
    if (it == header.end()) throw CsvError(CsvErrorKind::unknown_target_column, 0, *name, "");
    target = static_cast<std::size_t>(it - header.begin());
  } else {
    target = std::get<std::size_t>(opt.target);
    if (target == kLastColumn) target = width - 1;
    if (target >= width)
      throw CsvError(CsvErrorKind::unknown_target_column, 0, std::to_string(target), "index out of range");
  }

  const auto column_name = [&](std::size_t c) {
    return header.empty() ? std::to_string(c) : header[c];
  };

  Dataset ds;
  ds.task = opt.task;
  ds.target_name = header.empty() ? "y" : header[target];
  for (std::size_t c = 0; c < width; ++c)
    if (c != target) ds.feature_names.push_back(header.empty() ? "x" + std::to_string(ds.feature_names.size()) : header[c]);
  ds.features = Matrix(rows.size(), width - 1);

  int max_label = -1;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    if (cells.size() != width)
      throw CsvError(CsvErrorKind::malformed_row, r + 1, "",
                     "expected " + std::to_string(width) + " cells, found " + std::to_string(cells.size()));
    std::size_t j = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (c == target) {
        if (opt.task == Task::classification) {
          const auto y = parse_integer(cells[c]);
          if (!y || *y < 0 || *y > 1'000'000)
            throw CsvError(CsvErrorKind::bad_target, r + 1, column_name(c), "'" + cells[c] + "' is not a class id");
          ds.labels.push_back(static_cast<int>(*y));
          max_label = std::max(max_label, static_cast<int>(*y));
        } else {
          const auto y = parse_real(cells[c]);
          if (!y) throw CsvError(CsvErrorKind::bad_target, r + 1, column_name(c), "'" + cells[c] + "' is not a number");
          ds.values.push_back(*y);
        }
        continue;
      }
      const auto v = parse_real(cells[c]);
      if (!v) throw CsvError(CsvErrorKind::non_numeric_cell, r + 1, column_name(c), "'" + cells[c] + "'");
      ds.features(r, j++) = *v;
    }
  }
  if (opt.task == Task::classification) {
    ds.num_classes = opt.num_classes > 0 ? opt.num_classes : max_label + 1;
    if (ds.num_classes < 2 || max_label >= ds.num_classes)
      throw CsvError(CsvErrorKind::bad_target, 0, ds.target_name,
                     "classification needs labels in [0, K) with K >= 2");
  }
  ds.validate();
  return ds;
}

/// All-numeric table without a designated target, e.g. inputs for prediction.
struct CsvTable {
  std::vector<std::string> header;  // empty without a header row
  Matrix cells;
};

inline CsvTable read_table(std::istream& in, bool has_header = true) {
  auto raw = detail::read_cells(in, has_header);
  const std::size_t width = raw.header.empty() ? raw.rows.front().size() : raw.header.size();
  CsvTable t{std::move(raw.header), Matrix(raw.rows.size(), width)};
  for (std::size_t r = 0; r < raw.rows.size(); ++r) {
    const auto& cells = raw.rows[r];
    if (cells.size() != width)
      throw CsvError(CsvErrorKind::malformed_row, r + 1, "",
                     "expected " + std::to_string(width) + " cells, found " + std::to_string(cells.size()));
    for (std::size_t c = 0; c < width; ++c) {
      const auto v = parse_real(cells[c]);
      if (!v)
        throw CsvError(CsvErrorKind::non_numeric_cell, r + 1, t.header.empty() ? std::to_string(c) : t.header[c],
                       "'" + cells[c] + "'");
      t.cells(r, c) = *v;
    }
  }
  return t;
}

inline CsvTable load_table(const std::filesystem::path& path, bool has_header = true) {
  std::ifstream in(path);
  if (!in) throw CsvError(CsvErrorKind::not_found, 0, "", path.string());
  return read_table(in, has_header);
}

inline Dataset load_csv(const std::filesystem::path& path, const CsvReadOptions& opt) {
  std::ifstream in(path);
  if (!in) throw CsvError(CsvErrorKind::not_found, 0, "", path.string());
  return read_csv(in, opt);
}

inline Dataset load_csv(const std::filesystem::path& path, TargetColumn target, Task task,
                        bool has_header = true) {
  return load_csv(path, CsvReadOptions{std::move(target), task, has_header, 0});
}

/// Writes features followed by the target as the last column. Optional
/// comment lines are emitted first, each prefixed with "# ".
inline void write_csv(const Dataset& ds, std::ostream& out, std::span<const std::string> comments = {}) {
  for (const auto& c : comments) out << "# " << c << '\n';
  for (std::size_t j = 0; j < ds.dims(); ++j)
    out << (ds.feature_names.empty() ? "x" + std::to_string(j) : ds.feature_names[j]) << ',';
  out << ds.target_name << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.dims(); ++j) out << format_real(ds.features(i, j)) << ',';
    if (ds.task == Task::classification)
      out << ds.labels[i];
    else
      out << format_real(ds.values[i]);
    out << '\n';
  }
}

}  // namespace slm
