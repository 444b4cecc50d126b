#pragma once

// CSV ingestion and tidy CSV output.
//
// Training files have a header row, one column named `y` and numeric
// covariates in the remaining columns. Test-input files carry the same
// covariate headers (any order) and no `y`.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "greedyshift/error.hpp"
#include "greedyshift/model_core.hpp"

namespace greedyshift::harness {

namespace internal {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_number(std::string_view field, std::size_t line_no, std::size_t column,
                           const std::string& file) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v))
    throw ValidationError(file + ": line " + std::to_string(line_no) + ", column " +
                          std::to_string(column + 1) + ": not a finite number: '" +
                          std::string(field) + "'");
  return v;
}

}  // namespace internal

/// Header plus numeric rows of a CSV file.
struct Table {
  std::vector<std::string> header;
  Matrix values;  ///< rows x columns

  Index column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<Index>(i);
    return -1;
  }
};

inline Table read_table(std::istream& in, const std::string& label) {
  std::string line;
  std::size_t line_no = 0;
  Table t;
  while (std::getline(in, line)) {
    ++line_no;
    if (!internal::trim(line).empty()) break;
  }
  if (line_no == 0 || internal::trim(line).empty())
    throw ValidationError(label + ": empty file (expected a header row)");
  for (auto f : internal::split(line)) {
    if (f.empty()) throw ValidationError(label + ": line " + std::to_string(line_no) + ": empty header name");
    t.header.emplace_back(f);
  }
  std::map<std::string, int> seen;
  for (const auto& h : t.header)
    if (seen[h]++) throw ValidationError(label + ": duplicate column '" + h + "'");

  std::vector<double> data;
  const std::size_t cols = t.header.size();
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (internal::trim(line).empty()) continue;
    const auto fields = internal::split(line);
    if (fields.size() != cols)
      throw ValidationError(label + ": line " + std::to_string(line_no) + ": expected " +
                            std::to_string(cols) + " fields, got " + std::to_string(fields.size()));
    for (std::size_t c = 0; c < cols; ++c)
      data.push_back(internal::parse_number(fields[c], line_no, c, label));
    ++rows;
  }
  t.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      data.data(), static_cast<Index>(rows), static_cast<Index>(cols));
  return t;
}

inline Table read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return read_table(in, path.string());
}

/// Training data plus, optionally, a column of precomputed importance values.
struct TrainingTable {
  Dataset data;
  std::optional<Vector> importance;
};

inline TrainingTable training_from_table(const Table& t, const std::string& label,
                                         const std::string& importance_column = {}) {
  const Index y_col = t.column("y");
  if (y_col < 0) throw ValidationError(label + ": no column named 'y'");
  Index w_col = -1;
  if (!importance_column.empty()) {
    w_col = t.column(importance_column);
    if (w_col < 0) throw ValidationError(label + ": no importance column '" + importance_column + "'");
  }
  std::vector<std::string> names;
  std::vector<Index> cols;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    const auto ci = static_cast<Index>(c);
    if (ci == y_col || ci == w_col) continue;
    names.push_back(t.header[c]);
    cols.push_back(ci);
  }
  if (cols.empty()) throw ValidationError(label + ": no covariate columns");
  Matrix x(t.values.rows(), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) x.col(static_cast<Index>(i)) = t.values.col(cols[i]);
  std::optional<Vector> w;
  if (w_col >= 0) w = t.values.col(w_col);
  return TrainingTable{Dataset(std::move(x), t.values.col(y_col), std::move(names)), std::move(w)};
}

/// Reorders a test-input table to the given covariate names.
inline Matrix inputs_from_table(const Table& t, const std::vector<std::string>& names,
                                const std::string& label) {
  Matrix x(t.values.rows(), static_cast<Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) {
    const Index c = t.column(names[i]);
    if (c < 0) throw ValidationError(label + ": missing covariate column '" + names[i] + "'");
    x.col(static_cast<Index>(i)) = t.values.col(c);
  }
  return x;
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

/// Writes covariates named `names` and, when given, a trailing `y` column.
inline void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& names,
                             const Matrix& x, const Vector* y = nullptr) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
  if (y) out << ",y";
  out << '\n';
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index c = 0; c < x.cols(); ++c) out << (c ? "," : "") << format_double(x(r, c));
    if (y) out << ',' << format_double((*y)(r));
    out << '\n';
  }
}

inline std::vector<std::string> default_feature_names(Index p) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

}  // namespace greedyshift::harness
