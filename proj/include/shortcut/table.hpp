#pragma once

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "shortcut/dataset.hpp"
#include "shortcut/error.hpp"

namespace shortcut {

/// Column-typed table of pre-formatted cells. Real cells are written with
/// 17 significant digits, so CSV and JSON carry the same doubles.
class Table {
 public:
  enum class Kind { kText, kInteger, kReal, kBool };

  struct Column {
    std::string name;
    Kind kind;
  };

  Table() = default;
  explicit Table(std::vector<Column> columns) : columns_(std::move(columns)) {}

  const std::vector<Column>& columns() const { return columns_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }

  std::size_t column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      if (columns_[i].name == name) return i;
    }
    throw Error(ErrorCode::kIndexOutOfRange, "no column '" + std::string(name) + "'");
  }

  bool has_column(std::string_view name) const {
    for (const auto& c : columns_) {
      if (c.name == name) return true;
    }
    return false;
  }

  const std::string& cell(std::size_t row, std::string_view column) const {
    return rows_.at(row).at(column_index(column));
  }

  double number(std::size_t row, std::string_view column) const {
    return parse_number(cell(row, column));
  }

  void add_row(std::vector<std::string> cells) {
    if (cells.size() != columns_.size()) {
      throw Error(ErrorCode::kLengthMismatch, "row has " + std::to_string(cells.size()) +
                                                  " cells, table has " +
                                                  std::to_string(columns_.size()) + " columns");
    }
    rows_.push_back(std::move(cells));
  }

  static std::string real(double v) { return std::isnan(v) ? "nan" : format_double(v); }
  static std::string integer(std::uint64_t v) { return std::to_string(v); }
  static std::string boolean(bool v) { return v ? "true" : "false"; }

  static double parse_number(std::string_view s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw Error(ErrorCode::kParseError, "not a number: '" + std::string(s) + "'");
    }
    return v;
  }

  std::string to_csv() const {
    std::ostringstream out;
    for (std::size_t i = 0; i < columns_.size(); ++i) out << (i ? "," : "") << columns_[i].name;
    out << '\n';
    for (const auto& row : rows_) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
      out << '\n';
    }
    return out.str();
  }

  /// Array of row objects; NaN and infinities become null.
  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& row : rows_) {
      nlohmann::ordered_json obj = nlohmann::ordered_json::object();
      for (std::size_t i = 0; i < columns_.size(); ++i) {
        const std::string& v = row[i];
        switch (columns_[i].kind) {
          case Kind::kText:
            obj[columns_[i].name] = v;
            break;
          case Kind::kBool:
            obj[columns_[i].name] = v == "true";
            break;
          case Kind::kInteger: {
            std::uint64_t x = 0;
            std::from_chars(v.data(), v.data() + v.size(), x);
            obj[columns_[i].name] = x;
            break;
          }
          case Kind::kReal: {
            const double x = parse_number(v);
            if (std::isfinite(x)) {
              obj[columns_[i].name] = x;
            } else {
              obj[columns_[i].name] = nullptr;
            }
            break;
          }
        }
      }
      arr.push_back(std::move(obj));
    }
    return arr;
  }

  /// Reads a CSV written by to_csv(). Column kinds are inferred: all-integer
  /// columns become kInteger, numeric (or "nan") columns kReal, true/false
  /// columns kBool, everything else kText.
  static Table parse_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::kParseError, "empty table");
    std::vector<std::string> names;
    for (auto v : detail::split_commas(line)) names.emplace_back(v);
    std::vector<std::vector<std::string>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::vector<std::string> cells;
      for (auto v : detail::split_commas(line)) cells.emplace_back(v);
      if (cells.size() != names.size()) {
        throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": expected " +
                                                std::to_string(names.size()) + " cells, got " +
                                                std::to_string(cells.size()));
      }
      rows.push_back(std::move(cells));
    }
    std::vector<Column> cols;
    for (std::size_t j = 0; j < names.size(); ++j) {
      bool all_int = !rows.empty();
      bool all_num = !rows.empty();
      bool all_bool = !rows.empty();
      for (const auto& r : rows) {
        const std::string& v = r[j];
        all_bool = all_bool && (v == "true" || v == "false");
        bool is_int = !v.empty() && v.find_first_not_of("0123456789") == std::string::npos;
        all_int = all_int && is_int;
        bool is_num = true;
        try {
          parse_number(v);
        } catch (const Error&) {
          is_num = false;
        }
        all_num = all_num && is_num;
      }
      Kind k = all_bool ? Kind::kBool : all_int ? Kind::kInteger : all_num ? Kind::kReal : Kind::kText;
      cols.push_back({names[j], k});
    }
    Table t(std::move(cols));
    for (auto& r : rows) t.add_row(std::move(r));
    return t;
  }

  static Table read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path + "'");
    return parse_csv(in);
  }

 private:
  std::vector<Column> columns_;
  std::vector<std::vector<std::string>> rows_;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write '" + path + "'");
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "write failed for '" + path + "'");
}

}  // namespace shortcut
