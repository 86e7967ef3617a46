#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "shortcut/error.hpp"
#include "shortcut/random.hpp"

namespace shortcut {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// How the training-split shortcut column is tied to the other variables.
enum class ShortcutKind {
  kConceptCorrelated,  // S = sum_i delta_ci C_i
  kUnknownCorrelated,  // S = sum_i delta_ci C_i + sum_j delta_uj U_j
  kOutputCorrelated,   // S = Y + eta, eta ~ N(0, coeff^2)
  kIndependent,        // S ~ N(0, 1)
};

inline std::string_view to_string(ShortcutKind kind) {
  switch (kind) {
    case ShortcutKind::kConceptCorrelated: return "ConceptCorrelated";
    case ShortcutKind::kUnknownCorrelated: return "UnknownCorrelated";
    case ShortcutKind::kOutputCorrelated: return "OutputCorrelated";
    case ShortcutKind::kIndependent: return "Independent";
  }
  return "Unknown";
}

inline ShortcutKind parse_shortcut_kind(std::string_view name) {
  if (name == "ConceptCorrelated") return ShortcutKind::kConceptCorrelated;
  if (name == "UnknownCorrelated") return ShortcutKind::kUnknownCorrelated;
  if (name == "OutputCorrelated") return ShortcutKind::kOutputCorrelated;
  if (name == "Independent") return ShortcutKind::kIndependent;
  throw Error(ErrorCode::kInvalidSpec, "unknown shortcut kind '" + std::string(name) + "'");
}

struct DatasetSpec {
  std::size_t n_train = 10000;
  std::size_t n_test = 10000;
  std::size_t c_dim = 2;
  std::size_t u_dim = 2;
  std::size_t s_dim = 1;
  VectorXd beta_c = VectorXd::Zero(2);
  VectorXd beta_u = VectorXd::Zero(2);
  /// Standard deviation of the additive noise on Y.
  double noise_sigma = 0.0;
  ShortcutKind shortcut_kind = ShortcutKind::kIndependent;
  /// delta_c then delta_u for the correlated kinds, the noise scale for
  /// OutputCorrelated, empty for Independent.
  std::vector<double> shortcut_coeffs;
  /// Extra N(0, sigma^2) noise on S for the Concept/UnknownCorrelated kinds.
  double shortcut_noise_sigma = 0.0;
  std::uint64_t seed = 0;

  std::size_t expected_coeff_count() const {
    switch (shortcut_kind) {
      case ShortcutKind::kConceptCorrelated: return c_dim;
      case ShortcutKind::kUnknownCorrelated: return c_dim + u_dim;
      case ShortcutKind::kOutputCorrelated: return 1;
      case ShortcutKind::kIndependent: return 0;
    }
    return 0;
  }

  void validate() const {
    if (n_train == 0 || n_test == 0 || c_dim == 0 || u_dim == 0 || s_dim == 0) {
      throw Error(ErrorCode::kInvalidSpec, "all dimensions and sample counts must be >= 1");
    }
    if (static_cast<std::size_t>(beta_c.size()) != c_dim) {
      throw Error(ErrorCode::kInvalidSpec, "beta_c length " + std::to_string(beta_c.size()) +
                                               " != c_dim " + std::to_string(c_dim));
    }
    if (static_cast<std::size_t>(beta_u.size()) != u_dim) {
      throw Error(ErrorCode::kInvalidSpec, "beta_u length " + std::to_string(beta_u.size()) +
                                               " != u_dim " + std::to_string(u_dim));
    }
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
      throw Error(ErrorCode::kInvalidSpec, "noise_sigma must be finite and >= 0");
    }
    if (!(shortcut_noise_sigma >= 0.0) || !std::isfinite(shortcut_noise_sigma)) {
      throw Error(ErrorCode::kInvalidSpec, "shortcut_noise_sigma must be finite and >= 0");
    }
    if (shortcut_coeffs.size() != expected_coeff_count()) {
      throw Error(ErrorCode::kInvalidSpec,
                  "shortcut_coeffs has " + std::to_string(shortcut_coeffs.size()) +
                      " entries, " + std::string(to_string(shortcut_kind)) + " needs " +
                      std::to_string(expected_coeff_count()));
    }
    for (double v : shortcut_coeffs) {
      if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidSpec, "non-finite shortcut coefficient");
    }
    if (shortcut_kind == ShortcutKind::kOutputCorrelated && shortcut_coeffs[0] < 0.0) {
      throw Error(ErrorCode::kInvalidSpec, "OutputCorrelated noise scale must be >= 0");
    }
  }
};

enum class Role { kTrain, kTest };

/// One split of {C, U, S, Y}; rows are samples.
struct Dataset {
  MatrixXd C;
  MatrixXd U;
  MatrixXd S;
  VectorXd Y;
  Role role = Role::kTrain;

  Eigen::Index n() const { return Y.size(); }
  Eigen::Index c() const { return C.cols(); }
  Eigen::Index u() const { return U.cols(); }
  Eigen::Index s() const { return S.cols(); }
  Eigen::Index width() const { return c() + u() + s(); }

  /// [U S]
  MatrixXd h_us() const {
    MatrixXd out(n(), u() + s());
    out << U, S;
    return out;
  }

  /// [C U S]
  MatrixXd features() const {
    MatrixXd out(n(), width());
    out << C, U, S;
    return out;
  }

  void check_shape() const {
    if (C.rows() != n() || U.rows() != n() || S.rows() != n()) {
      throw Error(ErrorCode::kDimensionMismatch, "dataset blocks have unequal row counts");
    }
  }
};

namespace detail {

inline void fill_split(const DatasetSpec& spec, std::size_t rows, Rng& rng, bool test,
                       Dataset& out) {
  const auto n = static_cast<Eigen::Index>(rows);
  const auto c = static_cast<Eigen::Index>(spec.c_dim);
  const auto u = static_cast<Eigen::Index>(spec.u_dim);
  const auto s = static_cast<Eigen::Index>(spec.s_dim);
  out.C.resize(n, c);
  out.U.resize(n, u);
  out.S.resize(n, s);
  out.Y.resize(n);
  out.role = test ? Role::kTest : Role::kTrain;

  // Draw order per row is fixed: C, U, eps, then the shortcut draws.
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) out.C(i, j) = rng.normal();
    for (Eigen::Index j = 0; j < u; ++j) out.U(i, j) = rng.normal();
    double y = out.C.row(i).dot(spec.beta_c) + out.U.row(i).dot(spec.beta_u);
    if (spec.noise_sigma > 0.0) y += spec.noise_sigma * rng.normal();
    out.Y(i) = y;

    for (Eigen::Index k = 0; k < s; ++k) {
      if (test) {
        out.S(i, k) = rng.normal();
        continue;
      }
      double value = 0.0;
      switch (spec.shortcut_kind) {
        case ShortcutKind::kConceptCorrelated:
        case ShortcutKind::kUnknownCorrelated: {
          for (Eigen::Index j = 0; j < c; ++j) value += spec.shortcut_coeffs[j] * out.C(i, j);
          if (spec.shortcut_kind == ShortcutKind::kUnknownCorrelated) {
            for (Eigen::Index j = 0; j < u; ++j) {
              value += spec.shortcut_coeffs[c + j] * out.U(i, j);
            }
          }
          if (spec.shortcut_noise_sigma > 0.0) value += spec.shortcut_noise_sigma * rng.normal();
          break;
        }
        case ShortcutKind::kOutputCorrelated:
          value = y + spec.shortcut_coeffs[0] * rng.normal();
          break;
        case ShortcutKind::kIndependent:
          value = rng.normal();
          break;
      }
      out.S(i, k) = value;
    }
  }
}

}  // namespace detail

/// Draws a train/test pair. Train and test use separate streams derived
/// from `spec.seed`, so changing n_test never perturbs the training split.
inline std::pair<Dataset, Dataset> generate_synthetic(const DatasetSpec& spec) {
  spec.validate();
  Rng train_rng(hash_combine(spec.seed, "train"));
  Rng test_rng(hash_combine(spec.seed, "test"));
  Dataset train;
  Dataset test;
  detail::fill_split(spec, spec.n_train, train_rng, false, train);
  detail::fill_split(spec, spec.n_test, test_rng, true, test);
  return {std::move(train), std::move(test)};
}

/// Per-column train statistics. Standard deviations use the population
/// divisor n.
struct StandardizeStats {
  VectorXd c_mean, c_std;
  VectorXd u_mean, u_std;
  VectorXd s_mean, s_std;
  double y_mean = 0.0;
  double y_std = 1.0;
};

namespace detail {

inline std::pair<double, double> column_moments(const Eigen::Ref<const VectorXd>& col) {
  const double mean = col.mean();
  const double var = (col.array() - mean).square().mean();
  return {mean, std::sqrt(var)};
}

inline void block_moments(const MatrixXd& m, std::string_view name, VectorXd& mean, VectorXd& sd) {
  mean.resize(m.cols());
  sd.resize(m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    auto [mu, sigma] = column_moments(m.col(j));
    if (!(sigma > 1e-12 * std::max(1.0, std::abs(mu)))) {
      throw Error(ErrorCode::kDegenerateColumn,
                  std::string(name) + std::to_string(j) + " has zero standard deviation");
    }
    mean(j) = mu;
    sd(j) = sigma;
  }
}

inline void apply_block(MatrixXd& m, const VectorXd& mean, const VectorXd& sd) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    m.col(j) = (m.col(j).array() - mean(j)) / sd(j);
  }
}

}  // namespace detail

inline StandardizeStats compute_standardize_stats(const Dataset& train) {
  train.check_shape();
  if (train.n() == 0) throw Error(ErrorCode::kDegenerateColumn, "empty training split");
  StandardizeStats stats;
  detail::block_moments(train.C, "c", stats.c_mean, stats.c_std);
  detail::block_moments(train.U, "u", stats.u_mean, stats.u_std);
  detail::block_moments(train.S, "s", stats.s_mean, stats.s_std);
  auto [ym, ys] = detail::column_moments(train.Y);
  if (!(ys > 1e-12 * std::max(1.0, std::abs(ym)))) {
    throw Error(ErrorCode::kDegenerateColumn, "y has zero standard deviation");
  }
  stats.y_mean = ym;
  stats.y_std = ys;
  return stats;
}

inline Dataset apply_standardize(Dataset ds, const StandardizeStats& stats) {
  if (ds.c() != stats.c_mean.size() || ds.u() != stats.u_mean.size() ||
      ds.s() != stats.s_mean.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "dataset dims differ from standardization stats");
  }
  detail::apply_block(ds.C, stats.c_mean, stats.c_std);
  detail::apply_block(ds.U, stats.u_mean, stats.u_std);
  detail::apply_block(ds.S, stats.s_mean, stats.s_std);
  ds.Y = (ds.Y.array() - stats.y_mean) / stats.y_std;
  return ds;
}

struct StandardizedPair {
  Dataset train;
  Dataset test;
  StandardizeStats stats;
};

/// Zero-mean, unit-variance columns (Y included) from train statistics;
/// the test split is transformed with the same statistics.
inline StandardizedPair standardize(const Dataset& train, const Dataset& test) {
  StandardizeStats stats = compute_standardize_stats(train);
  return {apply_standardize(train, stats), apply_standardize(test, stats), stats};
}

// CSV: header c0..c{c-1},u0..,s0..,y; one sample per line.

inline std::string csv_header(Eigen::Index c, Eigen::Index u, Eigen::Index s) {
  std::string header;
  auto add = [&](char prefix, Eigen::Index count) {
    for (Eigen::Index j = 0; j < count; ++j) {
      header += prefix;
      header += std::to_string(j);
      header += ',';
    }
  };
  add('c', c);
  add('u', u);
  add('s', s);
  header += 'y';
  return header;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_dataset(const Dataset& ds, const std::string& path) {
  ds.check_shape();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open '" + path + "' for writing");
  out << csv_header(ds.c(), ds.u(), ds.s()) << '\n';
  std::string line;
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    line.clear();
    for (Eigen::Index j = 0; j < ds.c(); ++j) (line += format_double(ds.C(i, j))) += ',';
    for (Eigen::Index j = 0; j < ds.u(); ++j) (line += format_double(ds.U(i, j))) += ',';
    for (Eigen::Index j = 0; j < ds.s(); ++j) (line += format_double(ds.S(i, j))) += ',';
    line += format_double(ds.Y(i));
    out << line << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "write to '" + path + "' failed");
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

inline double parse_cell(std::string_view cell, std::size_t line_no) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || cell.empty()) {
    throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) +
                                            ": non-numeric cell '" + std::string(cell) + "'");
  }
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": non-finite value");
  }
  return value;
}

}  // namespace detail

inline Dataset parse_dataset(std::istream& in, Role role = Role::kTrain) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParseError, "line 1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = detail::split_commas(line);

  // Column names must be c0.., u0.., s0.., y in that order.
  Eigen::Index counts[3] = {0, 0, 0};
  const char prefixes[3] = {'c', 'u', 's'};
  std::size_t pos = 0;
  for (int block = 0; block < 3; ++block) {
    while (pos < header.size() && !header[pos].empty() && header[pos][0] == prefixes[block]) {
      std::string expected = std::string(1, prefixes[block]) + std::to_string(counts[block]);
      if (header[pos] != expected) {
        throw Error(ErrorCode::kParseError,
                    "line 1: expected column '" + expected + "', got '" + std::string(header[pos]) + "'");
      }
      ++counts[block];
      ++pos;
    }
  }
  if (pos + 1 != header.size() || header[pos] != "y") {
    throw Error(ErrorCode::kParseError, "line 1: bad header '" + line + "'");
  }
  if (counts[0] == 0 || counts[1] == 0 || counts[2] == 0) {
    throw Error(ErrorCode::kParseError, "line 1: header needs at least one c, u and s column");
  }

  const std::size_t width = header.size();
  std::vector<double> values;
  std::size_t line_no = 1;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = detail::split_commas(line);
    if (cells.size() != width) {
      throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": expected " +
                                              std::to_string(width) + " fields, got " +
                                              std::to_string(cells.size()));
    }
    for (auto cell : cells) values.push_back(detail::parse_cell(cell, line_no));
    ++rows;
  }

  Dataset ds;
  ds.role = role;
  const auto n = static_cast<Eigen::Index>(rows);
  ds.C.resize(n, counts[0]);
  ds.U.resize(n, counts[1]);
  ds.S.resize(n, counts[2]);
  ds.Y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* row = values.data() + static_cast<std::size_t>(i) * width;
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < counts[0]; ++j) ds.C(i, j) = row[k++];
    for (Eigen::Index j = 0; j < counts[1]; ++j) ds.U(i, j) = row[k++];
    for (Eigen::Index j = 0; j < counts[2]; ++j) ds.S(i, j) = row[k++];
    ds.Y(i) = row[k];
  }
  return ds;
}

inline Dataset read_dataset(const std::string& path, Role role = Role::kTrain) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path + "'");
  return parse_dataset(in, role);
}

}  // namespace shortcut
