#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "shortcut/dataset.hpp"
#include "shortcut/error.hpp"
#include "shortcut/random.hpp"
#include "shortcut/regularizers.hpp"

namespace shortcut {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Uniform handle over fitted models: maps a full feature row [c u s] to a
/// prediction.
class Predictor {
 public:
  using Fn = std::function<double(const VectorXd&)>;

  Predictor(Eigen::Index width, Fn fn) : width_(width), fn_(std::move(fn)) {}

  static Predictor linear(const ModelParams& p) {
    VectorXd w(p.beta_c.size() + p.us_size());
    w << p.beta_c, p.beta_u, p.beta_s;
    const double b = p.intercept;
    return Predictor(w.size(), [w, b](const VectorXd& x) { return w.dot(x) + b; });
  }

  Eigen::Index width() const { return width_; }

  double operator()(const VectorXd& row) const {
    if (row.size() != width_) {
      throw Error(ErrorCode::kDimensionMismatch, "predictor expects " + std::to_string(width_) +
                                                     " features, got " + std::to_string(row.size()));
    }
    return fn_(row);
  }

 private:
  Eigen::Index width_;
  Fn fn_;
};

/// Sample standard deviation (divisor n - 1).
inline double sample_std(const VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
}

inline VectorXd draw_standard_normals(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  VectorXd draws(static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < draws.size(); ++i) draws(i) = rng.normal();
  return draws;
}

/// Treatment effect of one feature from a fixed set of substitute values:
/// the sample std of the predictions when `base_row[feature_index]` is
/// replaced by each draw.
inline double treatment_effect_from_draws(const Predictor& pred, const VectorXd& base_row,
                                          Eigen::Index feature_index, const VectorXd& draws) {
  if (feature_index < 0 || feature_index >= base_row.size()) {
    throw Error(ErrorCode::kIndexOutOfRange, "feature index " + std::to_string(feature_index) +
                                                 " outside row of width " +
                                                 std::to_string(base_row.size()));
  }
  if (draws.size() < 2) {
    throw Error(ErrorCode::kConfigError, "treatment effect needs at least 2 samples");
  }
  VectorXd row = base_row;
  VectorXd outputs(draws.size());
  for (Eigen::Index i = 0; i < draws.size(); ++i) {
    row(feature_index) = draws(i);
    outputs(i) = pred(row);
  }
  return sample_std(outputs);
}

/// Sampling-based treatment effect: resample the feature from N(0, 1)
/// `n_samples` times and report the spread of the model output.
inline double estimate_treatment_effect(const Predictor& pred, const VectorXd& base_row,
                                        Eigen::Index feature_index, std::size_t n_samples,
                                        std::uint64_t seed) {
  if (feature_index < 0 || feature_index >= base_row.size()) {
    throw Error(ErrorCode::kIndexOutOfRange, "feature index " + std::to_string(feature_index) +
                                                 " outside row of width " +
                                                 std::to_string(base_row.size()));
  }
  if (n_samples < 2) throw Error(ErrorCode::kConfigError, "n_samples must be >= 2");
  return treatment_effect_from_draws(pred, base_row, feature_index,
                                     draw_standard_normals(n_samples, seed));
}

inline double mse(const VectorXd& y, const VectorXd& yhat) {
  if (y.size() != yhat.size()) {
    throw Error(ErrorCode::kLengthMismatch, "mse: " + std::to_string(y.size()) + " vs " +
                                                std::to_string(yhat.size()));
  }
  if (y.size() == 0) throw Error(ErrorCode::kEmpty, "mse of empty vectors");
  return (y - yhat).squaredNorm() / static_cast<double>(y.size());
}

/// Mann-Whitney AUC; tied scores count one half.
inline double auc(const Eigen::VectorXi& labels, const VectorXd& scores) {
  if (labels.size() != scores.size()) {
    throw Error(ErrorCode::kLengthMismatch, "auc: label/score lengths differ");
  }
  const Eigen::Index n = scores.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return scores(a) < scores(b); });

  double positive_rank_sum = 0.0;
  double positives = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels(i) != 0 && labels(i) != 1) {
      throw Error(ErrorCode::kInvalidSpec, "auc labels must be 0 or 1");
    }
    positives += labels(i);
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) {
    throw Error(ErrorCode::kSingleClass, "auc needs both classes present");
  }

  // Average ranks (1-based) over runs of tied scores.
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores(order[j + 1]) == scores(order[i])) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels(order[k]) == 1) positive_rank_sum += avg_rank;
    }
    i = j + 1;
  }
  return (positive_rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

inline double pearson(const VectorXd& x, const VectorXd& y) {
  if (x.size() != y.size()) throw Error(ErrorCode::kLengthMismatch, "pearson: lengths differ");
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const VectorXd dx = x.array() - x.mean();
  const VectorXd dy = y.array() - y.mean();
  const double sxx = dx.squaredNorm();
  const double syy = dy.squaredNorm();
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return std::clamp(dx.dot(dy) / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Square matrix with row/column names. NaN marks undefined entries.
struct NamedMatrix {
  std::vector<std::string> names;
  MatrixXd values;

  double at(const std::string& row, const std::string& col) const {
    auto index = [&](const std::string& name) {
      auto it = std::find(names.begin(), names.end(), name);
      if (it == names.end()) throw Error(ErrorCode::kIndexOutOfRange, "no column '" + name + "'");
      return static_cast<Eigen::Index>(it - names.begin());
    };
    return values(index(row), index(col));
  }

  std::string to_csv() const {
    std::ostringstream out;
    out << "name";
    for (const auto& n : names) out << ',' << n;
    out << '\n';
    for (std::size_t i = 0; i < names.size(); ++i) {
      out << names[i];
      for (Eigen::Index j = 0; j < values.cols(); ++j) {
        const double v = values(static_cast<Eigen::Index>(i), j);
        out << ',' << (std::isnan(v) ? std::string("undefined") : format_double(v));
      }
      out << '\n';
    }
    return out.str();
  }
};

using NamedColumn = std::pair<std::string, VectorXd>;

/// Pearson correlations between all pairs of columns. Zero-variance
/// columns yield NaN entries (including the diagonal) instead of an error.
inline NamedMatrix correlation_matrix(const std::vector<NamedColumn>& columns) {
  NamedMatrix out;
  const auto k = static_cast<Eigen::Index>(columns.size());
  out.values.setConstant(k, k, std::numeric_limits<double>::quiet_NaN());
  for (const auto& [name, col] : columns) {
    if (col.size() != columns.front().second.size()) {
      throw Error(ErrorCode::kLengthMismatch, "column '" + name + "' has a different length");
    }
    out.names.push_back(name);
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i; j < k; ++j) {
      double r = pearson(columns[static_cast<std::size_t>(i)].second,
                         columns[static_cast<std::size_t>(j)].second);
      if (i == j && !std::isnan(r)) r = 1.0;
      out.values(i, j) = r;
      out.values(j, i) = r;
    }
  }
  return out;
}

struct BlockSummary {
  std::string name;
  std::size_t count = 0;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double std = 0.0;  // divisor n - 1; 0 for a single value
  std::vector<std::size_t> histogram;
  double bin_lo = 0.0;
  double bin_hi = 0.0;
};

struct WeightSummary {
  BlockSummary c;
  BlockSummary u;
  BlockSummary s;

  std::string to_csv() const {
    std::ostringstream out;
    out << "name,count,min,max,mean,std,bin_lo,bin_hi,histogram\n";
    for (const BlockSummary* b : {&c, &u, &s}) {
      out << b->name << ',' << b->count << ',' << format_double(b->min) << ','
          << format_double(b->max) << ',' << format_double(b->mean) << ','
          << format_double(b->std) << ',' << format_double(b->bin_lo) << ','
          << format_double(b->bin_hi) << ',';
      for (std::size_t i = 0; i < b->histogram.size(); ++i) {
        out << (i ? ";" : "") << b->histogram[i];
      }
      out << '\n';
    }
    return out.str();
  }
};

namespace detail {

inline BlockSummary summarize_block(std::string name, const std::vector<double>& values,
                                    std::size_t bins) {
  BlockSummary b;
  b.name = std::move(name);
  b.count = values.size();
  b.histogram.assign(bins, 0);
  if (values.empty()) return b;
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  b.min = *lo;
  b.max = *hi;
  b.bin_lo = b.min;
  b.bin_hi = b.max;
  VectorXd v = Eigen::Map<const VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  b.mean = v.mean();
  b.std = sample_std(v);
  const double width = (b.max - b.min) / static_cast<double>(bins);
  for (double x : values) {
    std::size_t bin = 0;
    if (width > 0.0) {
      bin = static_cast<std::size_t>((x - b.min) / width);
      bin = std::min(bin, bins - 1);
    }
    ++b.histogram[bin];
  }
  return b;
}

}  // namespace detail

/// Pooled per-block statistics and fixed-bin histograms over many fits.
inline WeightSummary weight_summary(const std::vector<ModelParams>& params_list,
                                    std::size_t bins = 30) {
  if (params_list.empty()) throw Error(ErrorCode::kEmpty, "weight_summary of an empty list");
  if (bins == 0) throw Error(ErrorCode::kConfigError, "weight_summary needs at least one bin");
  const auto& first = params_list.front();
  std::vector<double> c, u, s;
  for (const auto& p : params_list) {
    if (p.beta_c.size() != first.beta_c.size() || p.beta_u.size() != first.beta_u.size() ||
        p.beta_s.size() != first.beta_s.size()) {
      throw Error(ErrorCode::kInconsistentDims, "weight_summary: parameter blocks differ in size");
    }
    c.insert(c.end(), p.beta_c.data(), p.beta_c.data() + p.beta_c.size());
    u.insert(u.end(), p.beta_u.data(), p.beta_u.data() + p.beta_u.size());
    s.insert(s.end(), p.beta_s.data(), p.beta_s.data() + p.beta_s.size());
  }
  return {detail::summarize_block("beta_c", c, bins), detail::summarize_block("beta_u", u, bins),
          detail::summarize_block("beta_s", s, bins)};
}

}  // namespace shortcut
