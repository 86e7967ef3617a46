#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "shortcut/dataset.hpp"
#include "shortcut/error.hpp"
#include "shortcut/eval.hpp"
#include "shortcut/mlp.hpp"
#include "shortcut/random.hpp"
#include "shortcut/regularizers.hpp"
#include "shortcut/serialize.hpp"
#include "shortcut/solver.hpp"
#include "shortcut/svg.hpp"
#include "shortcut/table.hpp"

namespace shortcut {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct RegularizerConfig {
  std::string name;
  PenaltySpec penalty;
  double lambda = 0.0;
};

enum class SolverChoice { kAuto, kIterative };

struct ExperimentConfig {
  std::string scenario = "experiment";
  DatasetSpec dataset;
  std::vector<RegularizerConfig> regularizers;
  std::vector<double> lambda_grid;
  std::vector<double> delta_u_grid;
  /// Per-column U loadings scaled by each delta_u; defaults to all ones.
  std::vector<double> delta_u_direction;
  std::size_t repeats = 10;
  std::uint64_t base_seed = 0;
  std::string outputs = "results";
  bool standardize = true;
  SolverChoice solver = SolverChoice::kAuto;
  TrainConfig train;
  MlpOptions mlp;
  std::size_t te_samples = 100;
  bool write_traces = true;
  bool log_x = true;  // x axis of sweep charts
  std::size_t threads = 1;

  void validate() const {
    if (scenario.empty()) throw Error(ErrorCode::kConfigError, "scenario name is empty");
    dataset.validate();
    if (regularizers.empty()) throw Error(ErrorCode::kConfigError, "no regularizers configured");
    if (repeats < 1) throw Error(ErrorCode::kConfigError, "repeats must be >= 1");
    if (te_samples < 2) throw Error(ErrorCode::kConfigError, "te_samples must be >= 2");
    const auto us = static_cast<Eigen::Index>(dataset.u_dim + dataset.s_dim);
    for (std::size_t i = 0; i < regularizers.size(); ++i) {
      const auto& r = regularizers[i];
      if (r.name.empty()) throw Error(ErrorCode::kConfigError, "regularizer without a name");
      if (r.name.find_first_of(",/\\\"\n") != std::string::npos) {
        throw Error(ErrorCode::kConfigError, "regularizer name '" + r.name + "' has reserved characters");
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (regularizers[j].name == r.name) {
          throw Error(ErrorCode::kConfigError, "duplicate regularizer name '" + r.name + "'");
        }
      }
      if (!(r.lambda >= 0.0) || !std::isfinite(r.lambda)) {
        throw Error(ErrorCode::kConfigError, "lambda of '" + r.name + "' must be >= 0");
      }
      r.penalty.validate(us);
    }
    for (const auto* grid : {&lambda_grid, &delta_u_grid}) {
      for (std::size_t i = 1; i < grid->size(); ++i) {
        if (!((*grid)[i] > (*grid)[i - 1])) {
          throw Error(ErrorCode::kConfigError, "sweep grids must be strictly increasing");
        }
      }
    }
    for (double l : lambda_grid) {
      if (!(l >= 0.0)) throw Error(ErrorCode::kConfigError, "lambda grid values must be >= 0");
    }
    if (!delta_u_direction.empty() && delta_u_direction.size() != dataset.u_dim) {
      throw Error(ErrorCode::kConfigError, "delta_u_direction needs one entry per U column");
    }
    train.validate();
  }
};

inline RegularizerConfig regularizer_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kConfigError, "regularizer entries must be objects");
  RegularizerConfig r;
  r.name = detail::get_or<std::string>(j, "name", "");
  const std::string kind = detail::get_or<std::string>(j, "kind", "");
  if (kind.empty()) throw Error(ErrorCode::kConfigError, "regularizer '" + r.name + "' has no kind");
  r.penalty.kind = parse_penalty_kind(kind);
  if (r.name.empty()) r.name = kind;
  if (r.penalty.kind == PenaltyKind::kWeightedL2) {
    if (j.contains("weights")) {
      r.penalty.weights = vector_from_json(j["weights"], "weights");
    } else if (j.contains("treatment_effects")) {
      const double floor = detail::get_or<double>(j, "te_floor", 1e-12);
      r.penalty = causal_weights(vector_from_json(j["treatment_effects"], "treatment_effects"), floor);
    } else {
      throw Error(ErrorCode::kConfigError,
                  "WeightedL2 regularizer '" + r.name + "' needs weights or treatment_effects");
    }
  }
  if (r.penalty.kind == PenaltyKind::kNone) {
    r.lambda = detail::get_or<double>(j, "lambda", 0.0);
  } else {
    if (!j.contains("lambda")) {
      throw Error(ErrorCode::kConfigError, "regularizer '" + r.name + "' needs a lambda");
    }
    r.lambda = detail::get_or<double>(j, "lambda", 0.0);
  }
  return r;
}

inline Json regularizer_to_json(const RegularizerConfig& r) {
  Json j = penalty_to_json(r.penalty);
  j["name"] = r.name;
  j["lambda"] = r.lambda;
  return j;
}

inline ExperimentConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kConfigError, "config must be a JSON object");
  ExperimentConfig cfg;
  cfg.scenario = detail::get_or<std::string>(j, "scenario", cfg.scenario);
  if (!j.contains("dataset")) throw Error(ErrorCode::kConfigError, "config needs a 'dataset'");
  cfg.dataset = dataset_spec_from_json(j["dataset"]);
  if (!j.contains("regularizers") || !j["regularizers"].is_array()) {
    throw Error(ErrorCode::kConfigError, "config needs a 'regularizers' array");
  }
  for (const auto& r : j["regularizers"]) cfg.regularizers.push_back(regularizer_from_json(r));
  if (j.contains("sweep")) {
    const Json& s = j["sweep"];
    cfg.lambda_grid = detail::get_or<std::vector<double>>(s, "lambda_grid", {});
    cfg.delta_u_grid = detail::get_or<std::vector<double>>(s, "delta_u_grid", {});
    cfg.delta_u_direction = detail::get_or<std::vector<double>>(s, "delta_u_direction", {});
    cfg.log_x = detail::get_or<bool>(s, "log_x", !cfg.lambda_grid.empty());
  }
  cfg.repeats = detail::get_or<std::size_t>(j, "repeats", cfg.repeats);
  cfg.base_seed = detail::get_or<std::uint64_t>(j, "base_seed", cfg.base_seed);
  cfg.outputs = detail::get_or<std::string>(j, "outputs", cfg.outputs);
  cfg.standardize = detail::get_or<bool>(j, "standardize", cfg.standardize);
  const std::string solver = detail::get_or<std::string>(j, "solver", "auto");
  if (solver == "auto") {
    cfg.solver = SolverChoice::kAuto;
  } else if (solver == "iterative") {
    cfg.solver = SolverChoice::kIterative;
  } else {
    throw Error(ErrorCode::kConfigError, "solver must be 'auto' or 'iterative'");
  }
  if (j.contains("train")) cfg.train = train_config_from_json(j["train"], cfg.train);
  if (j.contains("mlp")) {
    const Json& m = j["mlp"];
    cfg.mlp.hidden = detail::get_or<Eigen::Index>(m, "hidden", cfg.mlp.hidden);
    cfg.mlp.activation = parse_activation(detail::get_or<std::string>(m, "activation", "relu"));
  }
  cfg.te_samples = detail::get_or<std::size_t>(j, "te_samples", cfg.te_samples);
  cfg.write_traces = detail::get_or<bool>(j, "write_traces", cfg.write_traces);
  cfg.threads = detail::get_or<std::size_t>(j, "threads", cfg.threads);
  cfg.validate();
  return cfg;
}

inline Json config_to_json(const ExperimentConfig& cfg) {
  Json regs = Json::array();
  for (const auto& r : cfg.regularizers) regs.push_back(regularizer_to_json(r));
  Json j = {{"scenario", cfg.scenario},
            {"dataset", dataset_spec_to_json(cfg.dataset)},
            {"regularizers", regs},
            {"repeats", cfg.repeats},
            {"base_seed", cfg.base_seed},
            {"outputs", cfg.outputs},
            {"standardize", cfg.standardize},
            {"solver", cfg.solver == SolverChoice::kAuto ? "auto" : "iterative"},
            {"train", train_config_to_json(cfg.train)},
            {"mlp", {{"hidden", cfg.mlp.hidden}, {"activation", std::string(to_string(cfg.mlp.activation))}}},
            {"te_samples", cfg.te_samples},
            {"write_traces", cfg.write_traces}};
  if (!cfg.lambda_grid.empty() || !cfg.delta_u_grid.empty()) {
    j["sweep"] = {{"lambda_grid", cfg.lambda_grid},
                  {"delta_u_grid", cfg.delta_u_grid},
                  {"delta_u_direction", cfg.delta_u_direction},
                  {"log_x", cfg.log_x}};
  }
  return j;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParseError, path + ": " + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) { return config_from_json(read_json_file(path)); }

/// Stable per-cell seed. The grid point is deliberately not mixed in, so a
/// sweep reuses the same draw for every grid value of a given
/// (regularizer, repeat) and adding grid points never perturbs other cells.
inline std::uint64_t derive_seed(std::uint64_t base_seed, std::string_view scenario,
                                 std::string_view regularizer, std::uint64_t repeat) {
  return hash_combine(hash_combine(hash_combine(base_seed, scenario), regularizer), repeat);
}

struct ResultRow {
  std::string scenario;
  std::string regularizer;
  std::string penalty;
  std::string method;  // closed_form | iterative | mlp
  std::string status = "ok";
  double lambda = 0.0;
  double delta_u = kNaN;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  bool converged = true;
  std::vector<double> beta;      // model (standardized) units
  std::vector<double> beta_raw;  // original data units
  double abs_beta_s = kNaN;
  double train_mse = kNaN;
  double test_mse = kNaN;
  double shortcut_te = kNaN;
  double corr_pred_s_test = kNaN;
  double corr_pred_y_test = kNaN;
  double corr_u_s_train = kNaN;
  double us_mass_on_s = kNaN;
  double wall_time_s = 0.0;  // kept out of the deterministic tables
};

/// Metric columns shared by the result and aggregate tables.
inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {
      "abs_beta_s", "train_mse", "test_mse", "shortcut_te", "corr_pred_s_test",
      "corr_pred_y_test", "corr_u_s_train", "us_mass_on_s"};
  return names;
}

inline std::vector<double> metric_values(const ResultRow& r) {
  return {r.abs_beta_s, r.train_mse, r.test_mse, r.shortcut_te,
          r.corr_pred_s_test, r.corr_pred_y_test, r.corr_u_s_train, r.us_mass_on_s};
}

struct AggregateRow {
  std::string scenario;
  std::string regularizer;
  double lambda = 0.0;
  double delta_u = kNaN;
  std::string metric;
  double mean = kNaN;
  double se = kNaN;  // sample std / sqrt(count)
  std::size_t count = 0;
};

struct TraceRecord {
  std::string regularizer;
  std::size_t repeat = 0;
  TrainTrace trace;
};

struct PredictionCorrelation {
  std::string regularizer;
  std::string variable;
  double mean = kNaN;
  double se = kNaN;
};

struct ExperimentResult {
  std::string operation;  // fit | sweep-lambda | sweep-corr | nonlinear
  ExperimentConfig config;
  std::vector<std::string> param_names;
  std::vector<ResultRow> rows;
  std::vector<AggregateRow> aggregates;
  std::vector<TraceRecord> traces;
  std::vector<PredictionCorrelation> prediction_correlations;
  std::vector<std::pair<std::string, WeightSummary>> weights;
  std::optional<NamedMatrix> train_correlation;
  std::optional<NamedMatrix> test_correlation;
};

namespace detail {

struct CellSpec {
  std::size_t reg = 0;
  std::size_t repeat = 0;
  double lambda = 0.0;
  double delta_u = kNaN;
};

struct CellOutcome {
  ResultRow row;
  std::optional<TrainTrace> trace;
  std::optional<ModelParams> params;
  std::vector<NamedColumn> test_columns;  // ŷ plus every test variable
  std::optional<NamedMatrix> train_corr;
  std::optional<NamedMatrix> test_corr;
};

inline std::vector<NamedColumn> variable_columns(const Dataset& ds) {
  std::vector<NamedColumn> cols;
  for (Eigen::Index j = 0; j < ds.c(); ++j) cols.emplace_back("C" + std::to_string(j + 1), ds.C.col(j));
  for (Eigen::Index j = 0; j < ds.u(); ++j) cols.emplace_back("U" + std::to_string(j + 1), ds.U.col(j));
  for (Eigen::Index j = 0; j < ds.s(); ++j) cols.emplace_back("S" + std::to_string(j + 1), ds.S.col(j));
  cols.emplace_back("Y", ds.Y);
  return cols;
}

inline std::vector<std::string> variable_names(const DatasetSpec& spec) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < spec.c_dim; ++j) names.push_back("C" + std::to_string(j + 1));
  for (std::size_t j = 0; j < spec.u_dim; ++j) names.push_back("U" + std::to_string(j + 1));
  for (std::size_t j = 0; j < spec.s_dim; ++j) names.push_back("S" + std::to_string(j + 1));
  names.push_back("Y");
  return names;
}

inline DatasetSpec cell_dataset(const ExperimentConfig& cfg, std::uint64_t seed, double delta_u) {
  DatasetSpec spec = cfg.dataset;
  spec.seed = seed;
  if (!std::isnan(delta_u)) {
    if (spec.shortcut_kind != ShortcutKind::kUnknownCorrelated) {
      throw Error(ErrorCode::kConfigError, "delta_u sweeps need an UnknownCorrelated dataset");
    }
    for (std::size_t j = 0; j < spec.u_dim; ++j) {
      const double dir = cfg.delta_u_direction.empty() ? 1.0 : cfg.delta_u_direction[j];
      spec.shortcut_coeffs[spec.c_dim + j] = delta_u * dir;
    }
  }
  return spec;
}

inline CellOutcome run_cell(const ExperimentConfig& cfg, const CellSpec& cell, bool nonlinear,
                            bool want_trace, bool want_correlations) {
  const RegularizerConfig& reg = cfg.regularizers[cell.reg];
  CellOutcome out;
  ResultRow& row = out.row;
  row.scenario = cfg.scenario;
  row.regularizer = reg.name;
  row.penalty = std::string(to_string(reg.penalty.kind));
  row.lambda = cell.lambda;
  row.delta_u = cell.delta_u;
  row.repeat = cell.repeat;
  row.seed = derive_seed(cfg.base_seed, cfg.scenario, reg.name, cell.repeat);
  const std::size_t width = cfg.dataset.c_dim + cfg.dataset.u_dim + cfg.dataset.s_dim;
  row.beta.assign(width, kNaN);
  row.beta_raw.assign(width, kNaN);

  const auto start = std::chrono::steady_clock::now();
  try {
    auto [raw_train, raw_test] = generate_synthetic(cell_dataset(cfg, row.seed, cell.delta_u));
    double corr_sum = 0.0;
    for (Eigen::Index j = 0; j < raw_train.u(); ++j) corr_sum += pearson(raw_train.U.col(j), raw_train.S.col(0));
    row.corr_u_s_train = raw_train.u() > 0 ? corr_sum / static_cast<double>(raw_train.u()) : kNaN;

    Dataset train, test;
    std::optional<StandardizeStats> stats;
    if (cfg.standardize) {
      auto pair = standardize(raw_train, raw_test);
      train = std::move(pair.train);
      test = std::move(pair.test);
      stats = pair.stats;
    } else {
      train = std::move(raw_train);
      test = std::move(raw_test);
    }
    if (want_correlations) {
      out.train_corr = correlation_matrix(variable_columns(train));
      out.test_corr = correlation_matrix(variable_columns(test));
    }

    TrainConfig tc = cfg.train;
    tc.lambda_reg = reg.penalty.kind == PenaltyKind::kNone ? 0.0 : cell.lambda;
    tc.seed = hash_combine(row.seed, "te");
    tc.te_trace_samples = cfg.te_samples;
    tc.record_trace = want_trace;

    std::optional<Predictor> pred;
    VectorXd yhat_train, yhat_test;
    if (nonlinear) {
      row.method = "mlp";
      MlpFitResult fit = mlp_fit(train, reg.penalty, tc, cfg.mlp);
      row.epochs = fit.trace.epochs_run;
      row.converged = fit.trace.converged;
      yhat_train = mlp_forward_batch(fit.params, train.features());
      yhat_test = mlp_forward_batch(fit.params, test.features());
      pred = mlp_predictor(fit.params);
      if (want_trace) out.trace = std::move(fit.trace);
    } else {
      ModelParams params;
      const bool closed = cfg.solver == SolverChoice::kAuto &&
                          (reg.penalty.kind == PenaltyKind::kL2 ||
                           reg.penalty.kind == PenaltyKind::kWeightedL2);
      if (closed) {
        row.method = "closed_form";
        params = fit_closed_form(train, tc.lambda_reg, reg.penalty);
      } else {
        row.method = "iterative";
        FitResult fit = fit_iterative(train, reg.penalty, tc);
        params = fit.params;
        row.epochs = fit.trace.epochs_run;
        row.converged = fit.trace.converged;
        if (want_trace) out.trace = std::move(fit.trace);
      }
      if (!params.finite()) throw Error(ErrorCode::kDivergenceDetected, "non-finite coefficients");
      VectorXd flat(static_cast<Eigen::Index>(width));
      flat << params.beta_c, params.beta_u, params.beta_s;
      VectorXd scale = VectorXd::Ones(flat.size());
      if (stats) {
        VectorXd x_std(flat.size());
        x_std << stats->c_std, stats->u_std, stats->s_std;
        scale = stats->y_std * x_std.cwiseInverse();
      }
      for (Eigen::Index i = 0; i < flat.size(); ++i) {
        row.beta[static_cast<std::size_t>(i)] = flat(i);
        row.beta_raw[static_cast<std::size_t>(i)] = flat(i) * scale(i);
      }
      row.abs_beta_s = params.beta_s.cwiseAbs().mean();
      const double us_mass = params.beta_us().cwiseAbs().sum();
      row.us_mass_on_s = us_mass > 0.0 ? params.beta_s.cwiseAbs().sum() / us_mass : kNaN;
      yhat_train = predict(params, train);
      yhat_test = predict(params, test);
      pred = Predictor::linear(params);
      out.params = params;
    }

    row.train_mse = mse(train.Y, yhat_train);
    row.test_mse = mse(test.Y, yhat_test);
    const VectorXd draws = draw_standard_normals(cfg.te_samples, tc.seed);
    const VectorXd base = VectorXd::Zero(static_cast<Eigen::Index>(width));
    double te = 0.0, corr_s = 0.0;
    for (Eigen::Index k = 0; k < test.s(); ++k) {
      te += treatment_effect_from_draws(*pred, base, test.c() + test.u() + k, draws);
      corr_s += std::abs(pearson(yhat_test, test.S.col(k)));
    }
    row.shortcut_te = te / static_cast<double>(test.s());
    row.corr_pred_s_test = corr_s / static_cast<double>(test.s());
    row.corr_pred_y_test = pearson(yhat_test, test.Y);
    if (want_correlations) {
      out.test_columns = variable_columns(test);
      out.test_columns.insert(out.test_columns.begin(), NamedColumn{"Y_hat", yhat_test});
    }
  } catch (const Error& e) {
    row.status = std::string(to_string(e.code()));
    std::fill(row.beta.begin(), row.beta.end(), kNaN);
    std::fill(row.beta_raw.begin(), row.beta_raw.end(), kNaN);
    row.abs_beta_s = row.train_mse = row.test_mse = row.shortcut_te = kNaN;
    row.corr_pred_s_test = row.corr_pred_y_test = row.us_mass_on_s = kNaN;
    row.epochs = 0;
    row.converged = false;
    out.trace.reset();
    out.params.reset();
    out.test_columns.clear();
  }
  row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

/// Runs cells on up to `threads` workers; results keep the input order.
inline std::vector<CellOutcome> run_cells(const ExperimentConfig& cfg, const std::vector<CellSpec>& cells,
                                          bool nonlinear, bool want_trace, bool want_correlations) {
  std::vector<CellOutcome> out(cells.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.threads, cells.size()));
  auto run_one = [&](std::size_t i) {
    out[i] = run_cell(cfg, cells[i], nonlinear, want_trace, want_correlations);
  };
  if (workers == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_one(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < cells.size(); i = next++) run_one(i);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

inline std::pair<double, double> mean_se(const std::vector<double>& values) {
  if (values.empty()) return {kNaN, kNaN};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return {mean, sd / std::sqrt(static_cast<double>(values.size()))};
}

/// Mean and standard error over the ok rows of each consecutive block of
/// `repeats` rows (one block per grid point and regularizer).
inline std::vector<AggregateRow> aggregate_blocks(const std::vector<ResultRow>& rows,
                                                  const std::vector<std::string>& param_names,
                                                  std::size_t repeats) {
  std::vector<AggregateRow> out;
  for (std::size_t start = 0; start < rows.size(); start += repeats) {
    const ResultRow& head = rows[start];
    const std::size_t end = std::min(rows.size(), start + repeats);
    auto emit = [&](const std::string& metric, auto getter) {
      std::vector<double> values;
      for (std::size_t i = start; i < end; ++i) {
        if (rows[i].status != "ok") continue;
        const double v = getter(rows[i]);
        if (!std::isnan(v)) values.push_back(v);
      }
      auto [mean, se] = mean_se(values);
      out.push_back({head.scenario, head.regularizer, head.lambda, head.delta_u, metric, mean, se,
                     values.size()});
    };
    const auto& names = metric_names();
    for (std::size_t m = 0; m < names.size(); ++m) {
      emit(names[m], [m](const ResultRow& r) { return metric_values(r)[m]; });
    }
    for (std::size_t p = 0; p < param_names.size(); ++p) {
      emit(param_names[p], [p](const ResultRow& r) { return r.beta[p]; });
      emit("raw_" + param_names[p], [p](const ResultRow& r) { return r.beta_raw[p]; });
    }
  }
  return out;
}

inline ExperimentResult assemble(std::string operation, const ExperimentConfig& cfg,
                                 std::vector<CellOutcome> outcomes,
                                 bool nonlinear) {
  ExperimentResult res;
  res.operation = std::move(operation);
  res.config = cfg;
  res.param_names = linear_param_names(static_cast<Eigen::Index>(cfg.dataset.c_dim),
                                       static_cast<Eigen::Index>(cfg.dataset.u_dim),
                                       static_cast<Eigen::Index>(cfg.dataset.s_dim));
  std::map<std::string, std::vector<ModelParams>> params_by_reg;
  std::map<std::string, std::map<std::string, std::vector<double>>> corr_by_reg;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    auto& o = outcomes[i];
    const std::string& reg = o.row.regularizer;
    if (o.trace) res.traces.push_back({reg, o.row.repeat, std::move(*o.trace)});
    if (o.params) params_by_reg[reg].push_back(*o.params);
    if (!o.test_columns.empty()) {
      const VectorXd& yhat = o.test_columns.front().second;
      for (std::size_t k = 1; k < o.test_columns.size(); ++k) {
        corr_by_reg[reg][o.test_columns[k].first].push_back(pearson(yhat, o.test_columns[k].second));
      }
    }
    if (i == 0 && o.train_corr) {
      res.train_correlation = o.train_corr;
      res.test_correlation = o.test_corr;
    }
    res.rows.push_back(std::move(o.row));
  }
  res.aggregates = aggregate_blocks(res.rows, nonlinear ? std::vector<std::string>{} : res.param_names,
                                    cfg.repeats);
  // Keep declared regularizer order in the derived summaries.
  for (const auto& r : cfg.regularizers) {
    auto it = params_by_reg.find(r.name);
    if (it != params_by_reg.end() && !it->second.empty()) {
      res.weights.emplace_back(r.name, weight_summary(it->second));
    }
    auto jt = corr_by_reg.find(r.name);
    if (jt == corr_by_reg.end()) continue;
    for (const auto& v : variable_names(cfg.dataset)) {
      auto kt = jt->second.find(v);
      if (kt == jt->second.end()) continue;
      std::vector<double> finite;
      for (double x : kt->second) {
        if (!std::isnan(x)) finite.push_back(x);
      }
      auto [mean, se] = mean_se(finite);
      res.prediction_correlations.push_back({r.name, v, mean, se});
    }
  }
  return res;
}

}  // namespace detail

/// One row per (regularizer, repeat) at each regularizer's own lambda.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<detail::CellSpec> cells;
  for (std::size_t r = 0; r < cfg.regularizers.size(); ++r) {
    for (std::size_t k = 0; k < cfg.repeats; ++k) cells.push_back({r, k, cfg.regularizers[r].lambda, kNaN});
  }
  return detail::assemble("fit", cfg, detail::run_cells(cfg, cells, false, cfg.write_traces, true), false);
}

/// Rows for every (lambda, regularizer, repeat); the grid lambda replaces
/// each regularizer's configured strength.
inline ExperimentResult sweep_lambda(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.lambda_grid.empty()) throw Error(ErrorCode::kEmptyGrid, "sweep-lambda needs sweep.lambda_grid");
  std::vector<detail::CellSpec> cells;
  for (double lambda : cfg.lambda_grid) {
    for (std::size_t r = 0; r < cfg.regularizers.size(); ++r) {
      for (std::size_t k = 0; k < cfg.repeats; ++k) cells.push_back({r, k, lambda, kNaN});
    }
  }
  return detail::assemble("sweep-lambda", cfg, detail::run_cells(cfg, cells, false, false, false), false);
}

/// Table-1 style sweep: the U loadings of the shortcut are
/// delta_u * delta_u_direction at each grid point.
inline ExperimentResult sweep_correlation(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.delta_u_grid.empty()) throw Error(ErrorCode::kEmptyGrid, "sweep-corr needs sweep.delta_u_grid");
  if (cfg.dataset.shortcut_kind != ShortcutKind::kUnknownCorrelated) {
    throw Error(ErrorCode::kConfigError, "sweep-corr needs an UnknownCorrelated dataset");
  }
  std::vector<detail::CellSpec> cells;
  for (double du : cfg.delta_u_grid) {
    for (std::size_t r = 0; r < cfg.regularizers.size(); ++r) {
      for (std::size_t k = 0; k < cfg.repeats; ++k) cells.push_back({r, k, cfg.regularizers[r].lambda, du});
    }
  }
  return detail::assemble("sweep-corr", cfg, detail::run_cells(cfg, cells, false, false, false), false);
}

/// As run_experiment, but every cell trains the MLP.
inline ExperimentResult run_nonlinear(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<detail::CellSpec> cells;
  for (std::size_t r = 0; r < cfg.regularizers.size(); ++r) {
    for (std::size_t k = 0; k < cfg.repeats; ++k) cells.push_back({r, k, cfg.regularizers[r].lambda, kNaN});
  }
  return detail::assemble("nonlinear", cfg, detail::run_cells(cfg, cells, true, true, true), true);
}

// ---- tables ---------------------------------------------------------------

inline Table results_table(const ExperimentResult& res) {
  using K = Table::Kind;
  std::vector<Table::Column> cols = {{"scenario", K::kText}, {"regularizer", K::kText},
                                     {"penalty", K::kText},  {"method", K::kText},
                                     {"status", K::kText},   {"lambda", K::kReal},
                                     {"delta_u", K::kReal},  {"repeat", K::kInteger},
                                     {"seed", K::kInteger},  {"epochs", K::kInteger},
                                     {"converged", K::kBool}};
  for (const auto& n : res.param_names) cols.push_back({n, K::kReal});
  for (const auto& n : res.param_names) cols.push_back({"raw_" + n, K::kReal});
  for (const auto& m : metric_names()) cols.push_back({m, K::kReal});
  Table t(std::move(cols));
  for (const auto& r : res.rows) {
    std::vector<std::string> cells = {r.scenario, r.regularizer, r.penalty, r.method, r.status,
                                      Table::real(r.lambda), Table::real(r.delta_u),
                                      Table::integer(r.repeat), Table::integer(r.seed),
                                      Table::integer(r.epochs), Table::boolean(r.converged)};
    for (double b : r.beta) cells.push_back(Table::real(b));
    for (double b : r.beta_raw) cells.push_back(Table::real(b));
    for (double m : metric_values(r)) cells.push_back(Table::real(m));
    t.add_row(std::move(cells));
  }
  return t;
}

inline Table aggregates_table(const std::vector<AggregateRow>& rows) {
  using K = Table::Kind;
  Table t({{"scenario", K::kText}, {"regularizer", K::kText}, {"lambda", K::kReal},
           {"delta_u", K::kReal}, {"metric", K::kText}, {"mean", K::kReal},
           {"se", K::kReal}, {"count", K::kInteger}});
  for (const auto& a : rows) {
    t.add_row({a.scenario, a.regularizer, Table::real(a.lambda), Table::real(a.delta_u), a.metric,
               Table::real(a.mean), Table::real(a.se), Table::integer(a.count)});
  }
  return t;
}

inline Table timing_table(const ExperimentResult& res) {
  using K = Table::Kind;
  Table t({{"regularizer", K::kText}, {"lambda", K::kReal}, {"delta_u", K::kReal},
           {"repeat", K::kInteger}, {"wall_time_s", K::kReal}});
  for (const auto& r : res.rows) {
    t.add_row({r.regularizer, Table::real(r.lambda), Table::real(r.delta_u), Table::integer(r.repeat),
               Table::real(r.wall_time_s)});
  }
  return t;
}

inline Table prediction_correlation_table(const ExperimentResult& res) {
  using K = Table::Kind;
  Table t({{"regularizer", K::kText}, {"variable", K::kText}, {"mean", K::kReal}, {"se", K::kReal}});
  for (const auto& p : res.prediction_correlations) {
    t.add_row({p.regularizer, p.variable, Table::real(p.mean), Table::real(p.se)});
  }
  return t;
}

/// Finds the aggregate for (regularizer, metric) at a grid key; NaN keys
/// match NaN.
inline const AggregateRow* find_aggregate(const std::vector<AggregateRow>& rows, std::string_view regularizer,
                                          std::string_view metric, std::optional<double> lambda = std::nullopt,
                                          std::optional<double> delta_u = std::nullopt) {
  auto same = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; };
  for (const auto& a : rows) {
    if (a.regularizer != regularizer || a.metric != metric) continue;
    if (lambda && !same(a.lambda, *lambda)) continue;
    if (delta_u && !same(a.delta_u, *delta_u)) continue;
    return &a;
  }
  return nullptr;
}

// ---- report ---------------------------------------------------------------

struct ReportFormats {
  bool csv = true;
  bool json = false;
  bool svg = false;
};

inline ReportFormats parse_formats(std::string_view list) {
  ReportFormats f{false, false, false};
  std::size_t start = 0;
  while (start <= list.size()) {
    std::size_t end = list.find(',', start);
    if (end == std::string_view::npos) end = list.size();
    const std::string_view item = list.substr(start, end - start);
    if (item == "csv") {
      f.csv = true;
    } else if (item == "json") {
      f.json = true;
    } else if (item == "svg") {
      f.svg = true;
    } else if (!item.empty()) {
      throw Error(ErrorCode::kConfigError, "unknown format '" + std::string(item) + "'");
    }
    start = end + 1;
  }
  if (!f.csv && !f.json && !f.svg) throw Error(ErrorCode::kConfigError, "no output format selected");
  return f;
}

namespace detail {

inline std::string json_text(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

inline void write_table(const Table& t, const std::filesystem::path& dir, const std::string& stem,
                        const ReportFormats& f) {
  if (f.csv) write_text((dir / (stem + ".csv")).string(), t.to_csv());
  if (f.json) write_text((dir / (stem + ".json")).string(), json_text(t.to_json()));
}

/// Mean +- se of the shortcut TE across repeats at each recorded epoch.
/// Repeats that stopped early hold their last value.
inline Series trace_series(const std::string& name, const std::vector<const TrainTrace*>& traces) {
  Series s;
  s.name = name;
  std::vector<std::size_t> epochs;
  for (const auto* t : traces) {
    for (const auto& e : t->entries) epochs.push_back(e.epoch);
  }
  std::sort(epochs.begin(), epochs.end());
  epochs.erase(std::unique(epochs.begin(), epochs.end()), epochs.end());
  std::vector<std::size_t> cursor(traces.size(), 0);
  for (std::size_t epoch : epochs) {
    std::vector<double> values;
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const auto& entries = traces[i]->entries;
      if (entries.empty() || entries.front().te.size() == 0) continue;
      while (cursor[i] + 1 < entries.size() && entries[cursor[i] + 1].epoch <= epoch) ++cursor[i];
      values.push_back(entries[cursor[i]].te(0));
    }
    auto [mean, se] = mean_se(values);
    s.x.push_back(static_cast<double>(epoch));
    s.y.push_back(mean);
    s.se.push_back(se);
  }
  return s;
}

/// Sweep charts from an aggregates table: one per metric, one series per
/// regularizer, x = the swept quantity.
inline std::vector<std::pair<std::string, std::string>> sweep_charts(const Table& agg, const std::string& x_column,
                                                                     bool log_x, const std::string& scenario) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const std::string metric : {"test_mse", "abs_beta_s", "shortcut_te", "train_mse"}) {
    std::vector<Series> series;
    for (std::size_t i = 0; i < agg.size(); ++i) {
      if (agg.cell(i, "metric") != metric) continue;
      const std::string& reg = agg.cell(i, "regularizer");
      auto it = std::find_if(series.begin(), series.end(), [&](const Series& s) { return s.name == reg; });
      if (it == series.end()) {
        series.push_back({reg, {}, {}, {}});
        it = series.end() - 1;
      }
      it->x.push_back(agg.number(i, x_column));
      it->y.push_back(agg.number(i, "mean"));
      it->se.push_back(agg.number(i, "se"));
    }
    if (series.empty()) continue;
    ChartOptions opt;
    opt.title = scenario + ": " + metric;
    opt.x_label = x_column;
    opt.y_label = metric + " (mean +- se)";
    opt.log_x = log_x;
    out.emplace_back(metric, line_chart_svg(series, opt));
  }
  return out;
}

}  // namespace detail

/// Writes results/aggregates tables (csv/json), per-run traces (csv),
/// derived summaries and SVG charts into `dir`. Wall times go to
/// timing.csv, which is the only non-deterministic file.
inline std::vector<std::string> emit_report(const ExperimentResult& res, const ReportFormats& formats,
                                            const std::filesystem::path& dir) {
  if (res.rows.empty()) throw Error(ErrorCode::kEmpty, "nothing to report");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create '" + dir.string() + "': " + ec.message());
  std::vector<std::string> written;
  auto note = [&](const std::string& stem, const std::string& ext) { written.push_back(stem + "." + ext); };

  const Table results = results_table(res);
  const Table aggregates = aggregates_table(res.aggregates);
  detail::write_table(results, dir, "results", formats);
  detail::write_table(aggregates, dir, "aggregates", formats);
  for (const char* stem : {"results", "aggregates"}) {
    if (formats.csv) note(stem, "csv");
    if (formats.json) note(stem, "json");
  }
  write_text((dir / "timing.csv").string(), timing_table(res).to_csv());
  note("timing", "csv");

  if (!res.prediction_correlations.empty()) {
    detail::write_table(prediction_correlation_table(res), dir, "prediction_correlations", formats);
    if (formats.csv) note("prediction_correlations", "csv");
    if (formats.json) note("prediction_correlations", "json");
  }
  if (formats.csv) {
    if (res.train_correlation) {
      write_text((dir / "data_correlation_train.csv").string(), res.train_correlation->to_csv());
      write_text((dir / "data_correlation_test.csv").string(), res.test_correlation->to_csv());
      note("data_correlation_train", "csv");
      note("data_correlation_test", "csv");
    }
    for (const auto& [reg, summary] : res.weights) {
      write_text((dir / ("weights_" + reg + ".csv")).string(), summary.to_csv());
      note("weights_" + reg, "csv");
    }
    if (!res.traces.empty()) {
      std::filesystem::create_directories(dir / "traces", ec);
      for (const auto& t : res.traces) {
        const std::string stem = "traces/" + t.regularizer + "_r" + std::to_string(t.repeat);
        write_text((dir / (stem + ".csv")).string(), t.trace.to_csv());
        note(stem, "csv");
      }
    }
  }
  if (formats.json) {
    nlohmann::ordered_json meta;
    meta["operation"] = res.operation;
    meta["config"] = nlohmann::ordered_json::parse(config_to_json(res.config).dump());
    meta["notes"] = {
        "coefficients are reported in standardized units and, with raw_ prefix, in original data units",
        "causal-effect weights are 1/TE per coefficient; a shortcut TE of 0.001 gives weight 1000",
        "wall times are written to timing.csv only"};
    write_text((dir / "metadata.json").string(), detail::json_text(meta));
    note("metadata", "json");
  }

  if (formats.svg) {
    const std::string& scenario = res.config.scenario;
    if (res.operation == "sweep-lambda" || res.operation == "sweep-corr") {
      const std::string x = res.operation == "sweep-lambda" ? "lambda" : "delta_u";
      const bool log_x = res.operation == "sweep-lambda" && res.config.log_x;
      for (const auto& [metric, svg] : detail::sweep_charts(aggregates, x, log_x, scenario)) {
        write_text((dir / ("sweep_" + metric + ".svg")).string(), svg);
        note("sweep_" + metric, "svg");
      }
    }
    if (!res.traces.empty()) {
      std::vector<Series> series;
      for (const auto& r : res.config.regularizers) {
        std::vector<const TrainTrace*> traces;
        for (const auto& t : res.traces) {
          if (t.regularizer == r.name) traces.push_back(&t.trace);
        }
        if (!traces.empty()) series.push_back(detail::trace_series(r.name, traces));
      }
      ChartOptions opt;
      opt.title = scenario + ": shortcut treatment effect";
      opt.x_label = "epoch";
      opt.y_label = "TE of S (mean +- se)";
      write_text((dir / "te_trace.svg").string(), line_chart_svg(series, opt));
      note("te_trace", "svg");
    }
    if (!res.weights.empty()) {
      std::vector<std::string> cats = res.param_names;
      std::vector<BarGroup> groups;
      for (const auto& [reg, _] : res.weights) {
        BarGroup g{reg, {}};
        for (const auto& p : res.param_names) {
          const AggregateRow* a = find_aggregate(res.aggregates, reg, p);
          g.values.push_back(a ? a->mean : kNaN);
        }
        groups.push_back(std::move(g));
      }
      ChartOptions opt;
      opt.title = scenario + ": mean coefficients (standardized units)";
      opt.y_label = "coefficient";
      write_text((dir / "weights.svg").string(), bar_chart_svg(cats, groups, opt));
      note("weights", "svg");
    }
  }
  return written;
}

/// Re-renders a results directory written by emit_report in other formats.
inline std::vector<std::string> rerender_report(const std::filesystem::path& in_dir, const ReportFormats& formats,
                                                const std::filesystem::path& out_dir, bool log_x) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create '" + out_dir.string() + "'");
  std::vector<std::string> written;
  for (const char* stem : {"results", "aggregates", "prediction_correlations"}) {
    const auto path = in_dir / (std::string(stem) + ".csv");
    if (!std::filesystem::exists(path)) continue;
    const Table t = Table::read_csv(path.string());
    if (formats.json) {
      write_text((out_dir / (std::string(stem) + ".json")).string(), detail::json_text(t.to_json()));
      written.push_back(std::string(stem) + ".json");
    }
    if (formats.csv && in_dir != out_dir) {
      write_text((out_dir / (std::string(stem) + ".csv")).string(), t.to_csv());
      written.push_back(std::string(stem) + ".csv");
    }
    if (formats.svg && std::string(stem) == "aggregates" && !t.empty()) {
      // Pick the swept column: whichever grid key varies.
      std::string x = "lambda";
      bool du_varies = false;
      for (std::size_t i = 1; i < t.size(); ++i) {
        if (t.cell(i, "delta_u") != t.cell(0, "delta_u")) du_varies = true;
      }
      if (du_varies) x = "delta_u";
      const std::string scenario = t.cell(0, "scenario");
      for (const auto& [metric, svg] : detail::sweep_charts(t, x, log_x && x == "lambda", scenario)) {
        write_text((out_dir / ("sweep_" + metric + ".svg")).string(), svg);
        written.push_back("sweep_" + metric + ".svg");
      }
    }
  }
  if (written.empty() && !std::filesystem::exists(in_dir / "results.csv")) {
    throw Error(ErrorCode::kIoError, "no results.csv in '" + in_dir.string() + "'");
  }
  return written;
}

/// Train/test CSV files for the configured dataset.
inline std::vector<std::string> generate_files(const DatasetSpec& spec, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create '" + dir.string() + "'");
  auto [train, test] = generate_synthetic(spec);
  write_dataset(train, (dir / "train.csv").string());
  write_dataset(test, (dir / "test.csv").string());
  return {"train.csv", "test.csv"};
}

}  // namespace shortcut
