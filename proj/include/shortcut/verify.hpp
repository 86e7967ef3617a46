#pragma once

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "shortcut/harness.hpp"
#include "shortcut/theory.hpp"

namespace shortcut {

/// Random raw-scale regression instance: c=u=2, s=1, shortcut loading on
/// both C and U plus noise, noisy labels. Used by the shrinkage suite.
inline Dataset random_instance(std::uint64_t seed, std::size_t n) {
  Rng rng(hash_combine(seed, "instance"));
  DatasetSpec spec;
  spec.n_train = n;
  spec.n_test = 1;
  spec.beta_c = VectorXd(2);
  spec.beta_u = VectorXd(2);
  for (Eigen::Index j = 0; j < 2; ++j) {
    spec.beta_c(j) = rng.uniform(-3.0, 3.0);
    spec.beta_u(j) = rng.uniform(-3.0, 3.0);
  }
  spec.shortcut_kind = ShortcutKind::kUnknownCorrelated;
  spec.shortcut_coeffs = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                          rng.uniform(-1.0, 1.0)};
  spec.shortcut_noise_sigma = rng.uniform(0.2, 1.0);
  spec.noise_sigma = rng.uniform(0.1, 1.0);
  spec.seed = hash_combine(seed, "data");
  return generate_synthetic(spec).first;
}

struct VerifyConfig {
  std::string scenario = "verify";
  std::uint64_t base_seed = 0;
  // shrinkage suite
  std::size_t shrinkage_instances = 50;
  std::size_t shrinkage_n = 500;
  std::vector<double> shrinkage_grid = {0.0, 1e-3, 1e-2, 1e-1, 1.0};
  VectorXd shrinkage_weights = (VectorXd(3) << 1.0, 1.0, 1000.0).finished();
  // agreement sweep
  std::size_t agreement_problems = 600;
  std::size_t min_non_boundary = 500;
  std::size_t grid_points = 2001;
  std::size_t refinement_problems = 100;
  double min_agreement = 0.99;
  // causal limit
  std::size_t causal_limit_problems = 100;
  std::array<double, 3> causal_limit_lambdas = {1.0, 1.0, 1e9};
  double causal_limit_tol = 1e-4;
  // normalization corollary
  std::vector<double> normalization_delta_c = {0.1, 0.25, 0.5, 0.75, 0.9};
  // manifold zero-risk
  std::size_t manifold_problems = 100;
  std::size_t manifold_n = 100;
  double manifold_max_mse = 1e-18;
  // counterexample scenario
  std::optional<ExperimentConfig> counterexample;
  std::string counterexample_regularizer = "L1";
  double counterexample_ratio = 0.01;
  bool include_problems = true;
};

inline VerifyConfig verify_config_from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw Error(ErrorCode::kConfigError, "verify config must be an object");
  VerifyConfig c;
  using detail::get_or;
  c.scenario = get_or<std::string>(j, "scenario", c.scenario);
  c.base_seed = get_or<std::uint64_t>(j, "base_seed", c.base_seed);
  c.include_problems = get_or<bool>(j, "include_problems", c.include_problems);
  if (j.contains("shrinkage")) {
    const Json& s = j["shrinkage"];
    c.shrinkage_instances = get_or<std::size_t>(s, "instances", c.shrinkage_instances);
    c.shrinkage_n = get_or<std::size_t>(s, "n", c.shrinkage_n);
    c.shrinkage_grid = get_or<std::vector<double>>(s, "lambda_grid", c.shrinkage_grid);
    if (s.contains("weights")) c.shrinkage_weights = vector_from_json(s["weights"], "weights");
  }
  if (j.contains("agreement")) {
    const Json& a = j["agreement"];
    c.agreement_problems = get_or<std::size_t>(a, "problems", c.agreement_problems);
    c.grid_points = get_or<std::size_t>(a, "grid_points", c.grid_points);
    c.refinement_problems = get_or<std::size_t>(a, "refinement_problems", c.refinement_problems);
    c.min_agreement = get_or<double>(a, "min_rate", c.min_agreement);
    c.min_non_boundary = get_or<std::size_t>(a, "min_non_boundary", c.min_non_boundary);
  }
  if (j.contains("causal_limit")) {
    const Json& a = j["causal_limit"];
    c.causal_limit_problems = get_or<std::size_t>(a, "problems", c.causal_limit_problems);
    if (a.contains("lambdas")) {
      const auto l = get_or<std::vector<double>>(a, "lambdas", {});
      if (l.size() != 3) throw Error(ErrorCode::kConfigError, "causal_limit.lambdas needs 3 values");
      c.causal_limit_lambdas = {l[0], l[1], l[2]};
    }
    c.causal_limit_tol = get_or<double>(a, "tol", c.causal_limit_tol);
  }
  if (j.contains("normalization")) {
    c.normalization_delta_c = get_or<std::vector<double>>(j["normalization"], "delta_c", c.normalization_delta_c);
  }
  if (j.contains("manifold")) {
    const Json& m = j["manifold"];
    c.manifold_problems = get_or<std::size_t>(m, "problems", c.manifold_problems);
    c.manifold_n = get_or<std::size_t>(m, "n", c.manifold_n);
    c.manifold_max_mse = get_or<double>(m, "max_mse", c.manifold_max_mse);
  }
  if (j.contains("counterexample")) {
    const Json& ce = j["counterexample"];
    if (ce.is_string()) {
      std::filesystem::path p = ce.get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      c.counterexample = load_config(p.string());
    } else {
      c.counterexample = config_from_json(ce);
    }
  }
  c.counterexample_regularizer = get_or<std::string>(j, "counterexample_regularizer", c.counterexample_regularizer);
  c.counterexample_ratio = get_or<double>(j, "counterexample_ratio", c.counterexample_ratio);
  if (c.grid_points < 1000) throw Error(ErrorCode::kConfigError, "agreement.grid_points must be >= 1000");
  return c;
}

struct PropertyResult {
  std::string name;
  bool hard = true;
  bool pass = false;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
};

struct VerifyReport {
  std::string scenario;
  std::vector<PropertyResult> properties;
  nlohmann::ordered_json problems = nlohmann::ordered_json::array();

  bool pass() const {
    for (const auto& p : properties) {
      if (p.hard && !p.pass) return false;
    }
    return true;
  }

  const PropertyResult* find(std::string_view name) const {
    for (const auto& p : properties) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["scenario"] = scenario;
    j["pass"] = pass();
    j["properties"] = nlohmann::ordered_json::array();
    for (const auto& p : properties) {
      j["properties"].push_back({{"name", p.name}, {"hard", p.hard}, {"pass", p.pass}, {"metrics", p.metrics}});
    }
    j["problems"] = problems;
    return j;
  }
};

namespace detail {

inline nlohmann::ordered_json problem_json(Method m, const AgreementRecord& r) {
  nlohmann::ordered_json inputs = {{"beta_c", r.problem.beta_c},
                                   {"beta_u", r.problem.beta_u},
                                   {"delta_c", r.problem.delta_c},
                                   {"delta_u", r.problem.delta_u}};
  if (r.problem.causal_lambdas) {
    const auto& l = *r.problem.causal_lambdas;
    inputs["causal_lambdas"] = {l[0], l[1], l[2]};
  }
  return {{"method", std::string(to_string(m))},
          {"inputs", inputs},
          {"condition_value", r.condition.value},
          {"condition_holds", r.condition.holds},
          {"oracle_argmin", r.oracle.argmin_beta_c_hat},
          {"oracle_min_penalty", r.oracle.min_penalty},
          {"oracle_eliminates", r.oracle.eliminates},
          {"boundary", r.boundary},
          {"agree", r.agree}};
}

}  // namespace detail

/// Runs every numerical check of the propositions. Hard properties decide
/// pass(); soft ones are reported only.
inline VerifyReport verify(const VerifyConfig& cfg) {
  VerifyReport rep;
  rep.scenario = cfg.scenario;
  const std::uint64_t seed = hash_combine(cfg.base_seed, cfg.scenario);

  // Shrinkage along increasing lambda for L2 and weighted L2.
  for (const auto& [label, spec] : {std::pair<std::string, PenaltySpec>{"L2", PenaltySpec::l2()},
                                    {"WeightedL2", PenaltySpec::weighted_l2(cfg.shrinkage_weights)}}) {
    PropertyResult p;
    p.name = "shrinkage_" + label;
    std::size_t monotone = 0, errors = 0;
    for (std::size_t i = 0; i < cfg.shrinkage_instances; ++i) {
      try {
        const Dataset ds = random_instance(hash_combine(seed, i), cfg.shrinkage_n);
        if (verify_shrinkage(ds, spec, cfg.shrinkage_grid).monotone) ++monotone;
      } catch (const Error&) {
        ++errors;
      }
    }
    p.pass = monotone == cfg.shrinkage_instances;
    p.metrics = {{"instances", cfg.shrinkage_instances}, {"monotone", monotone}, {"errors", errors},
                 {"lambda_grid", cfg.shrinkage_grid}};
    rep.properties.push_back(std::move(p));
  }

  // Analytic conditions against the oracle.
  OracleGrid grid;
  grid.points = cfg.grid_points;
  OracleGrid fine = grid;
  fine.points = 2 * cfg.grid_points - 1;
  std::size_t drift_checked = 0, drift_ok = 0;
  double worst_drift = 0.0;
  for (Method m : {Method::kL1, Method::kL2, Method::kEye, Method::kCausal}) {
    const auto records = agreement_sweep(m, cfg.agreement_problems, hash_combine(seed, to_string(m)), grid);
    const AgreementSummary s = summarize_agreement(records);
    std::size_t pos = 0, pos_agree = 0, neg = 0, neg_agree = 0;
    for (const auto& r : records) {
      if (r.boundary) continue;
      if (r.problem.delta_c > 0.0) {
        ++pos;
        pos_agree += r.agree;
      } else {
        ++neg;
        neg_agree += r.agree;
      }
    }
    PropertyResult p;
    p.name = std::string("agreement_") + std::string(to_string(m));
    p.hard = m == Method::kL1;
    p.pass = s.rate() >= cfg.min_agreement && s.non_boundary >= cfg.min_non_boundary;
    auto rate = [](std::size_t a, std::size_t n) { return n == 0 ? 1.0 : static_cast<double>(a) / static_cast<double>(n); };
    p.metrics = {{"problems", s.total},
                 {"non_boundary", s.non_boundary},
                 {"agree", s.agree_non_boundary},
                 {"rate", s.rate()},
                 {"min_rate", cfg.min_agreement},
                 {"min_non_boundary", cfg.min_non_boundary},
                 {"rate_delta_c_positive", rate(pos_agree, pos)},
                 {"non_boundary_delta_c_positive", pos},
                 {"rate_delta_c_negative", rate(neg_agree, neg)},
                 {"non_boundary_delta_c_negative", neg},
                 {"disagreements", s.non_boundary - s.agree_non_boundary}};
    rep.properties.push_back(std::move(p));
    if (cfg.include_problems) {
      for (const auto& r : records) rep.problems.push_back(detail::problem_json(m, r));
    }
    for (std::size_t i = 0; i < std::min(cfg.refinement_problems, records.size()); ++i) {
      const auto& r = records[i];
      const OracleResult refined = oracle_eliminates(m, r.problem, fine);
      const double drift = std::abs(refined.argmin_beta_c_hat - r.oracle.argmin_beta_c_hat);
      worst_drift = std::max(worst_drift, drift / r.oracle.atol);
      ++drift_checked;
      drift_ok += drift < r.oracle.atol;
    }
  }
  {
    PropertyResult p;
    p.name = "oracle_refinement";
    p.pass = drift_ok == drift_checked;
    p.metrics = {{"checked", drift_checked}, {"within_atol", drift_ok}, {"worst_drift_over_atol", worst_drift},
                 {"coarse_points", grid.points}, {"fine_points", fine.points}};
    rep.properties.push_back(std::move(p));
  }

  // lambda_s -> infinity limit of the causal condition.
  {
    PropertyResult p;
    p.name = "causal_limit";
    std::size_t ok_cond = 0, ok_oracle = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < cfg.causal_limit_problems; ++i) {
      Rng rng(hash_combine(hash_combine(seed, "causal_limit"), i));
      ScalarProblem prob = random_scalar_problem(rng, Method::kCausal);
      prob.causal_lambdas = cfg.causal_limit_lambdas;
      const auto cond = condition_holds(Method::kCausal, prob);
      const auto orc = oracle_eliminates(Method::kCausal, prob, grid);
      const double gap = std::abs(orc.argmin_beta_c_hat - prob.beta_c);
      worst = std::max(worst, gap);
      ok_cond += cond.holds;
      ok_oracle += gap < cfg.causal_limit_tol;
    }
    p.pass = ok_cond == cfg.causal_limit_problems && ok_oracle == cfg.causal_limit_problems;
    p.metrics = {{"problems", cfg.causal_limit_problems}, {"condition_holds", ok_cond},
                 {"oracle_eliminates", ok_oracle}, {"worst_gap", worst}, {"tol", cfg.causal_limit_tol}};
    rep.properties.push_back(std::move(p));
  }

  // delta_c + delta_u = 1: the L1 condition sits at 0 and the oracle eliminates.
  {
    PropertyResult p;
    p.name = "normalization";
    std::size_t ok = 0;
    nlohmann::ordered_json cases = nlohmann::ordered_json::array();
    for (double dc : cfg.normalization_delta_c) {
      ScalarProblem prob;
      prob.beta_c = 1.0;
      prob.beta_u = 1.0;
      prob.delta_c = dc;
      prob.delta_u = 1.0 - dc;
      const auto cond = condition_holds(Method::kL1, prob);
      const auto orc = oracle_eliminates(Method::kL1, prob, grid);
      const bool good = std::abs(cond.value) <= 1e-12 && cond.holds && orc.eliminates;
      ok += good;
      cases.push_back({{"delta_c", dc}, {"delta_u", prob.delta_u}, {"condition_value", cond.value},
                       {"oracle_eliminates", orc.eliminates}});
    }
    p.pass = ok == cfg.normalization_delta_c.size();
    p.metrics = {{"cases", cases}};
    rep.properties.push_back(std::move(p));
  }

  // Every manifold point has zero empirical risk on noiseless data.
  {
    PropertyResult p;
    p.name = "manifold_zero_risk";
    double worst = 0.0;
    for (std::size_t i = 0; i < cfg.manifold_problems; ++i) {
      Rng rng(hash_combine(hash_combine(seed, "manifold"), i));
      const ScalarProblem prob = random_scalar_problem(rng, Method::kL1);
      const double bc_hat = rng.uniform(-3.0, 3.0);
      const auto [bu_hat, bs_hat] = manifold_params(bc_hat, prob);
      const Dataset ds = scalar_dataset(prob, cfg.manifold_n, hash_combine(seed, i));
      ModelParams mp = ModelParams::zeros(1, 1, 1);
      mp.beta_c(0) = bc_hat;
      mp.beta_u(0) = bu_hat;
      mp.beta_s(0) = bs_hat;
      worst = std::max(worst, empirical_risk(mp, ds));
    }
    p.pass = worst < cfg.manifold_max_mse;
    p.metrics = {{"problems", cfg.manifold_problems}, {"worst_mse", worst}, {"max_mse", cfg.manifold_max_mse}};
    rep.properties.push_back(std::move(p));
  }

  // L1 concentrates weight when U and S are collinear.
  if (cfg.counterexample) {
    PropertyResult p;
    p.name = "l1_counterexample";
    const ExperimentResult res = run_experiment(*cfg.counterexample);
    const auto& names = res.param_names;
    std::size_t rows = 0, concentrated = 0;
    double worst = 0.0;
    for (const auto& r : res.rows) {
      if (r.regularizer != cfg.counterexample_regularizer || r.status != "ok") continue;
      double bu = 0.0, bs = 0.0;
      for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i].rfind("beta_u", 0) == 0) bu += std::abs(r.beta[i]);
        if (names[i].rfind("beta_s", 0) == 0) bs += std::abs(r.beta[i]);
      }
      const double ratio = std::max(bu, bs) > 0.0 ? std::min(bu, bs) / std::max(bu, bs) : 1.0;
      worst = std::max(worst, ratio);
      ++rows;
      concentrated += ratio < cfg.counterexample_ratio;
    }
    p.pass = rows > 0 && concentrated == rows;
    p.metrics = {{"scenario", cfg.counterexample->scenario}, {"runs", rows}, {"concentrated", concentrated},
                 {"worst_ratio", worst}, {"max_ratio", cfg.counterexample_ratio}};
    rep.properties.push_back(std::move(p));
  }
  return rep;
}

}  // namespace shortcut
