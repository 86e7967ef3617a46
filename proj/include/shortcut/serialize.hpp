#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "shortcut/dataset.hpp"
#include "shortcut/error.hpp"
#include "shortcut/regularizers.hpp"
#include "shortcut/solver.hpp"

namespace shortcut {

using Json = nlohmann::json;

inline Json to_json_array(const VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline VectorXd vector_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw Error(ErrorCode::kConfigError, what + " must be an array of numbers");
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error(ErrorCode::kConfigError, what + " must be an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Json penalty_to_json(const PenaltySpec& spec) {
  Json out = {{"kind", std::string(to_string(spec.kind))}};
  if (spec.kind == PenaltyKind::kWeightedL2) out["weights"] = to_json_array(spec.weights);
  return out;
}

inline PenaltySpec penalty_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
    throw Error(ErrorCode::kConfigError, "penalty needs a string 'kind'");
  }
  PenaltySpec spec;
  spec.kind = parse_penalty_kind(j["kind"].get<std::string>());
  if (spec.kind == PenaltyKind::kWeightedL2) {
    if (!j.contains("weights")) throw Error(ErrorCode::kConfigError, "WeightedL2 needs 'weights'");
    spec.weights = vector_from_json(j["weights"], "weights");
    spec.validate(spec.weights.size());
  }
  return spec;
}

inline Json params_to_json(const ModelParams& p) {
  return {{"beta_c", to_json_array(p.beta_c)},
          {"beta_u", to_json_array(p.beta_u)},
          {"beta_s", to_json_array(p.beta_s)},
          {"intercept", p.intercept}};
}

inline ModelParams params_from_json(const Json& j) {
  ModelParams p;
  p.beta_c = vector_from_json(j.at("beta_c"), "beta_c");
  p.beta_u = vector_from_json(j.at("beta_u"), "beta_u");
  p.beta_s = vector_from_json(j.at("beta_s"), "beta_s");
  p.intercept = j.value("intercept", 0.0);
  return p;
}

namespace detail {

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline Json dataset_spec_to_json(const DatasetSpec& s) {
  return {{"n_train", s.n_train},
          {"n_test", s.n_test},
          {"c_dim", s.c_dim},
          {"u_dim", s.u_dim},
          {"s_dim", s.s_dim},
          {"beta_c", to_json_array(s.beta_c)},
          {"beta_u", to_json_array(s.beta_u)},
          {"noise_sigma", s.noise_sigma},
          {"shortcut_kind", std::string(to_string(s.shortcut_kind))},
          {"shortcut_coeffs", s.shortcut_coeffs},
          {"shortcut_noise_sigma", s.shortcut_noise_sigma},
          {"seed", s.seed}};
}

inline DatasetSpec dataset_spec_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kConfigError, "dataset must be an object");
  DatasetSpec s;
  s.n_train = detail::get_or<std::size_t>(j, "n_train", s.n_train);
  s.n_test = detail::get_or<std::size_t>(j, "n_test", s.n_test);
  s.c_dim = detail::get_or<std::size_t>(j, "c_dim", s.c_dim);
  s.u_dim = detail::get_or<std::size_t>(j, "u_dim", s.u_dim);
  s.s_dim = detail::get_or<std::size_t>(j, "s_dim", s.s_dim);
  s.beta_c = j.contains("beta_c") ? vector_from_json(j["beta_c"], "beta_c")
                                  : VectorXd::Zero(static_cast<Eigen::Index>(s.c_dim));
  s.beta_u = j.contains("beta_u") ? vector_from_json(j["beta_u"], "beta_u")
                                  : VectorXd::Zero(static_cast<Eigen::Index>(s.u_dim));
  s.noise_sigma = detail::get_or<double>(j, "noise_sigma", 0.0);
  s.shortcut_kind = parse_shortcut_kind(detail::get_or<std::string>(j, "shortcut_kind", "Independent"));
  s.shortcut_coeffs = detail::get_or<std::vector<double>>(j, "shortcut_coeffs", {});
  s.shortcut_noise_sigma = detail::get_or<double>(j, "shortcut_noise_sigma", 0.0);
  s.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
  s.validate();
  return s;
}

inline Json train_config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"max_epochs", c.max_epochs},
          {"tol", c.tol},                     {"trace_every", c.trace_every},
          {"te_trace_samples", c.te_trace_samples}, {"max_halvings", c.max_halvings}};
}

/// Reads optimizer settings; lambda_reg and seed are set per run.
inline TrainConfig train_config_from_json(const Json& j, TrainConfig c = {}) {
  if (j.is_null()) return c;
  if (!j.is_object()) throw Error(ErrorCode::kConfigError, "train must be an object");
  c.learning_rate = detail::get_or<double>(j, "learning_rate", c.learning_rate);
  c.max_epochs = detail::get_or<std::size_t>(j, "max_epochs", c.max_epochs);
  c.tol = detail::get_or<double>(j, "tol", c.tol);
  c.trace_every = detail::get_or<std::size_t>(j, "trace_every", c.trace_every);
  c.te_trace_samples = detail::get_or<std::size_t>(j, "te_trace_samples", c.te_trace_samples);
  c.max_halvings = detail::get_or<std::size_t>(j, "max_halvings", c.max_halvings);
  c.validate();
  return c;
}

}  // namespace shortcut
