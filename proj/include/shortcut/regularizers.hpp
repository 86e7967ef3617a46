#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <string_view>

#include "shortcut/error.hpp"

namespace shortcut {

using Eigen::VectorXd;

/// Coefficients of the linear head, split by block.
struct ModelParams {
  VectorXd beta_c;
  VectorXd beta_u;
  VectorXd beta_s;
  double intercept = 0.0;

  static ModelParams zeros(Eigen::Index c, Eigen::Index u, Eigen::Index s) {
    return {VectorXd::Zero(c), VectorXd::Zero(u), VectorXd::Zero(s), 0.0};
  }

  Eigen::Index us_size() const { return beta_u.size() + beta_s.size(); }

  /// concat(beta_u, beta_s)
  VectorXd beta_us() const {
    VectorXd out(us_size());
    out << beta_u, beta_s;
    return out;
  }

  void set_beta_us(const VectorXd& us) {
    beta_u = us.head(beta_u.size());
    beta_s = us.tail(beta_s.size());
  }

  bool finite() const {
    return beta_c.allFinite() && beta_u.allFinite() && beta_s.allFinite() &&
           std::isfinite(intercept);
  }
};

enum class PenaltyKind { kNone, kL1, kL2, kEye, kWeightedL2 };

inline std::string_view to_string(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::kNone: return "None";
    case PenaltyKind::kL1: return "L1";
    case PenaltyKind::kL2: return "L2";
    case PenaltyKind::kEye: return "EYE";
    case PenaltyKind::kWeightedL2: return "WeightedL2";
  }
  return "Unknown";
}

inline PenaltyKind parse_penalty_kind(std::string_view name) {
  if (name == "None") return PenaltyKind::kNone;
  if (name == "L1") return PenaltyKind::kL1;
  if (name == "L2") return PenaltyKind::kL2;
  if (name == "EYE") return PenaltyKind::kEye;
  if (name == "WeightedL2") return PenaltyKind::kWeightedL2;
  throw Error(ErrorCode::kConfigError, "unknown penalty kind '" + std::string(name) + "'");
}

/// Which penalty R to apply. For WeightedL2, `weights[i]` is lambda_i, the
/// multiplier of beta_us[i]^2 (so the diagonal scaling matrix has entries
/// sqrt(weights[i])).
struct PenaltySpec {
  PenaltyKind kind = PenaltyKind::kNone;
  VectorXd weights;

  static PenaltySpec none() { return {PenaltyKind::kNone, {}}; }
  static PenaltySpec l1() { return {PenaltyKind::kL1, {}}; }
  static PenaltySpec l2() { return {PenaltyKind::kL2, {}}; }
  static PenaltySpec eye() { return {PenaltyKind::kEye, {}}; }
  static PenaltySpec weighted_l2(VectorXd w) { return {PenaltyKind::kWeightedL2, std::move(w)}; }

  void validate(Eigen::Index us_size) const {
    if (kind != PenaltyKind::kWeightedL2) return;
    if (weights.size() != us_size) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "WeightedL2 has " + std::to_string(weights.size()) + " weights for " +
                      std::to_string(us_size) + " u+s coefficients");
    }
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
      if (!(weights(i) > 0.0) || !std::isfinite(weights(i))) {
        throw Error(ErrorCode::kInvalidSpec, "WeightedL2 weights must be finite and > 0");
      }
    }
  }
};

/// R(beta_c, beta_us) on raw blocks.
inline double penalty_value(const VectorXd& beta_c, const VectorXd& beta_us,
                            const PenaltySpec& spec) {
  spec.validate(beta_us.size());
  switch (spec.kind) {
    case PenaltyKind::kNone:
      return 0.0;
    case PenaltyKind::kL1:
      return beta_us.lpNorm<1>();
    case PenaltyKind::kL2:
      return beta_us.squaredNorm();
    case PenaltyKind::kEye: {
      const double l1 = beta_us.lpNorm<1>();
      return l1 + std::sqrt(l1 * l1 + beta_c.squaredNorm());
    }
    case PenaltyKind::kWeightedL2:
      return spec.weights.dot(beta_us.cwiseAbs2());
  }
  return 0.0;
}

inline double penalty_value(const ModelParams& p, const PenaltySpec& spec) {
  return penalty_value(p.beta_c, p.beta_us(), spec);
}

struct PenaltyGradient {
  VectorXd c;
  VectorXd us;
};

namespace detail {
inline double sign(double x) { return (x > 0.0) - (x < 0.0); }
}  // namespace detail

/// A subgradient of R with sign(0) = 0. At the EYE apex (all coefficients
/// zero) the sqrt term contributes nothing.
inline PenaltyGradient penalty_subgradient(const VectorXd& beta_c, const VectorXd& beta_us,
                                           const PenaltySpec& spec) {
  spec.validate(beta_us.size());
  PenaltyGradient g{VectorXd::Zero(beta_c.size()), VectorXd::Zero(beta_us.size())};
  switch (spec.kind) {
    case PenaltyKind::kNone:
      break;
    case PenaltyKind::kL1:
      g.us = beta_us.unaryExpr([](double x) { return detail::sign(x); });
      break;
    case PenaltyKind::kL2:
      g.us = 2.0 * beta_us;
      break;
    case PenaltyKind::kEye: {
      const VectorXd signs = beta_us.unaryExpr([](double x) { return detail::sign(x); });
      const double l1 = beta_us.lpNorm<1>();
      const double root = std::sqrt(l1 * l1 + beta_c.squaredNorm());
      if (root > 0.0) {
        g.us = signs * (1.0 + l1 / root);
        g.c = beta_c / root;
      } else {
        g.us = signs;
      }
      break;
    }
    case PenaltyKind::kWeightedL2:
      g.us = 2.0 * spec.weights.cwiseProduct(beta_us);
      break;
  }
  return g;
}

inline PenaltyGradient penalty_subgradient(const ModelParams& p, const PenaltySpec& spec) {
  return penalty_subgradient(p.beta_c, p.beta_us(), spec);
}

/// Causal-effect weights lambda_i = 1 / max(|te_i|, floor).
inline PenaltySpec causal_weights(const VectorXd& te_estimates, double floor) {
  if (!(floor > 0.0)) {
    throw Error(ErrorCode::kNonPositiveFloor, "floor must be > 0, got " + std::to_string(floor));
  }
  VectorXd w(te_estimates.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    w(i) = 1.0 / std::max(std::abs(te_estimates(i)), floor);
  }
  return PenaltySpec::weighted_l2(std::move(w));
}

}  // namespace shortcut
