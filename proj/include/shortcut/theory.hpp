#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "shortcut/dataset.hpp"
#include "shortcut/error.hpp"
#include "shortcut/random.hpp"
#include "shortcut/regularizers.hpp"
#include "shortcut/solver.hpp"

namespace shortcut {

/// Scalar setting with one concept, one unknown concept and one shortcut
/// S = delta_c C + delta_u U, noiseless Y = beta_c C + beta_u U.
struct ScalarProblem {
  double beta_c = 1.0;
  double beta_u = 1.0;
  double delta_c = 1.0;
  double delta_u = 0.0;
  /// (lambda_c, lambda_u, lambda_s) for the causal penalty.
  std::optional<std::array<double, 3>> causal_lambdas;
};

enum class Method { kL1, kL2, kEye, kCausal };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::kL1: return "L1";
    case Method::kL2: return "L2";
    case Method::kEye: return "EYE";
    case Method::kCausal: return "Causal";
  }
  return "Unknown";
}

/// (beta_u_hat, beta_s_hat) on the zero-risk manifold for a given beta_c_hat.
inline std::pair<double, double> manifold_params(double beta_c_hat, const ScalarProblem& prob) {
  if (prob.delta_c == 0.0) throw Error(ErrorCode::kZeroDeltaC, "delta_c must be non-zero");
  const double beta_s_hat = (prob.beta_c - beta_c_hat) / prob.delta_c;
  const double beta_u_hat = prob.beta_u - prob.delta_u * beta_s_hat;
  return {beta_u_hat, beta_s_hat};
}

struct ConditionResult {
  double value = 0.0;
  bool holds = false;
};

/// Relative tolerance for the causal condition's equality.
constexpr double kCausalConditionRelTol = 1e-6;

namespace detail {

inline const std::array<double, 3>& require_lambdas(const ScalarProblem& prob) {
  if (!prob.causal_lambdas) {
    throw Error(ErrorCode::kMissingCausalLambdas, "causal method needs (lambda_c, lambda_u, lambda_s)");
  }
  for (double l : *prob.causal_lambdas) {
    if (!(l > 0.0)) throw Error(ErrorCode::kInvalidSpec, "causal lambdas must be > 0");
  }
  return *prob.causal_lambdas;
}

}  // namespace detail

/// The analytic elimination conditions, evaluated as printed:
///   L1:     (dc + du - 1) / dc <= 0
///   L2:     (bc + bc du^2 - 2 bu dc du) / (dc^2 + du^2 + 1) >= bc
///   EYE:    (2 bc - 2 r bu) / (r^2 + 1) >= bc,  r = dc / (du - 1)
///   Causal: (bc + a du^2 bc - a du dc bu) / (k dc^2 + a du^2 + 1) == bc,
///           a = lu / ls, k = lc / ls
inline ConditionResult condition_holds(Method method, const ScalarProblem& prob) {
  const double bc = prob.beta_c;
  const double bu = prob.beta_u;
  const double dc = prob.delta_c;
  const double du = prob.delta_u;
  if (dc == 0.0) throw Error(ErrorCode::kZeroDeltaC, "delta_c must be non-zero");
  ConditionResult r;
  switch (method) {
    case Method::kL1:
      r.value = (dc + du - 1.0) / dc;
      r.holds = r.value <= 0.0;
      break;
    case Method::kL2:
      r.value = (bc + bc * du * du - 2.0 * bu * dc * du) / (dc * dc + du * du + 1.0);
      r.holds = r.value >= bc;
      break;
    case Method::kEye: {
      if (du == 1.0) {
        throw Error(ErrorCode::kEyeSingularDeltaU, "EYE condition is undefined at delta_u = 1");
      }
      const double ratio = dc / (du - 1.0);
      r.value = (2.0 * bc - 2.0 * ratio * bu) / (ratio * ratio + 1.0);
      r.holds = r.value >= bc;
      break;
    }
    case Method::kCausal: {
      const auto& [lc, lu, ls] = detail::require_lambdas(prob);
      const double a = lu / ls;
      const double k = lc / ls;
      r.value = (bc + a * du * du * bc - a * du * dc * bu) / (k * dc * dc + a * du * du + 1.0);
      r.holds = std::abs(r.value - bc) <= kCausalConditionRelTol * std::max(1.0, std::abs(bc));
      break;
    }
  }
  return r;
}

/// Penalty along the manifold as a function of beta_c_hat, in the forms the
/// proofs minimize: L1 and the quadratic penalties count beta_c_hat too
/// (L2 with unit lambdas, Causal with lambda_c), EYE is the library's EYE.
inline double manifold_penalty(Method method, const ScalarProblem& prob, double beta_c_hat) {
  const auto [bu, bs] = manifold_params(beta_c_hat, prob);
  const VectorXd c = (VectorXd(1) << beta_c_hat).finished();
  const VectorXd us = (VectorXd(2) << bu, bs).finished();
  switch (method) {
    case Method::kL1:
      return std::abs(beta_c_hat) + penalty_value(c, us, PenaltySpec::l1());
    case Method::kL2:
      return beta_c_hat * beta_c_hat + penalty_value(c, us, PenaltySpec::l2());
    case Method::kEye:
      return penalty_value(c, us, PenaltySpec::eye());
    case Method::kCausal: {
      const auto& [lc, lu, ls] = detail::require_lambdas(prob);
      const PenaltySpec spec = PenaltySpec::weighted_l2((VectorXd(2) << lu, ls).finished());
      return lc * beta_c_hat * beta_c_hat + penalty_value(c, us, spec);
    }
  }
  return 0.0;
}

/// Interval of beta_c_hat on which beta_c_hat, beta_u_hat and beta_s_hat
/// are all non-negative. Unbounded sides are capped at a span of
/// 10 * max(1, |beta_c|, |beta_u|) around beta_c.
inline std::pair<double, double> feasible_interval(const ScalarProblem& prob) {
  if (prob.delta_c == 0.0) throw Error(ErrorCode::kZeroDeltaC, "delta_c must be non-zero");
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  // slope * x + intercept >= 0
  auto constrain = [&](double slope, double intercept) {
    if (slope > 0.0) {
      lo = std::max(lo, -intercept / slope);
    } else if (slope < 0.0) {
      hi = std::min(hi, -intercept / slope);
    } else if (intercept < 0.0) {
      lo = std::numeric_limits<double>::infinity();
    }
  };
  const double dc = prob.delta_c;
  constrain(-1.0 / dc, prob.beta_c / dc);                                // beta_s_hat
  constrain(prob.delta_u / dc, prob.beta_u - prob.delta_u * prob.beta_c / dc);  // beta_u_hat
  if (lo > hi) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  const double span = 10.0 * std::max({1.0, std::abs(prob.beta_c), std::abs(prob.beta_u)});
  if (std::isinf(hi)) hi = std::max(lo, prob.beta_c) + span;
  return {lo, hi};
}

struct OracleGrid {
  /// Explicit bounds; when unset the feasible interval expanded by 10% on
  /// each side is used (or [0, beta_c] if the feasible set is empty).
  std::optional<std::pair<double, double>> range;
  std::size_t points = 2001;
  /// Absolute tolerance on the argmin; defaults to 1e-6 * max(1, |beta_c|).
  std::optional<double> atol;
  /// Skip grid points where any manifold coefficient is negative.
  bool restrict_nonnegative = true;
};

struct OracleResult {
  double argmin_beta_c_hat = 0.0;
  double min_penalty = 0.0;
  bool eliminates = false;
  std::size_t grid_points = 0;
  double atol = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Brute-force minimizer of the penalty over the zero-risk manifold: a dense
/// grid, ties broken toward the smallest |beta_s_hat|, then golden-section
/// refinement inside the winning cell.
inline OracleResult oracle_eliminates(Method method, const ScalarProblem& prob,
                                      const OracleGrid& grid = {}) {
  if (method == Method::kEye && prob.delta_u == 1.0) {
    throw Error(ErrorCode::kEyeSingularDeltaU, "EYE condition is undefined at delta_u = 1");
  }
  if (method == Method::kCausal) detail::require_lambdas(prob);
  if (grid.points < 2) throw Error(ErrorCode::kEmptyGrid, "oracle grid needs at least 2 points");
  if (prob.delta_c == 0.0) throw Error(ErrorCode::kZeroDeltaC, "delta_c must be non-zero");

  OracleResult out;
  out.grid_points = grid.points;
  out.atol = grid.atol.value_or(1e-6 * std::max(1.0, std::abs(prob.beta_c)));

  auto [feas_lo, feas_hi] = feasible_interval(prob);
  const bool feasible_empty = std::isnan(feas_lo);
  double lo = 0.0;
  double hi = prob.beta_c;
  if (grid.range) {
    std::tie(lo, hi) = *grid.range;
  } else if (!feasible_empty) {
    const double width = feas_hi - feas_lo;
    const double pad = width > 0.0 ? 0.1 * width : 0.1 * std::max(1.0, std::abs(prob.beta_c));
    lo = feas_lo - pad;
    hi = feas_hi + pad;
  }
  if (!(hi > lo)) throw Error(ErrorCode::kEmptyGrid, "oracle grid range is empty");
  out.lo = lo;
  out.hi = hi;

  const bool restrict = grid.restrict_nonnegative && !feasible_empty;
  // Small slack so points that are feasible up to rounding are kept.
  const double slack = 1e-12 * std::max({1.0, std::abs(feas_lo), std::abs(feas_hi)});
  auto admissible = [&](double x) {
    return !restrict || (x >= feas_lo - slack && x <= feas_hi + slack);
  };
  auto objective = [&](double x) {
    return admissible(x) ? manifold_penalty(method, prob, x)
                         : std::numeric_limits<double>::infinity();
  };
  auto shortcut_weight = [&](double x) { return std::abs(manifold_params(x, prob).second); };

  struct Candidate {
    double x;
    double value;
    bool interior;  // grid point with neighbours on both sides
    std::size_t index;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(grid.points + 3);
  const double step = (hi - lo) / static_cast<double>(grid.points - 1);
  for (std::size_t i = 0; i < grid.points; ++i) {
    const double x = i + 1 == grid.points ? hi : lo + step * static_cast<double>(i);
    candidates.push_back({x, objective(x), i > 0 && i + 1 < grid.points, i});
  }
  // Exact candidates: the truth-recovering point and the feasible endpoints.
  auto add_exact = [&](double x) {
    if (x >= lo && x <= hi) candidates.push_back({x, objective(x), false, 0});
  };
  add_exact(prob.beta_c);
  if (restrict) {
    add_exact(feas_lo);
    add_exact(feas_hi);
  }

  double best_value = std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) best_value = std::min(best_value, c.value);
  if (!std::isfinite(best_value)) throw Error(ErrorCode::kEmptyGrid, "no admissible grid point");
  const double tie_eps = 1e-12 * std::max(1.0, std::abs(best_value));
  const Candidate* best = nullptr;
  for (const auto& c : candidates) {
    if (c.value > best_value + tie_eps) continue;
    if (!best || shortcut_weight(c.x) < shortcut_weight(best->x)) best = &c;
  }

  double argmin = best->x;
  double min_value = best->value;
  if (best->interior) {
    // Golden-section search on [x_{i-1}, x_{i+1}].
    double a = lo + step * static_cast<double>(best->index - 1);
    double b = lo + step * static_cast<double>(best->index + 1);
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - ratio * (b - a);
    double x2 = a + ratio * (b - a);
    double f1 = objective(x1);
    double f2 = objective(x2);
    const double target = out.atol * 1e-2;
    while (b - a > target) {
      if (f1 <= f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - ratio * (b - a);
        f1 = objective(x1);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + ratio * (b - a);
        f2 = objective(x2);
      }
    }
    const double x = 0.5 * (a + b);
    const double fx = objective(x);
    if (fx < min_value - tie_eps) {
      argmin = x;
      min_value = fx;
    }
  }
  out.argmin_beta_c_hat = argmin;
  out.min_penalty = min_value;
  out.eliminates = std::abs(argmin - prob.beta_c) <= out.atol;
  return out;
}

struct ShrinkagePoint {
  double lambda = 0.0;
  double risk = 0.0;
  double penalty = 0.0;
  /// ||beta_us||_2 for L2, ||D beta_us||_2 for WeightedL2.
  double norm = 0.0;
  ModelParams params;
};

struct ShrinkageReport {
  bool monotone = true;
  std::vector<ShrinkagePoint> path;
};

/// Fits the closed form along an increasing lambda grid and checks that the
/// penalty never increases, the risk never decreases, and (for L2) the
/// norm of beta_us never increases.
inline ShrinkageReport verify_shrinkage(const Dataset& ds, const PenaltySpec& spec,
                                        const std::vector<double>& lambda_grid,
                                        double tolerance = 1e-8) {
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    if (!(lambda_grid[i] >= 0.0) || (i > 0 && !(lambda_grid[i] > lambda_grid[i - 1]))) {
      throw Error(ErrorCode::kConfigError, "lambda grid must be non-negative and strictly increasing");
    }
  }
  ShrinkageReport report;
  for (double lambda : lambda_grid) {
    ShrinkagePoint pt;
    pt.lambda = lambda;
    pt.params = fit_closed_form(ds, lambda, spec);
    pt.risk = empirical_risk(pt.params, ds);
    pt.penalty = penalty_value(pt.params, spec);
    pt.norm = spec.kind == PenaltyKind::kWeightedL2 ? std::sqrt(pt.penalty) : pt.params.beta_us().norm();
    report.path.push_back(std::move(pt));
  }
  for (std::size_t i = 1; i < report.path.size(); ++i) {
    const auto& prev = report.path[i - 1];
    const auto& cur = report.path[i];
    if (cur.penalty > prev.penalty + tolerance) report.monotone = false;
    if (cur.risk < prev.risk - tolerance) report.monotone = false;
    if (spec.kind == PenaltyKind::kL2 && cur.norm > prev.norm + tolerance) report.monotone = false;
  }
  return report;
}

/// beta_us expressed in the eigenbasis of H_us^T (I - Pi_c) H_us for the
/// plain L2 closed form; each coordinate equals z_i / (Lambda_i + n lambda)
/// where Q z = H_us^T (I - Pi_c) Y.
struct EigenShrinkage {
  VectorXd eigenvalues;   // Lambda_i
  VectorXd projected_rhs; // z_i
  VectorXd coordinates;   // Q^T beta_us
};

inline EigenShrinkage eigen_shrinkage(const Dataset& ds, double lambda_reg) {
  const double n = static_cast<double>(ds.n());
  const MatrixXd h_us = ds.h_us();
  const MatrixXd proj = concept_projection(ds.C);
  const MatrixXd resid = h_us - proj * h_us;
  const MatrixXd gram = resid.transpose() * resid;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
  EigenShrinkage out;
  out.eigenvalues = eig.eigenvalues();
  out.projected_rhs = eig.eigenvectors().transpose() * (resid.transpose() * ds.Y);
  out.coordinates = out.projected_rhs.array() / (out.eigenvalues.array() + n * lambda_reg);
  return out;
}

/// One randomized problem of the agreement sweep.
struct AgreementRecord {
  ScalarProblem problem;
  ConditionResult condition;
  OracleResult oracle;
  bool boundary = false;  // |condition value - threshold| <= 1e-3
  bool agree = false;
};

/// Draws beta_c, beta_u in [0.1, 3], delta_c in +-[0.2, 2] and delta_u in
/// [-2, 2] (values within 1e-3 of 1 are redrawn for EYE).
inline ScalarProblem random_scalar_problem(Rng& rng, Method method) {
  ScalarProblem p;
  p.beta_c = rng.uniform(0.1, 3.0);
  p.beta_u = rng.uniform(0.1, 3.0);
  const double mag = rng.uniform(0.2, 2.0);
  p.delta_c = rng.uniform() < 0.5 ? -mag : mag;
  do {
    p.delta_u = rng.uniform(-2.0, 2.0);
  } while (method == Method::kEye && std::abs(p.delta_u - 1.0) < 1e-3);
  if (method == Method::kCausal) {
    p.causal_lambdas = std::array<double, 3>{rng.uniform(0.1, 10.0), rng.uniform(0.1, 10.0),
                                             rng.uniform(0.1, 10.0)};
  }
  return p;
}

/// Threshold the condition value is compared against (0 for L1, beta_c
/// otherwise); used to flag near-boundary problems.
inline double condition_threshold(Method method, const ScalarProblem& prob) {
  return method == Method::kL1 ? 0.0 : prob.beta_c;
}

inline AgreementRecord evaluate_agreement(Method method, const ScalarProblem& prob,
                                          const OracleGrid& grid = {}) {
  AgreementRecord rec;
  rec.problem = prob;
  rec.condition = condition_holds(method, prob);
  rec.oracle = oracle_eliminates(method, prob, grid);
  rec.boundary = std::abs(rec.condition.value - condition_threshold(method, prob)) <= 1e-3;
  rec.agree = rec.condition.holds == rec.oracle.eliminates;
  return rec;
}

inline std::vector<AgreementRecord> agreement_sweep(Method method, std::size_t count,
                                                    std::uint64_t seed,
                                                    const OracleGrid& grid = {}) {
  std::vector<AgreementRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(hash_combine(seed, static_cast<std::uint64_t>(i)));
    out.push_back(evaluate_agreement(method, random_scalar_problem(rng, method), grid));
  }
  return out;
}

struct AgreementSummary {
  std::size_t total = 0;
  std::size_t non_boundary = 0;
  std::size_t agree_non_boundary = 0;
  double rate() const {
    return non_boundary == 0 ? 1.0
                             : static_cast<double>(agree_non_boundary) / static_cast<double>(non_boundary);
  }
};

inline AgreementSummary summarize_agreement(const std::vector<AgreementRecord>& records) {
  AgreementSummary s;
  for (const auto& r : records) {
    ++s.total;
    if (r.boundary) continue;
    ++s.non_boundary;
    if (r.agree) ++s.agree_non_boundary;
  }
  return s;
}

/// Noiseless scalar dataset (n rows) realizing a ScalarProblem.
inline Dataset scalar_dataset(const ScalarProblem& prob, std::size_t n, std::uint64_t seed) {
  DatasetSpec spec;
  spec.n_train = n;
  spec.n_test = 1;
  spec.c_dim = 1;
  spec.u_dim = 1;
  spec.s_dim = 1;
  spec.beta_c = (VectorXd(1) << prob.beta_c).finished();
  spec.beta_u = (VectorXd(1) << prob.beta_u).finished();
  spec.shortcut_kind = ShortcutKind::kUnknownCorrelated;
  spec.shortcut_coeffs = {prob.delta_c, prob.delta_u};
  spec.seed = seed;
  return generate_synthetic(spec).first;
}

}  // namespace shortcut
