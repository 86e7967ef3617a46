#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "shortcut/dataset.hpp"
#include "shortcut/error.hpp"
#include "shortcut/eval.hpp"
#include "shortcut/regularizers.hpp"

namespace shortcut {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t max_epochs = 5000;
  /// Stop once the largest coordinate change in an epoch drops below this.
  double tol = 1e-8;
  double lambda_reg = 0.0;
  bool record_trace = true;
  /// Record every k-th epoch (epoch 0 and the final epoch are always kept).
  std::size_t trace_every = 1;
  std::size_t te_trace_samples = 100;
  std::uint64_t seed = 0;
  std::size_t max_halvings = 30;

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw Error(ErrorCode::kConfigError, "learning_rate must be > 0");
    }
    if (!(lambda_reg >= 0.0) || !std::isfinite(lambda_reg)) {
      throw Error(ErrorCode::kConfigError, "lambda_reg must be >= 0");
    }
    if (!(tol > 0.0)) throw Error(ErrorCode::kConfigError, "tol must be > 0");
    if (trace_every == 0) throw Error(ErrorCode::kConfigError, "trace_every must be >= 1");
    if (te_trace_samples < 2) throw Error(ErrorCode::kConfigError, "te_trace_samples must be >= 2");
  }
};

struct TraceEntry {
  std::size_t epoch = 0;
  double risk = 0.0;
  double penalty = 0.0;
  double loss = 0.0;
  VectorXd te;      // one entry per shortcut column
  VectorXd params;  // flattened snapshot, names in TrainTrace::param_names
};

struct TrainTrace {
  std::vector<std::string> param_names;
  std::vector<TraceEntry> entries;
  std::size_t epochs_run = 0;
  bool converged = false;

  /// epoch,risk,penalty,loss,te_s0,...,<param names>
  std::string to_csv() const {
    std::ostringstream out;
    out << "epoch,risk,penalty,loss";
    const Eigen::Index n_te = entries.empty() ? 0 : entries.front().te.size();
    for (Eigen::Index k = 0; k < n_te; ++k) out << ",te_s" << k;
    for (const auto& name : param_names) out << ',' << name;
    out << '\n';
    for (const auto& e : entries) {
      out << e.epoch << ',' << format_double(e.risk) << ',' << format_double(e.penalty) << ','
          << format_double(e.loss);
      for (Eigen::Index k = 0; k < e.te.size(); ++k) out << ',' << format_double(e.te(k));
      for (Eigen::Index k = 0; k < e.params.size(); ++k) out << ',' << format_double(e.params(k));
      out << '\n';
    }
    return out.str();
  }
};

inline std::vector<std::string> linear_param_names(Eigen::Index c, Eigen::Index u, Eigen::Index s) {
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < c; ++j) names.push_back("beta_c" + std::to_string(j));
  for (Eigen::Index j = 0; j < u; ++j) names.push_back("beta_u" + std::to_string(j));
  for (Eigen::Index j = 0; j < s; ++j) names.push_back("beta_s" + std::to_string(j));
  return names;
}

inline double soft_threshold(double x, double t) {
  if (t < 0.0) throw Error(ErrorCode::kNegativeThreshold, "threshold must be >= 0");
  const double mag = std::abs(x) - t;
  if (mag <= 0.0) return 0.0;
  return x > 0.0 ? mag : -mag;
}

/// y_hat = C beta_c + U beta_u + S beta_s + intercept
inline VectorXd predict(const ModelParams& p, const Dataset& ds) {
  if (p.beta_c.size() != ds.c() || p.beta_u.size() != ds.u() || p.beta_s.size() != ds.s()) {
    throw Error(ErrorCode::kDimensionMismatch, "parameter blocks do not match dataset dims");
  }
  VectorXd out = ds.C * p.beta_c + ds.U * p.beta_u + ds.S * p.beta_s;
  out.array() += p.intercept;
  return out;
}

inline double empirical_risk(const ModelParams& p, const Dataset& ds) {
  return mse(ds.Y, predict(p, ds));
}

namespace detail {

constexpr double kConceptRankTol = 1e-10;
constexpr double kSystemRankTol = 1e-12;

/// Cholesky factor of C^T C after checking its conditioning.
inline Eigen::LLT<MatrixXd> factor_concept_gram(const MatrixXd& C) {
  const MatrixXd gram = C.transpose() * C;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double hi = eig.eigenvalues().maxCoeff();
  const double lo = eig.eigenvalues().minCoeff();
  if (!(hi > 0.0) || lo < kConceptRankTol * hi) {
    std::ostringstream msg;
    msg << "C^T C is rank deficient (eigenvalue ratio " << (hi > 0.0 ? lo / hi : 0.0) << ")";
    throw Error(ErrorCode::kSingularConceptGram, msg.str());
  }
  Eigen::LLT<MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kSingularConceptGram, "Cholesky of C^T C failed");
  }
  return llt;
}

}  // namespace detail

/// Orthogonal projector onto the column space of C, C (C^T C)^{-1} C^T.
/// Forms an n x n matrix; intended for small n.
inline MatrixXd concept_projection(const MatrixXd& C) {
  auto llt = detail::factor_concept_gram(C);
  return C * llt.solve(C.transpose());
}

/// Minimizer of (1/n)||Y - Y_hat||^2 + lambda ||D beta_us||^2 with beta_c
/// unpenalized: beta_c is partialled out through the concept projection
/// and recovered by back-substitution.
inline ModelParams fit_closed_form(const Dataset& ds, double lambda_reg, const PenaltySpec& spec) {
  ds.check_shape();
  if (spec.kind != PenaltyKind::kL2 && spec.kind != PenaltyKind::kWeightedL2) {
    throw Error(ErrorCode::kConfigError, "closed form needs an L2 or WeightedL2 penalty, got " +
                                             std::string(to_string(spec.kind)));
  }
  if (!(lambda_reg >= 0.0) || !std::isfinite(lambda_reg)) {
    throw Error(ErrorCode::kConfigError, "lambda_reg must be >= 0");
  }
  const Eigen::Index k = ds.u() + ds.s();
  spec.validate(k);
  const double n = static_cast<double>(ds.n());

  auto concept_llt = detail::factor_concept_gram(ds.C);
  const MatrixXd h_us = ds.h_us();
  // (I - Pi_c) H_us without forming the n x n projector.
  const MatrixXd residual = h_us - ds.C * concept_llt.solve(ds.C.transpose() * h_us);

  MatrixXd system = residual.transpose() * residual / n;
  if (spec.kind == PenaltyKind::kL2) {
    system.diagonal().array() += lambda_reg;
  } else {
    system.diagonal() += lambda_reg * spec.weights;
  }
  const VectorXd rhs = residual.transpose() * ds.Y / n;

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(system, Eigen::EigenvaluesOnly);
  const double hi = eig.eigenvalues().maxCoeff();
  const double lo = eig.eigenvalues().minCoeff();
  if (!(hi > 0.0) || lo <= detail::kSystemRankTol * hi) {
    std::ostringstream msg;
    msg << "projected system is singular (eigenvalue ratio " << (hi > 0.0 ? lo / hi : 0.0)
        << "); u/s columns are collinear after removing C";
    throw Error(ErrorCode::kSingularSystem, msg.str());
  }
  VectorXd beta_us;
  Eigen::LLT<MatrixXd> llt(system);
  if (llt.info() == Eigen::Success) {
    beta_us = llt.solve(rhs);
  } else {
    beta_us = system.fullPivLu().solve(rhs);
  }

  ModelParams p = ModelParams::zeros(ds.c(), ds.u(), ds.s());
  p.set_beta_us(beta_us);
  p.beta_c = concept_llt.solve(ds.C.transpose() * (ds.Y - h_us * beta_us));
  return p;
}

namespace detail {

/// Sufficient statistics of the squared loss: risk(b) = yy - 2 g.b + b'Gb.
struct QuadraticRisk {
  MatrixXd gram;  // H^T H / n
  VectorXd cross; // H^T Y / n
  double yy = 0.0;

  explicit QuadraticRisk(const Dataset& ds) {
    const double n = static_cast<double>(ds.n());
    const MatrixXd h = ds.features();
    gram = h.transpose() * h / n;
    cross = h.transpose() * ds.Y / n;
    yy = ds.Y.squaredNorm() / n;
  }

  double value(const VectorXd& beta) const {
    return std::max(0.0, yy - 2.0 * cross.dot(beta) + beta.dot(gram * beta));
  }

  VectorXd gradient(const VectorXd& beta) const { return 2.0 * (gram * beta - cross); }
};

}  // namespace detail

struct FitResult {
  ModelParams params;
  TrainTrace trace;
};

/// Full-batch descent on (1/n)||Y - Y_hat||^2 + lambda R from a zero start.
///
/// L1 takes a proximal (soft-threshold) step on the u+s block; L2 and
/// WeightedL2 follow the exact gradient; EYE follows its subgradient. Each
/// epoch starts at the configured learning rate and halves it until the
/// total loss does not increase. If no step within `max_halvings` reduces
/// the loss the fit stops at the current point.
///
/// The risk is evaluated from the Gram matrix, so one epoch costs
/// O(width^2) regardless of n; the iterates are those of ordinary
/// full-batch gradient descent.
inline FitResult fit_iterative(const Dataset& ds, const PenaltySpec& spec, const TrainConfig& cfg) {
  cfg.validate();
  ds.check_shape();
  if (ds.n() == 0) throw Error(ErrorCode::kConfigError, "empty dataset");
  const Eigen::Index c = ds.c();
  const Eigen::Index k = ds.u() + ds.s();
  spec.validate(k);
  const double lambda = cfg.lambda_reg;

  const detail::QuadraticRisk risk(ds);
  VectorXd beta = VectorXd::Zero(c + k);

  auto penalty_of = [&](const VectorXd& b) {
    return penalty_value(b.head(c), b.tail(k), spec);
  };
  auto loss_of = [&](double r, double pen) { return r + lambda * pen; };

  FitResult result;
  result.params = ModelParams::zeros(c, ds.u(), ds.s());
  result.trace.param_names = linear_param_names(c, ds.u(), ds.s());

  const VectorXd draws = draw_standard_normals(cfg.te_trace_samples, cfg.seed);
  const VectorXd base_row = VectorXd::Zero(c + k);
  auto record = [&](std::size_t epoch, double r, double pen) {
    if (!cfg.record_trace) return;
    TraceEntry e;
    e.epoch = epoch;
    e.risk = r;
    e.penalty = pen;
    e.loss = loss_of(r, pen);
    e.params = beta;
    ModelParams snapshot = ModelParams::zeros(c, ds.u(), ds.s());
    snapshot.beta_c = beta.head(c);
    snapshot.set_beta_us(beta.tail(k));
    const Predictor pred = Predictor::linear(snapshot);
    e.te.resize(ds.s());
    for (Eigen::Index j = 0; j < ds.s(); ++j) {
      e.te(j) = treatment_effect_from_draws(pred, base_row, c + ds.u() + j, draws);
    }
    result.trace.entries.push_back(std::move(e));
  };

  double cur_risk = risk.value(beta);
  double cur_pen = penalty_of(beta);
  double cur_loss = loss_of(cur_risk, cur_pen);
  record(0, cur_risk, cur_pen);

  std::size_t epoch = 0;
  bool last_recorded = true;
  VectorXd candidate(beta.size());
  for (epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    VectorXd grad = risk.gradient(beta);
    if (spec.kind != PenaltyKind::kL1 && spec.kind != PenaltyKind::kNone && lambda > 0.0) {
      const auto pg = penalty_subgradient(beta.head(c), beta.tail(k), spec);
      grad.head(c) += lambda * pg.c;
      grad.tail(k) += lambda * pg.us;
    }
    if (!grad.allFinite()) throw Error(ErrorCode::kDivergenceDetected, "non-finite gradient");

    double step = cfg.learning_rate;
    bool accepted = false;
    double next_risk = 0.0;
    double next_pen = 0.0;
    for (std::size_t h = 0; h <= cfg.max_halvings; ++h, step *= 0.5) {
      candidate = beta - step * grad;
      if (spec.kind == PenaltyKind::kL1) {
        const double t = step * lambda;
        for (Eigen::Index i = c; i < c + k; ++i) candidate(i) = soft_threshold(candidate(i), t);
      }
      next_risk = risk.value(candidate);
      next_pen = penalty_of(candidate);
      const double next_loss = loss_of(next_risk, next_pen);
      if (!std::isfinite(next_loss)) {
        throw Error(ErrorCode::kDivergenceDetected, "loss became non-finite at epoch " +
                                                        std::to_string(epoch));
      }
      if (next_loss <= cur_loss) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      --epoch;
      break;
    }
    const double delta = (candidate - beta).cwiseAbs().maxCoeff();
    beta.swap(candidate);
    cur_risk = next_risk;
    cur_pen = next_pen;
    cur_loss = loss_of(cur_risk, cur_pen);

    last_recorded = epoch % cfg.trace_every == 0;
    if (last_recorded) record(epoch, cur_risk, cur_pen);
    if (delta < cfg.tol) {
      result.trace.converged = true;
      break;
    }
  }
  epoch = std::min(epoch, cfg.max_epochs);
  if (!last_recorded) record(epoch, cur_risk, cur_pen);
  result.trace.epochs_run = epoch;

  result.params.beta_c = beta.head(c);
  result.params.set_beta_us(beta.tail(k));
  return result;
}

}  // namespace shortcut
