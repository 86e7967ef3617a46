#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "shortcut/dataset.hpp"
#include "shortcut/error.hpp"
#include "shortcut/eval.hpp"
#include "shortcut/random.hpp"
#include "shortcut/regularizers.hpp"
#include "shortcut/solver.hpp"

namespace shortcut {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation { kRelu, kTanh };

inline std::string_view to_string(Activation a) { return a == Activation::kRelu ? "relu" : "tanh"; }

inline Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw Error(ErrorCode::kConfigError, "unknown activation '" + std::string(name) + "'");
}

/// input -> hidden -> 1 network. The first `concept_cols` columns of W1 act
/// as the concept block, the remaining columns as the u+s block.
struct MLPParams {
  MatrixXd W1;  // hidden x input
  VectorXd b1;  // hidden
  VectorXd w2;  // hidden (the 1 x hidden output row)
  double b2 = 0.0;
  Activation activation = Activation::kRelu;
  Eigen::Index concept_cols = 0;

  Eigen::Index hidden() const { return W1.rows(); }
  Eigen::Index input() const { return W1.cols(); }
  Eigen::Index us_cols() const { return input() - concept_cols; }

  bool finite() const {
    return W1.allFinite() && b1.allFinite() && w2.allFinite() && std::isfinite(b2);
  }
};

inline MLPParams mlp_init(Eigen::Index input_dim, Eigen::Index hidden, std::uint64_t seed,
                          Activation activation = Activation::kRelu,
                          Eigen::Index concept_cols = 0) {
  if (input_dim < 1 || hidden < 1) {
    throw Error(ErrorCode::kInvalidDims, "mlp dims must be >= 1");
  }
  if (concept_cols < 0 || concept_cols > input_dim) {
    throw Error(ErrorCode::kInvalidDims, "concept block wider than the input");
  }
  Rng rng(seed);
  MLPParams p;
  p.activation = activation;
  p.concept_cols = concept_cols;
  p.W1.resize(hidden, input_dim);
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (Eigen::Index i = 0; i < hidden; ++i) {
    for (Eigen::Index j = 0; j < input_dim; ++j) p.W1(i, j) = rng.uniform(-bound1, bound1);
  }
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  p.w2.resize(hidden);
  for (Eigen::Index i = 0; i < hidden; ++i) p.w2(i) = rng.uniform(-bound2, bound2);
  p.b1 = VectorXd::Zero(hidden);
  p.b2 = 0.0;
  return p;
}

namespace detail {

inline double activate(Activation a, double z) { return a == Activation::kRelu ? (z > 0.0 ? z : 0.0) : std::tanh(z); }

inline double activate_grad(Activation a, double z) {
  if (a == Activation::kRelu) return z > 0.0 ? 1.0 : 0.0;
  const double t = std::tanh(z);
  return 1.0 - t * t;
}

}  // namespace detail

/// w2 . act(W1 x + b1) + b2
inline double mlp_forward(const MLPParams& p, const VectorXd& x) {
  if (x.size() != p.input()) {
    throw Error(ErrorCode::kDimensionMismatch, "mlp expects " + std::to_string(p.input()) +
                                                   " inputs, got " + std::to_string(x.size()));
  }
  const VectorXd z = p.W1 * x + p.b1;
  double out = p.b2;
  for (Eigen::Index i = 0; i < z.size(); ++i) out += p.w2(i) * detail::activate(p.activation, z(i));
  return out;
}

inline Predictor mlp_predictor(const MLPParams& p) {
  return Predictor(p.input(), [p](const VectorXd& x) { return mlp_forward(p, x); });
}

/// Row-wise forward pass over a feature matrix (n x input).
inline VectorXd mlp_forward_batch(const MLPParams& p, const MatrixXd& X) {
  if (X.cols() != p.input()) throw Error(ErrorCode::kDimensionMismatch, "mlp input width mismatch");
  MatrixXd z = X * p.W1.transpose();
  z.rowwise() += p.b1.transpose();
  const MatrixXd a = z.unaryExpr([&](double v) { return detail::activate(p.activation, v); });
  VectorXd out = a * p.w2;
  out.array() += p.b2;
  return out;
}

namespace detail {

/// Flattened (column-major) concept and u+s blocks of W1, and the
/// per-entry weights of a WeightedL2 penalty (column j's weight repeated
/// over its rows).
struct W1Blocks {
  VectorXd concept_block;
  VectorXd us;
  PenaltySpec spec;
};

inline W1Blocks split_w1(const MLPParams& p, const PenaltySpec& spec) {
  W1Blocks b;
  const MatrixXd wc = p.W1.leftCols(p.concept_cols);
  const MatrixXd wus = p.W1.rightCols(p.us_cols());
  b.concept_block = Eigen::Map<const VectorXd>(wc.data(), wc.size());
  b.us = Eigen::Map<const VectorXd>(wus.data(), wus.size());
  b.spec = spec;
  if (spec.kind == PenaltyKind::kWeightedL2) {
    if (spec.weights.size() != p.us_cols()) {
      throw Error(ErrorCode::kDimensionMismatch, "WeightedL2 needs one weight per u+s column of W1");
    }
    b.spec.weights.resize(wus.size());
    for (Eigen::Index j = 0; j < wus.cols(); ++j) {
      b.spec.weights.segment(j * wus.rows(), wus.rows()).setConstant(spec.weights(j));
    }
  }
  return b;
}

}  // namespace detail

/// Entrywise penalty on W1: the concept columns play beta_c and the u+s
/// columns play beta_us.
inline double mlp_penalty(const MLPParams& p, const PenaltySpec& spec) {
  const auto b = detail::split_w1(p, spec);
  return penalty_value(b.concept_block, b.us, b.spec);
}

/// Gradient of the penalty with respect to W1 (same shape as W1).
inline MatrixXd mlp_penalty_gradient(const MLPParams& p, const PenaltySpec& spec) {
  const auto b = detail::split_w1(p, spec);
  const auto g = penalty_subgradient(b.concept_block, b.us, b.spec);
  MatrixXd out(p.hidden(), p.input());
  out.leftCols(p.concept_cols) = Eigen::Map<const MatrixXd>(g.c.data(), p.hidden(), p.concept_cols);
  out.rightCols(p.us_cols()) = Eigen::Map<const MatrixXd>(g.us.data(), p.hidden(), p.us_cols());
  return out;
}

namespace detail {

// Scratch buffers reused across epochs; avoids reallocating n x hidden
// temporaries on every line-search probe.
struct MlpWorkspace {
  MatrixXd z, a, dz;
  VectorXd yhat, dy;

  void forward(const MLPParams& p, const MatrixXd& X) {
    z.noalias() = X * p.W1.transpose();
    z.rowwise() += p.b1.transpose();
    a = z.unaryExpr([&](double v) { return activate(p.activation, v); });
    yhat.noalias() = a * p.w2;
    yhat.array() += p.b2;
  }

  double risk(const MLPParams& p, const MatrixXd& X, const VectorXd& y) {
    forward(p, X);
    return (y - yhat).squaredNorm() / static_cast<double>(y.size());
  }
};

}  // namespace detail

inline double mlp_risk(const MLPParams& p, const MatrixXd& X, const VectorXd& y) {
  return mse(y, mlp_forward_batch(p, X));
}

inline double mlp_loss(const MLPParams& p, const MatrixXd& X, const VectorXd& y,
                       const PenaltySpec& spec, double lambda_reg) {
  return mlp_risk(p, X, y) + lambda_reg * mlp_penalty(p, spec);
}

/// Backpropagated gradient of risk + lambda R, stored in an MLPParams.
/// With `include_penalty` false only the risk gradient is returned.
namespace detail {

inline MLPParams mlp_gradient_ws(MlpWorkspace& ws, const MLPParams& p, const MatrixXd& X,
                                 const VectorXd& y, const PenaltySpec& spec, double lambda_reg,
                                 bool include_penalty) {
  const double n = static_cast<double>(X.rows());
  ws.forward(p, X);
  ws.dy = -2.0 / n * (y - ws.yhat);

  MLPParams g = p;
  g.w2.noalias() = ws.a.transpose() * ws.dy;
  g.b2 = ws.dy.sum();
  ws.dz = (ws.dy * p.w2.transpose())
              .cwiseProduct(ws.z.unaryExpr([&](double v) { return activate_grad(p.activation, v); }));
  g.W1.noalias() = ws.dz.transpose() * X;
  g.b1 = ws.dz.colwise().sum().transpose();
  if (include_penalty && lambda_reg > 0.0 && spec.kind != PenaltyKind::kNone) {
    g.W1 += lambda_reg * mlp_penalty_gradient(p, spec);
  }
  return g;
}

}  // namespace detail

inline MLPParams mlp_gradient(const MLPParams& p, const MatrixXd& X, const VectorXd& y,
                              const PenaltySpec& spec, double lambda_reg,
                              bool include_penalty = true) {
  detail::MlpWorkspace ws;
  return detail::mlp_gradient_ws(ws, p, X, y, spec, lambda_reg, include_penalty);
}

struct MlpOptions {
  Eigen::Index hidden = 10;
  Activation activation = Activation::kRelu;
};

struct MlpFitResult {
  MLPParams params;
  TrainTrace trace;
};

/// Full-batch descent on (1/n)||Y - Y_hat||^2 + lambda R(W1 blocks) with the
/// same step control as the linear solver: L1 is a proximal step on the u+s
/// columns of W1, EYE a subgradient step, the rest exact gradients. The
/// trace records the shortcut treatment effect with a fixed draw set and a
/// zero base row.
inline MlpFitResult mlp_fit(const Dataset& ds, const PenaltySpec& spec, const TrainConfig& cfg,
                            const MlpOptions& opts = {}) {
  cfg.validate();
  ds.check_shape();
  if (ds.n() == 0) throw Error(ErrorCode::kConfigError, "empty dataset");
  const MatrixXd X = ds.features();
  const VectorXd& y = ds.Y;
  const double lambda = cfg.lambda_reg;

  MlpFitResult result;
  MLPParams p = mlp_init(X.cols(), opts.hidden, hash_combine(cfg.seed, "mlp_init"),
                         opts.activation, ds.c());
  {
    // Validates WeightedL2 width against the u+s columns.
    (void)mlp_penalty(p, spec);
  }

  for (Eigen::Index i = 0; i < p.hidden(); ++i) {
    for (Eigen::Index j = 0; j < p.input(); ++j) {
      result.trace.param_names.push_back("w1_r" + std::to_string(i) + "_c" + std::to_string(j));
    }
  }
  const VectorXd draws = draw_standard_normals(cfg.te_trace_samples, cfg.seed);
  const VectorXd base_row = VectorXd::Zero(X.cols());
  auto record = [&](std::size_t epoch, double risk, double pen) {
    if (!cfg.record_trace) return;
    TraceEntry e;
    e.epoch = epoch;
    e.risk = risk;
    e.penalty = pen;
    e.loss = risk + lambda * pen;
    e.params.resize(p.W1.size());
    for (Eigen::Index i = 0; i < p.hidden(); ++i) {
      for (Eigen::Index j = 0; j < p.input(); ++j) e.params(i * p.input() + j) = p.W1(i, j);
    }
    const Predictor pred = mlp_predictor(p);
    e.te.resize(ds.s());
    for (Eigen::Index k = 0; k < ds.s(); ++k) {
      e.te(k) = treatment_effect_from_draws(pred, base_row, ds.c() + ds.u() + k, draws);
    }
    result.trace.entries.push_back(std::move(e));
  };

  detail::MlpWorkspace ws;
  double cur_risk = ws.risk(p, X, y);
  double cur_pen = mlp_penalty(p, spec);
  double cur_loss = cur_risk + lambda * cur_pen;
  record(0, cur_risk, cur_pen);

  const bool proximal = spec.kind == PenaltyKind::kL1;
  std::size_t epoch = 0;
  bool last_recorded = true;
  for (epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const MLPParams g = detail::mlp_gradient_ws(ws, p, X, y, spec, lambda, !proximal);
    if (!g.finite()) throw Error(ErrorCode::kDivergenceDetected, "non-finite gradient");

    double step = cfg.learning_rate;
    bool accepted = false;
    MLPParams cand;
    double next_risk = 0.0;
    double next_pen = 0.0;
    for (std::size_t h = 0; h <= cfg.max_halvings; ++h, step *= 0.5) {
      cand = p;
      cand.W1 -= step * g.W1;
      cand.b1 -= step * g.b1;
      cand.w2 -= step * g.w2;
      cand.b2 -= step * g.b2;
      if (proximal) {
        const double t = step * lambda;
        cand.W1.rightCols(p.us_cols()) =
            cand.W1.rightCols(p.us_cols()).unaryExpr([t](double v) { return soft_threshold(v, t); });
      }
      next_risk = ws.risk(cand, X, y);
      next_pen = mlp_penalty(cand, spec);
      const double next_loss = next_risk + lambda * next_pen;
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
    double delta = (cand.W1 - p.W1).cwiseAbs().maxCoeff();
    delta = std::max(delta, (cand.b1 - p.b1).cwiseAbs().maxCoeff());
    delta = std::max(delta, (cand.w2 - p.w2).cwiseAbs().maxCoeff());
    delta = std::max(delta, std::abs(cand.b2 - p.b2));
    p = std::move(cand);
    cur_risk = next_risk;
    cur_pen = next_pen;
    cur_loss = cur_risk + lambda * cur_pen;

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
  result.params = std::move(p);
  return result;
}

}  // namespace shortcut
