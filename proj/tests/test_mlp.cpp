#include <gtest/gtest.h>

#include <cmath>

#include "shortcut/mlp.hpp"

using namespace shortcut;

namespace {

Dataset small_data(std::size_t n, std::uint64_t seed, ShortcutKind kind = ShortcutKind::kOutputCorrelated,
                   std::vector<double> coeffs = {1.0}) {
  DatasetSpec s;
  s.n_train = n;
  s.n_test = 1;
  s.beta_c = (VectorXd(2) << 4.0, -0.5).finished();
  s.beta_u = (VectorXd(2) << 1.0, 2.0).finished();
  s.shortcut_kind = kind;
  s.shortcut_coeffs = std::move(coeffs);
  s.seed = seed;
  auto [train, test] = generate_synthetic(s);
  return standardize(train, test).train;
}

// every scalar of the network, in a fixed order
std::vector<double*> slots(MLPParams& p) {
  std::vector<double*> out;
  for (Eigen::Index i = 0; i < p.W1.size(); ++i) out.push_back(p.W1.data() + i);
  for (Eigen::Index i = 0; i < p.b1.size(); ++i) out.push_back(p.b1.data() + i);
  for (Eigen::Index i = 0; i < p.w2.size(); ++i) out.push_back(p.w2.data() + i);
  out.push_back(&p.b2);
  return out;
}

double max_relative_fd_error(const MLPParams& p, const Dataset& ds, const PenaltySpec& spec, double lambda) {
  const MatrixXd X = ds.features();
  MLPParams g = mlp_gradient(p, X, ds.Y, spec, lambda);
  MLPParams probe = p;
  auto ps = slots(probe);
  auto gs = slots(g);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const double keep = *ps[i];
    *ps[i] = keep + h;
    const double up = mlp_loss(probe, X, ds.Y, spec, lambda);
    *ps[i] = keep - h;
    const double down = mlp_loss(probe, X, ds.Y, spec, lambda);
    *ps[i] = keep;
    const double fd = (up - down) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(*gs[i]), 1e-6});
    worst = std::max(worst, std::abs(fd - *gs[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST(MlpInit, ShapeAndDeterminism) {
  const MLPParams a = mlp_init(5, 10, 42, Activation::kRelu, 2);
  EXPECT_EQ(a.W1.rows(), 10);
  EXPECT_EQ(a.W1.cols(), 5);
  EXPECT_EQ(a.us_cols(), 3);
  const MLPParams b = mlp_init(5, 10, 42, Activation::kRelu, 2);
  EXPECT_EQ(a.W1, b.W1);
  EXPECT_EQ(a.w2, b.w2);
  EXPECT_NE(a.W1, mlp_init(5, 10, 43).W1);
  EXPECT_THROW(mlp_init(0, 10, 1), Error);
  EXPECT_THROW(mlp_init(5, 0, 1), Error);
  EXPECT_THROW(mlp_init(5, 10, 1, Activation::kRelu, 6), Error);
}

TEST(MlpForward, Examples) {
  MLPParams p = mlp_init(5, 10, 1);
  p.W1.setZero();
  p.w2.setZero();
  p.b2 = 0.75;
  EXPECT_EQ(mlp_forward(p, VectorXd::Ones(5)), 0.75);
  // relu with every pre-activation negative
  MLPParams q = mlp_init(5, 10, 2);
  q.W1.setZero();
  q.b1.setConstant(-1.0);
  q.b2 = -0.2;
  EXPECT_EQ(mlp_forward(q, VectorXd::Ones(5)), -0.2);
  EXPECT_THROW(mlp_forward(q, VectorXd::Ones(4)), Error);
}

TEST(MlpForward, NaiveLoop) {
  Rng rng(51);
  for (Activation act : {Activation::kRelu, Activation::kTanh}) {
    for (int trial = 0; trial < 20; ++trial) {
      MLPParams p = mlp_init(5, 10, static_cast<std::uint64_t>(trial), act);
      for (Eigen::Index i = 0; i < 10; ++i) p.b1(i) = rng.normal();
      p.b2 = rng.normal();
      VectorXd x(5);
      for (Eigen::Index j = 0; j < 5; ++j) x(j) = rng.normal();
      double out = p.b2;
      for (Eigen::Index i = 0; i < 10; ++i) {
        double z = p.b1(i);
        for (Eigen::Index j = 0; j < 5; ++j) z += p.W1(i, j) * x(j);
        out += p.w2(i) * (act == Activation::kRelu ? std::max(z, 0.0) : std::tanh(z));
      }
      EXPECT_NEAR(mlp_forward(p, x), out, 1e-12);
      MatrixXd X = x.transpose();
      EXPECT_NEAR(mlp_forward_batch(p, X)(0), out, 1e-12);
    }
  }
}

TEST(MlpGradient, MatchesFiniteDifferencesTanh) {
  const Dataset ds = small_data(64, 52);
  const PenaltySpec weighted = PenaltySpec::weighted_l2((VectorXd(3) << 1.0, 1.0, 1000.0).finished());
  Rng rng(52);
  for (int trial = 0; trial < 20; ++trial) {
    MLPParams p = mlp_init(5, 10, 100 + static_cast<std::uint64_t>(trial), Activation::kTanh, 2);
    for (Eigen::Index i = 0; i < 10; ++i) p.b1(i) = 0.3 * rng.normal();
    p.b2 = rng.normal();
    EXPECT_LT(max_relative_fd_error(p, ds, PenaltySpec::none(), 0.0), 1e-4);
    EXPECT_LT(max_relative_fd_error(p, ds, PenaltySpec::l2(), 0.01), 1e-4);
    EXPECT_LT(max_relative_fd_error(p, ds, weighted, 0.001), 1e-4);
  }
}

TEST(MlpPenalty, BlocksFollowColumns) {
  MLPParams p = mlp_init(5, 2, 3, Activation::kTanh, 2);
  p.W1 << 1, 1, 1, -2, 3,
          1, 1, 0, 0, -1;
  EXPECT_DOUBLE_EQ(mlp_penalty(p, PenaltySpec::l1()), 1 + 2 + 3 + 1);
  EXPECT_DOUBLE_EQ(mlp_penalty(p, PenaltySpec::l2()), 1 + 4 + 9 + 1);
  const PenaltySpec w = PenaltySpec::weighted_l2((VectorXd(3) << 1.0, 2.0, 10.0).finished());
  EXPECT_DOUBLE_EQ(mlp_penalty(p, w), 1 + 2 * 4 + 10 * 10);
  EXPECT_DOUBLE_EQ(mlp_penalty(p, PenaltySpec::eye()), 7.0 + std::sqrt(49.0 + 4.0));
  EXPECT_THROW(mlp_penalty(p, PenaltySpec::weighted_l2(VectorXd::Ones(2))), Error);
}

TEST(MlpFit, UnpenalizedRiskDecreases) {
  const Dataset ds = small_data(32, 53);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.max_epochs = 5000;
  cfg.seed = 5;
  cfg.trace_every = 50;
  const auto fit = mlp_fit(ds, PenaltySpec::none(), cfg);
  ASSERT_GE(fit.trace.entries.size(), 2u);
  for (std::size_t i = 1; i < fit.trace.entries.size(); ++i) {
    EXPECT_LE(fit.trace.entries[i].loss, fit.trace.entries[i - 1].loss);
  }
  EXPECT_LT(fit.trace.entries.back().risk, fit.trace.entries.front().risk);
}

TEST(MlpFit, CausalWeightsShrinkShortcutEffect) {
  const Dataset ds = small_data(500, 54);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.max_epochs = 1500;
  cfg.lambda_reg = 0.001;
  cfg.trace_every = 100;
  cfg.seed = 9;
  const PenaltySpec spec = PenaltySpec::weighted_l2((VectorXd(3) << 1.0, 1.0, 1000.0).finished());
  const auto fit = mlp_fit(ds, spec, cfg);
  EXPECT_LT(fit.trace.entries.back().te(0), fit.trace.entries.front().te(0));
  EXPECT_EQ(fit.trace.param_names.size(), 50u);
}

TEST(MlpFit, L1ProxStepZeroesColumns) {
  const Dataset ds = small_data(200, 55);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.max_epochs = 500;
  cfg.lambda_reg = 10.0;
  const auto fit = mlp_fit(ds, PenaltySpec::l1(), cfg);
  EXPECT_EQ(fit.params.W1.rightCols(3).cwiseAbs().maxCoeff(), 0.0);
}

TEST(MlpFit, Deterministic) {
  const Dataset ds = small_data(100, 56);
  TrainConfig cfg;
  cfg.max_epochs = 200;
  cfg.lambda_reg = 0.01;
  cfg.seed = 3;
  const auto a = mlp_fit(ds, PenaltySpec::eye(), cfg);
  const auto b = mlp_fit(ds, PenaltySpec::eye(), cfg);
  EXPECT_EQ(a.trace.to_csv(), b.trace.to_csv());
  EXPECT_EQ(a.params.W1, b.params.W1);
}

TEST(MlpFit, Errors) {
  const Dataset ds = small_data(20, 57);
  TrainConfig cfg;
  cfg.max_epochs = 5;
  EXPECT_THROW(mlp_fit(ds, PenaltySpec::weighted_l2(VectorXd::Ones(4)), cfg), Error);
  cfg.learning_rate = -1.0;
  EXPECT_THROW(mlp_fit(ds, PenaltySpec::none(), cfg), Error);
  EXPECT_THROW(parse_activation("sigmoid"), Error);
}
