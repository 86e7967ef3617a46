#include <gtest/gtest.h>

#include <cmath>

#include "shortcut/random.hpp"
#include "shortcut/regularizers.hpp"

using namespace shortcut;

namespace {

VectorXd vec(std::initializer_list<double> xs) {
  VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

VectorXd random_vec(Rng& rng, Eigen::Index n, double scale = 2.0) {
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.uniform(-scale, scale);
  return v;
}

std::vector<PenaltySpec> all_specs() {
  return {PenaltySpec::none(), PenaltySpec::l1(), PenaltySpec::l2(), PenaltySpec::eye(),
          PenaltySpec::weighted_l2(vec({1.0, 1.0, 1000.0}))};
}

}  // namespace

TEST(Penalty, NormArithmetic) {
  const VectorXd c = vec({0.3, -0.7});
  const VectorXd us = vec({1.0, 2.0, -3.0});
  EXPECT_DOUBLE_EQ(penalty_value(c, us, PenaltySpec::none()), 0.0);
  EXPECT_DOUBLE_EQ(penalty_value(c, us, PenaltySpec::l1()), 6.0);
  EXPECT_DOUBLE_EQ(penalty_value(c, us, PenaltySpec::l2()), 14.0);
  EXPECT_DOUBLE_EQ(penalty_value(c, us, PenaltySpec::weighted_l2(vec({1.0, 1.0, 1000.0}))), 9005.0);
  EXPECT_DOUBLE_EQ(penalty_value(c, us, PenaltySpec::eye()), 6.0 + std::sqrt(36.0 + 0.09 + 0.49));
}

TEST(Penalty, EyeWithZeroUsBlockIsConceptNorm) {
  const VectorXd c = vec({3.0, 4.0});
  EXPECT_DOUBLE_EQ(penalty_value(c, VectorXd::Zero(3), PenaltySpec::eye()), 5.0);
}

TEST(Penalty, ModelParamsOverload) {
  ModelParams p = ModelParams::zeros(2, 2, 1);
  p.beta_u = vec({1.0, 2.0});
  p.beta_s = vec({-3.0});
  EXPECT_DOUBLE_EQ(penalty_value(p, PenaltySpec::l1()), 6.0);
}

TEST(Penalty, WeightedL2Validation) {
  const VectorXd c = VectorXd::Zero(1);
  try {
    penalty_value(c, VectorXd::Ones(3), PenaltySpec::weighted_l2(vec({1.0, 1.0})));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
  EXPECT_THROW(penalty_value(c, VectorXd::Ones(2), PenaltySpec::weighted_l2(vec({1.0, 0.0}))), Error);
  EXPECT_THROW(penalty_value(c, VectorXd::Ones(2), PenaltySpec::weighted_l2(vec({1.0, -2.0}))), Error);
}

TEST(Penalty, KindNamesRoundTrip) {
  for (const auto& s : all_specs()) EXPECT_EQ(parse_penalty_kind(to_string(s.kind)), s.kind);
  EXPECT_THROW(parse_penalty_kind("Ridge"), Error);
}

TEST(Subgradient, Examples) {
  const VectorXd c = VectorXd::Zero(1);
  EXPECT_EQ(penalty_subgradient(c, vec({1.0, -2.0}), PenaltySpec::l2()).us, vec({2.0, -4.0}));
  EXPECT_EQ(penalty_subgradient(c, vec({0.0, 3.0}), PenaltySpec::l1()).us, vec({0.0, 1.0}));
  const auto w = penalty_subgradient(c, vec({1.0, -1.0, 2.0}), PenaltySpec::weighted_l2(vec({1.0, 1.0, 1000.0})));
  EXPECT_EQ(w.us, vec({2.0, -2.0, 4000.0}));
  EXPECT_EQ(w.c, VectorXd::Zero(1));
}

TEST(Subgradient, EyeMatchesFiniteDifference) {
  Rng rng(11);
  const double h = 1e-6;
  for (int trial = 0; trial < 50; ++trial) {
    VectorXd c = random_vec(rng, 2);
    VectorXd us = random_vec(rng, 3);
    // stay away from the kinks of |x|
    for (Eigen::Index i = 0; i < us.size(); ++i) {
      if (std::abs(us(i)) < 0.05) us(i) = 0.5;
    }
    const auto g = penalty_subgradient(c, us, PenaltySpec::eye());
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      VectorXd p = c, m = c;
      p(i) += h;
      m(i) -= h;
      const double fd = (penalty_value(p, us, PenaltySpec::eye()) - penalty_value(m, us, PenaltySpec::eye())) / (2 * h);
      EXPECT_NEAR(g.c(i), fd, 1e-5);
    }
    for (Eigen::Index i = 0; i < us.size(); ++i) {
      VectorXd p = us, m = us;
      p(i) += h;
      m(i) -= h;
      const double fd = (penalty_value(c, p, PenaltySpec::eye()) - penalty_value(c, m, PenaltySpec::eye())) / (2 * h);
      EXPECT_NEAR(g.us(i), fd, 1e-5);
    }
  }
}

TEST(PenaltyProperty, AbsoluteHomogeneity) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const VectorXd c = random_vec(rng, 2);
    const VectorXd us = random_vec(rng, 3);
    const double a = rng.uniform(-5.0, 5.0);
    const double tol = 1e-10 * (1.0 + a * a);
    EXPECT_NEAR(penalty_value(a * c, a * us, PenaltySpec::l1()), std::abs(a) * penalty_value(c, us, PenaltySpec::l1()), tol);
    EXPECT_NEAR(penalty_value(a * c, a * us, PenaltySpec::l2()), a * a * penalty_value(c, us, PenaltySpec::l2()), tol);
    EXPECT_NEAR(penalty_value(a * c, a * us, PenaltySpec::eye()), std::abs(a) * penalty_value(c, us, PenaltySpec::eye()), tol);
  }
}

TEST(PenaltyProperty, Convexity) {
  Rng rng(4);
  for (const auto& spec : all_specs()) {
    for (int trial = 0; trial < 200; ++trial) {
      const VectorXd c1 = random_vec(rng, 2), c2 = random_vec(rng, 2);
      const VectorXd u1 = random_vec(rng, 3), u2 = random_vec(rng, 3);
      const double t = rng.uniform();
      const double lhs = penalty_value(t * c1 + (1 - t) * c2, t * u1 + (1 - t) * u2, spec);
      const double rhs = t * penalty_value(c1, u1, spec) + (1 - t) * penalty_value(c2, u2, spec);
      EXPECT_LE(lhs, rhs + 1e-12 * std::max(1.0, std::abs(rhs))) << to_string(spec.kind);
    }
  }
}

TEST(PenaltyProperty, SubgradientInequality) {
  Rng rng(5);
  for (const auto& spec : all_specs()) {
    for (int trial = 0; trial < 200; ++trial) {
      VectorXd c1 = random_vec(rng, 2), c2 = random_vec(rng, 2);
      VectorXd u1 = random_vec(rng, 3), u2 = random_vec(rng, 3);
      if (trial % 4 == 0) u1(trial % 3) = 0.0;  // include the kinks
      if (trial % 10 == 0) {
        u1.setZero();
        c1.setZero();
      }
      const auto g = penalty_subgradient(c1, u1, spec);
      const double lin = penalty_value(c1, u1, spec) + g.c.dot(c2 - c1) + g.us.dot(u2 - u1);
      EXPECT_GE(penalty_value(c2, u2, spec), lin - 1e-9) << to_string(spec.kind);
    }
  }
}

TEST(CausalWeights, Examples) {
  EXPECT_TRUE(causal_weights(vec({1.0, 1.0, 0.001}), 1e-6).weights.isApprox(vec({1.0, 1.0, 1000.0}), 1e-12));
  EXPECT_TRUE(causal_weights(vec({0.0, 1.0}), 1e-3).weights.isApprox(vec({1000.0, 1.0}), 1e-12));
  const auto w = causal_weights(vec({-2.0, 4.0}), 1e-6);
  EXPECT_EQ(w.kind, PenaltyKind::kWeightedL2);
  EXPECT_EQ(w.weights, vec({0.5, 0.25}));
}

TEST(CausalWeights, NonPositiveFloor) {
  for (double floor : {0.0, -1.0}) {
    try {
      causal_weights(vec({1.0}), floor);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kNonPositiveFloor);
    }
  }
}
