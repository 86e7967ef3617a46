#include <gtest/gtest.h>

#include <cmath>

#include "shortcut/eval.hpp"
#include "shortcut/random.hpp"

using namespace shortcut;

namespace {

double naive_auc(const Eigen::VectorXi& labels, const VectorXd& scores) {
  double wins = 0.0, pairs = 0.0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) != 1) continue;
    for (Eigen::Index j = 0; j < labels.size(); ++j) {
      if (labels(j) != 0) continue;
      pairs += 1.0;
      if (scores(i) > scores(j)) wins += 1.0;
      if (scores(i) == scores(j)) wins += 0.5;
    }
  }
  return wins / pairs;
}

double naive_corr(const VectorXd& x, const VectorXd& y) {
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    mx += x(i);
    my += y(i);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    sxy += (x(i) - mx) * (y(i) - my);
    sxx += (x(i) - mx) * (x(i) - mx);
    syy += (y(i) - my) * (y(i) - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

double naive_std(const VectorXd& v) {
  double m = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) m += v(i);
  m /= static_cast<double>(v.size());
  double ss = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) ss += (v(i) - m) * (v(i) - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

VectorXd normals(Rng& rng, Eigen::Index n) {
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

}  // namespace

TEST(Auc, Examples) {
  Eigen::VectorXi labels(4);
  labels << 0, 0, 1, 1;
  EXPECT_DOUBLE_EQ(auc(labels, (VectorXd(4) << 0.1, 0.2, 0.8, 0.9).finished()), 1.0);
  EXPECT_DOUBLE_EQ(auc(labels, VectorXd::Constant(4, 0.3)), 0.5);
  EXPECT_DOUBLE_EQ(auc(labels, (VectorXd(4) << 0.9, 0.8, 0.2, 0.1).finished()), 0.0);
}

TEST(Auc, PairCountingOracle) {
  Rng rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 30;
    Eigen::VectorXi labels(n);
    VectorXd scores(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      labels(i) = i < 2 ? static_cast<int>(i) : (rng.uniform() < 0.4 ? 1 : 0);
      // coarse scores so ties happen
      scores(i) = std::round(rng.normal() * 3.0) / 3.0;
    }
    EXPECT_NEAR(auc(labels, scores), naive_auc(labels, scores), 1e-12);
  }
}

TEST(Auc, InvariantUnderMonotoneTransform) {
  Rng rng(42);
  Eigen::VectorXi labels(40);
  VectorXd scores(40);
  for (Eigen::Index i = 0; i < 40; ++i) {
    labels(i) = static_cast<int>(i % 2);
    scores(i) = rng.normal();
  }
  const VectorXd mapped = scores.unaryExpr([](double x) { return std::exp(2.0 * x) - 7.0; });
  EXPECT_NEAR(auc(labels, scores), auc(labels, mapped), 1e-15);
}

TEST(Auc, Errors) {
  Eigen::VectorXi ones = Eigen::VectorXi::Ones(3);
  try {
    auc(ones, VectorXd::Zero(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSingleClass);
  }
  EXPECT_THROW(auc(ones, VectorXd::Zero(2)), Error);
  Eigen::VectorXi bad(2);
  bad << 0, 2;
  EXPECT_THROW(auc(bad, VectorXd::Zero(2)), Error);
}

TEST(Mse, Examples) {
  const VectorXd y = (VectorXd(3) << 1, 2, 3).finished();
  EXPECT_EQ(mse(y, y), 0.0);
  EXPECT_DOUBLE_EQ(mse(VectorXd::Zero(2), (VectorXd(2) << 1, -1).finished()), 1.0);
  EXPECT_THROW(mse(y, VectorXd::Zero(2)), Error);
  EXPECT_THROW(mse(VectorXd(), VectorXd()), Error);
}

TEST(Mse, NaiveLoop) {
  Rng rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    const VectorXd a = normals(rng, 57), b = normals(rng, 57);
    double acc = 0;
    for (Eigen::Index i = 0; i < a.size(); ++i) acc += (a(i) - b(i)) * (a(i) - b(i));
    EXPECT_NEAR(mse(a, b), acc / 57.0, 1e-12);
  }
}

TEST(Correlation, Examples) {
  Rng rng(44);
  const VectorXd x = normals(rng, 50);
  const auto m = correlation_matrix({{"x", x}, {"neg", -x}, {"again", x}});
  EXPECT_EQ(m.at("x", "x"), 1.0);
  EXPECT_NEAR(m.at("x", "neg"), -1.0, 1e-15);
  EXPECT_NEAR(m.at("x", "again"), 1.0, 1e-15);
  EXPECT_THROW(m.at("x", "nope"), Error);
}

TEST(Correlation, NaiveLoopAndRange) {
  Rng rng(45);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<NamedColumn> cols;
    const VectorXd base = normals(rng, 40);
    for (int k = 0; k < 4; ++k) cols.push_back({"v" + std::to_string(k), base * rng.uniform() + normals(rng, 40)});
    const auto m = correlation_matrix(cols);
    for (std::size_t i = 0; i < cols.size(); ++i) {
      for (std::size_t j = 0; j < cols.size(); ++j) {
        const double r = m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        EXPECT_NEAR(r, naive_corr(cols[i].second, cols[j].second), 1e-12);
        EXPECT_GE(r, -1.0);
        EXPECT_LE(r, 1.0);
      }
    }
  }
}

TEST(Correlation, AffineInvariance) {
  Rng rng(46);
  const VectorXd x = normals(rng, 60), y = normals(rng, 60) + 0.5 * x;
  const VectorXd z = (3.5 * x).array() + 11.0;
  EXPECT_NEAR(pearson(x, y), pearson(z, y), 1e-12);
}

TEST(Correlation, ConstantColumnIsUndefined) {
  const auto m = correlation_matrix({{"a", VectorXd::LinSpaced(5, 0, 1)}, {"flat", VectorXd::Ones(5)}});
  EXPECT_TRUE(std::isnan(m.at("a", "flat")));
  EXPECT_TRUE(std::isnan(m.at("flat", "flat")));
  EXPECT_NE(m.to_csv().find("undefined"), std::string::npos);
  EXPECT_THROW(correlation_matrix({{"a", VectorXd::Ones(3)}, {"b", VectorXd::Ones(4)}}), Error);
}

TEST(TreatmentEffect, ZeroCoefficientGivesZero) {
  ModelParams p = ModelParams::zeros(2, 2, 1);
  p.beta_c << 1.0, 2.0;
  p.beta_u << -1.0, 0.5;
  EXPECT_EQ(estimate_treatment_effect(Predictor::linear(p), VectorXd::Zero(5), 4, 100, 1), 0.0);
}

TEST(TreatmentEffect, LinearIsAbsCoefficientTimesDrawStd) {
  Rng rng(47);
  for (int trial = 0; trial < 100; ++trial) {
    ModelParams p = ModelParams::zeros(2, 2, 1);
    p.beta_c << rng.normal(), rng.normal();
    p.beta_u << rng.normal(), rng.normal();
    p.beta_s << rng.normal();
    const auto k = static_cast<Eigen::Index>(trial % 5);
    const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(trial);
    const VectorXd base = normals(rng, 5);
    const VectorXd draws = draw_standard_normals(100, seed);
    VectorXd w(5);
    w << p.beta_c, p.beta_u, p.beta_s;
    const double te = estimate_treatment_effect(Predictor::linear(p), base, k, 100, seed);
    EXPECT_NEAR(te, std::abs(w(k)) * naive_std(draws), 1e-12);
  }
}

TEST(TreatmentEffect, TwoDraws) {
  const VectorXd draws = draw_standard_normals(2, 9);
  const Predictor pred(1, [](const VectorXd& x) { return -3.0 * x(0) + 1.0; });
  EXPECT_NEAR(treatment_effect_from_draws(pred, VectorXd::Zero(1), 0, draws),
              3.0 * std::abs(draws(0) - draws(1)) / std::sqrt(2.0), 1e-12);
}

TEST(TreatmentEffect, BaseValueAtFeatureIgnored) {
  const Predictor pred(3, [](const VectorXd& x) { return std::sin(x(0)) * x(1) + x(2) * x(2); });
  VectorXd a(3), b(3);
  a << 0.3, -1.0, 2.0;
  b << 0.3, -1.0, -50.0;
  EXPECT_EQ(estimate_treatment_effect(pred, a, 2, 50, 4), estimate_treatment_effect(pred, b, 2, 50, 4));
}

TEST(TreatmentEffect, Errors) {
  const Predictor pred(2, [](const VectorXd& x) { return x.sum(); });
  EXPECT_THROW(estimate_treatment_effect(pred, VectorXd::Zero(2), 2, 10, 1), Error);
  EXPECT_THROW(estimate_treatment_effect(pred, VectorXd::Zero(2), 0, 1, 1), Error);
  EXPECT_THROW(pred(VectorXd::Zero(3)), Error);
}

TEST(WeightSummary, Examples) {
  const auto zero = weight_summary({ModelParams::zeros(2, 2, 1)});
  EXPECT_EQ(zero.c.mean, 0.0);
  EXPECT_EQ(zero.s.std, 0.0);
  EXPECT_EQ(zero.u.max, 0.0);
  ModelParams a = ModelParams::zeros(1, 1, 1), b = ModelParams::zeros(1, 1, 1);
  a.beta_s << 1.0;
  b.beta_s << 3.0;
  const auto two = weight_summary({a, b}, 4);
  EXPECT_DOUBLE_EQ(two.s.mean, 2.0);
  EXPECT_DOUBLE_EQ(two.s.std, std::sqrt(2.0));
  EXPECT_EQ(two.s.count, 2u);
  std::size_t total = 0;
  for (auto h : two.s.histogram) total += h;
  EXPECT_EQ(total, 2u);
  EXPECT_THROW(weight_summary({}), Error);
  EXPECT_THROW(weight_summary({a, ModelParams::zeros(2, 1, 1)}), Error);
}
