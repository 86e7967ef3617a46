#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "shortcut/dataset.hpp"
#include "shortcut/eval.hpp"

using namespace shortcut;

namespace {

DatasetSpec paper_spec(ShortcutKind kind, std::vector<double> coeffs, std::size_t n = 2000) {
  DatasetSpec s;
  s.n_train = n;
  s.n_test = n;
  s.beta_c = (VectorXd(2) << 4.0, -0.5).finished();
  s.beta_u = (VectorXd(2) << 1.0, 2.0).finished();
  s.shortcut_kind = kind;
  s.shortcut_coeffs = std::move(coeffs);
  s.seed = 7;
  return s;
}

// two-pass population moments, written out by hand
std::pair<double, double> two_pass(const VectorXd& v) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) sum += v(i);
  const double mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) ss += (v(i) - mean) * (v(i) - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

}  // namespace

TEST(Dataset, ConceptCorrelatedShortcutIsExactCombination) {
  auto [train, test] = generate_synthetic(paper_spec(ShortcutKind::kConceptCorrelated, {1.5, -0.5}));
  const VectorXd expect = 1.5 * train.C.col(0) - 0.5 * train.C.col(1);
  EXPECT_EQ(train.S.col(0), expect);
  // Y is noiseless
  const VectorXd y = 4.0 * train.C.col(0) - 0.5 * train.C.col(1) + train.U.col(0) + 2.0 * train.U.col(1);
  EXPECT_LT((train.Y - y).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Dataset, TestShortcutIsFreshNoise) {
  auto [train, test] = generate_synthetic(paper_spec(ShortcutKind::kConceptCorrelated, {1.5, -0.5}));
  const double n = static_cast<double>(test.n());
  EXPECT_LT(std::abs(pearson(test.S.col(0), test.Y)), 4.0 / std::sqrt(n));
  EXPECT_EQ(test.role, Role::kTest);
}

TEST(Dataset, IndependentShortcutUncorrelated) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto spec = paper_spec(ShortcutKind::kIndependent, {}, 5000);
    spec.seed = seed;
    auto [train, test] = generate_synthetic(spec);
    EXPECT_LT(std::abs(pearson(train.S.col(0), train.Y)), 4.0 / std::sqrt(5000.0));
  }
}

TEST(Dataset, OutputCorrelatedMatchesSampleOracle) {
  auto spec = paper_spec(ShortcutKind::kOutputCorrelated, {1.0}, 10000);
  auto [train, test] = generate_synthetic(spec);
  const auto [my, sy] = two_pass(train.Y);
  const double target = sy / std::sqrt(sy * sy + 1.0);
  EXPECT_NEAR(pearson(train.S.col(0), train.Y), target, 0.01);
  (void)my;
}

TEST(Dataset, UnknownCorrelatedUsesBothBlocks) {
  auto [train, test] = generate_synthetic(paper_spec(ShortcutKind::kUnknownCorrelated, {0.0, -0.5, 1.0, 2.0}));
  const VectorXd expect = -0.5 * train.C.col(1) + train.U.col(0) + 2.0 * train.U.col(1);
  EXPECT_LT((train.S.col(0) - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Dataset, SameSeedSameData) {
  auto spec = paper_spec(ShortcutKind::kOutputCorrelated, {1.0}, 100);
  auto a = generate_synthetic(spec);
  auto b = generate_synthetic(spec);
  EXPECT_EQ(a.first.features(), b.first.features());
  EXPECT_EQ(a.second.Y, b.second.Y);
  spec.seed = 8;
  auto c = generate_synthetic(spec);
  EXPECT_NE(a.first.Y, c.first.Y);
}

TEST(Dataset, TrainSplitIndependentOfTestSize) {
  auto spec = paper_spec(ShortcutKind::kIndependent, {}, 50);
  auto a = generate_synthetic(spec);
  spec.n_test = 7;
  auto b = generate_synthetic(spec);
  EXPECT_EQ(a.first.features(), b.first.features());
}

TEST(Dataset, SpecValidation) {
  auto spec = paper_spec(ShortcutKind::kConceptCorrelated, {1.5});
  EXPECT_THROW(spec.validate(), Error);
  spec = paper_spec(ShortcutKind::kIndependent, {});
  spec.n_train = 0;
  EXPECT_THROW(spec.validate(), Error);
  spec = paper_spec(ShortcutKind::kIndependent, {});
  spec.beta_c = VectorXd::Ones(3);
  EXPECT_THROW(spec.validate(), Error);
  spec = paper_spec(ShortcutKind::kOutputCorrelated, {-1.0});
  EXPECT_THROW(spec.validate(), Error);
  try {
    paper_spec(ShortcutKind::kUnknownCorrelated, {1.0}).validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidSpec);
  }
}

TEST(Standardize, HandExample) {
  Dataset train;
  train.C = (MatrixXd(3, 1) << 1, 2, 3).finished();
  train.U = (MatrixXd(3, 1) << 0, 1, 5).finished();
  train.S = (MatrixXd(3, 1) << 2, 2.5, 4).finished();
  train.Y = (VectorXd(3) << 1, 0, -1).finished();
  auto out = standardize(train, train);
  const double r = std::sqrt(1.5);
  EXPECT_NEAR(out.train.C(0, 0), -r, 1e-12);
  EXPECT_NEAR(out.train.C(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(out.train.C(2, 0), r, 1e-12);
}

TEST(Standardize, IdempotentOnStandardizedData) {
  auto [train, test] = generate_synthetic(paper_spec(ShortcutKind::kOutputCorrelated, {1.0}, 500));
  auto once = standardize(train, test);
  auto twice = standardize(once.train, once.test);
  EXPECT_LT((once.train.features() - twice.train.features()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((once.train.Y - twice.train.Y).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Standardize, TestUsesTrainMoments) {
  auto [train, test] = generate_synthetic(paper_spec(ShortcutKind::kOutputCorrelated, {1.0}, 300));
  auto out = standardize(train, test);
  for (Eigen::Index j = 0; j < train.C.cols(); ++j) {
    const auto [m, s] = two_pass(train.C.col(j));
    for (Eigen::Index i = 0; i < test.n(); ++i) {
      EXPECT_NEAR(out.test.C(i, j), (test.C(i, j) - m) / s, 1e-12);
    }
  }
  const auto [my, sy] = two_pass(train.Y);
  EXPECT_NEAR(out.stats.y_mean, my, 1e-12);
  EXPECT_NEAR(out.stats.y_std, sy, 1e-12);
  EXPECT_GT(std::abs(out.test.S.col(0).mean()), 1e-6);
}

TEST(Standardize, ConstantColumnRejected) {
  auto [train, test] = generate_synthetic(paper_spec(ShortcutKind::kIndependent, {}, 20));
  train.U.col(1).setConstant(3.0);
  try {
    standardize(train, test);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateColumn);
  }
}

TEST(DatasetIo, RoundTrip) {
  auto [train, test] = generate_synthetic(paper_spec(ShortcutKind::kUnknownCorrelated, {0.0, -0.5, 1.0, 2.0}, 64));
  const auto path = std::filesystem::temp_directory_path() / "shortcut_roundtrip.csv";
  write_dataset(train, path.string());
  const Dataset back = read_dataset(path.string());
  EXPECT_EQ(back.C, train.C);
  EXPECT_EQ(back.U, train.U);
  EXPECT_EQ(back.S, train.S);
  EXPECT_EQ(back.Y, train.Y);
  std::filesystem::remove(path);
}

TEST(DatasetIo, HandWrittenHeader) {
  std::istringstream in("c0,c1,u0,u1,s0,y\n1,2,3,4,5,6\n-1,-2,-3,-4,-5,-6\n");
  const Dataset ds = parse_dataset(in);
  EXPECT_EQ(ds.n(), 2);
  EXPECT_EQ(ds.c(), 2);
  EXPECT_EQ(ds.u(), 2);
  EXPECT_EQ(ds.s(), 1);
  EXPECT_EQ(ds.S(1, 0), -5.0);
  EXPECT_EQ(ds.Y(0), 6.0);
}

TEST(DatasetIo, RaggedRowNamesLine) {
  std::istringstream in("c0,u0,s0,y\n1,2,3,4\n1,2,3\n");
  try {
    parse_dataset(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, BadCellAndMissingFile) {
  std::istringstream in("c0,u0,s0,y\n1,x,3,4\n");
  EXPECT_THROW(parse_dataset(in), Error);
  try {
    read_dataset("/nonexistent/dir/file.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIoError);
  }
}
