#include <gtest/gtest.h>

#include "addinfer/design.hpp"
#include "addinfer/smoother.hpp"
#include "oracles.hpp"

using namespace addinfer;

namespace {

Eigen::MatrixXd covariates(int n, int d, unsigned seed) {
  Eigen::MatrixXd x(n, d);
  for (int j = 0; j < d; ++j) x.col(j) = oracle::uniform_sample(n, seed + 17u * j);
  return x;
}

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

void expect_projector(const Eigen::MatrixXd& P) {
  EXPECT_LT(max_abs(P * P - P), 1e-9);
  EXPECT_LT(max_abs(P - P.transpose()), 1e-9);
}

}  // namespace

TEST(Design, SingleCovariateExample) {
  Eigen::MatrixXd x(3, 1);
  x << 0.0, 0.5, 1.0;
  Eigen::MatrixXd expect(3, 2);
  expect << 1, 0, 1, 0.5, 1, 1;
  Eigen::MatrixXd xx(4, 1);
  xx << 0.0, 0.5, 1.0, 0.25;
  const auto ds = build_design(xx, {1});
  EXPECT_EQ(ds.X_full.topRows(3), expect);
  EXPECT_THROW(build_design(x, {2}), Error);
}

TEST(Design, ColumnsGroupedByPower) {
  const Eigen::MatrixXd x = covariates(20, 2, 3);
  const auto ds = build_design(x, {1, 2});
  ASSERT_EQ(ds.X_full.cols(), 4);
  EXPECT_EQ(ds.X_full.col(1), x.col(0));
  EXPECT_EQ(ds.X_full.col(2), x.col(1));
  EXPECT_LT((ds.X_full.col(3) - x.col(1).array().square().matrix()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_DOUBLE_EQ(ds.X_full.col(0).dot(ds.X_full.col(0)), 20.0);
  EXPECT_FALSE(ds.concurvity());
}

TEST(Design, MinusZeroAndMinusD) {
  const Eigen::MatrixXd x = covariates(30, 3, 5);
  const auto ds = build_design(x, {1, 2, 1}, 1);
  EXPECT_EQ(ds.X_minus_d.cols(), ds.X_full.cols() - 2);
  const auto proj = build_projections(ds);
  const Eigen::MatrixXd Gp = Eigen::MatrixXd::Identity(30, 30) - proj.G_minus_d;
  EXPECT_LT(max_abs(Gp * ds.X_minus_d), 1e-9);
  const Eigen::MatrixXd X0 = ds.X_full.rightCols(ds.X_full.cols() - 1);
  const Eigen::MatrixXd P1 = Eigen::MatrixXd::Constant(30, 30, 1.0 / 30);
  const Eigen::MatrixXd rest = oracle::normal_projector((Eigen::MatrixXd::Identity(30, 30) - P1) * X0);
  EXPECT_LT(max_abs(proj.G - P1 - rest), 1e-9);
}

TEST(Design, ConstantCovariateRejected) {
  Eigen::MatrixXd x = covariates(10, 2, 1);
  x.col(1).setConstant(0.3);
  try {
    build_design(x, {1, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::degenerate_design);
  }
}

TEST(Projection, InterceptIsMean) {
  const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(12, 1);
  EXPECT_LT(max_abs(projection(one) - Eigen::MatrixXd::Constant(12, 12, 1.0 / 12)), 1e-14);
}

TEST(Projection, DuplicateColumnsSameSpan) {
  const Eigen::MatrixXd x = covariates(25, 2, 9);
  Eigen::MatrixXd A(25, 3);
  A << x.col(0), x.col(1), x.col(1);
  EXPECT_LT(max_abs(projection(A) - projection(A.leftCols(2))), 1e-12);
  EXPECT_EQ(make_projector(A).rank(), 2);
}

TEST(Projection, MatchesNormalEquations) {
  Eigen::MatrixXd A(50, 5);
  for (int k = 0; k < 5; ++k) A.col(k) = oracle::normal_sample(50, 40 + k);
  const Eigen::MatrixXd P = projection(A);
  EXPECT_LT(max_abs(P * A - A), 1e-10);
  EXPECT_LT(max_abs(P - oracle::normal_projector(A)), 1e-10);
  expect_projector(P);
}

TEST(Projection, SetInvariants) {
  const int n = 60;
  const Eigen::MatrixXd x = covariates(n, 3, 11);
  const std::vector<int> deg = {1, 3, 2};
  const auto ds = build_design(x, deg, 2);
  const auto ps = build_projections(ds);
  expect_projector(ps.G);
  expect_projector(ps.G_minus_d);
  expect_projector(ps.P_resid_d);
  const Eigen::MatrixXd Gperp = Eigen::MatrixXd::Identity(n, n) - ps.G;
  for (std::size_t j = 0; j < 3; ++j) {
    expect_projector(ps.G_j[j]);
    EXPECT_LT(max_abs(ps.G_j[j] * Gperp), 1e-9);
    for (int k = 0; k <= deg[j]; ++k) {
      const Eigen::VectorXd xk = x.col(static_cast<Eigen::Index>(j)).array().pow(k);
      EXPECT_LT((ps.G * xk - xk).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
  EXPECT_LT(max_abs(ps.G - ps.G_minus_d - ps.P_resid_d), 1e-9);
}

TEST(Projection, SmootherFixesPolynomialSpace) {
  const Eigen::MatrixXd x = covariates(120, 1, 21);
  for (int p = 0; p <= 2; ++p) {
    const auto ds = build_design(x, {p});
    const Eigen::MatrixXd Gj = projection(ds.X_j[0]);
    const LocalSmoother H(x.col(0), {p, 0.25, {}, 401, 1e-8});
    EXPECT_LT(max_abs(H.dense() * Gj - Gj), 1e-7) << "p=" << p;
  }
}
