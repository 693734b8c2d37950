#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "addinfer/errors.hpp"

namespace addinfer {

//! Orthogonal projector held through an orthonormal basis Q, P = Q Q^T.
struct Projector {
  Eigen::MatrixXd Q;

  Eigen::Index rank() const { return Q.cols(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    const Eigen::VectorXd t = Q.transpose() * v;
    return Q * t;
  }
  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(Q.rows(), Q.rows());
    P.selfadjointView<Eigen::Lower>().rankUpdate(Q);
    return P.selfadjointView<Eigen::Lower>();
  }
};

//! Projector onto the numerical column space of A (singular values above rank_tol * max).
inline Projector make_projector(const Eigen::MatrixXd& A, double rank_tol = 1e-10) {
  if (A.cols() == 0) return {Eigen::MatrixXd(A.rows(), 0)};
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  Eigen::Index r = 0;
  if (s.size() > 0 && s[0] > 0.0)
    while (r < s.size() && s[r] > rank_tol * s[0]) ++r;
  return {svd.matrixU().leftCols(r)};
}

inline Eigen::MatrixXd projection(const Eigen::MatrixXd& A, double rank_tol = 1e-10) {
  return make_projector(A, rank_tol).dense();
}

//! Identifies a column of the polynomial design; covariate -1 is the intercept.
struct DesignColumn {
  int covariate = -1;
  int power = 0;
};

/// Polynomial design [1, x_1, ..., x_d, x_1^2, ...] grouped by power, with
/// `degree[j]` powers of covariate j (zero means the covariate has no column).
struct DesignSet {
  Eigen::MatrixXd X_full;
  std::vector<DesignColumn> columns;
  std::vector<Eigen::MatrixXd> X_j;
  Eigen::MatrixXd X_minus_d;
  std::optional<int> tested;
  double rank_tol = 1e-10;
  Eigen::Index rank = 0;

  bool concurvity() const { return rank < X_full.cols(); }
};

inline DesignSet build_design(const Eigen::MatrixXd& x, const std::vector<int>& degree,
                              std::optional<int> tested = std::nullopt, double rank_tol = 1e-10) {
  const Eigen::Index n = x.rows();
  const auto d = static_cast<int>(x.cols());
  if (static_cast<int>(degree.size()) != d) throw Error(ErrorCode::invalid_argument, "one degree per covariate required");
  if (tested && (*tested < 0 || *tested >= d)) throw Error(ErrorCode::invalid_argument, "tested covariate out of range");
  int maxdeg = 0;
  int total = 1;
  for (int j = 0; j < d; ++j) {
    if (degree[static_cast<std::size_t>(j)] < 0 || degree[static_cast<std::size_t>(j)] > 3)
      throw Error(ErrorCode::invalid_argument, "degree must lie in 0..3");
    maxdeg = std::max(maxdeg, degree[static_cast<std::size_t>(j)]);
    total += degree[static_cast<std::size_t>(j)];
    if (degree[static_cast<std::size_t>(j)] > 0 && x.col(j).maxCoeff() == x.col(j).minCoeff())
      throw Error(ErrorCode::degenerate_design, "covariate " + std::to_string(j + 1) + " is constant");
  }
  if (n <= total) throw Error(ErrorCode::invalid_argument, "need more observations than design columns");

  DesignSet ds;
  ds.tested = tested;
  ds.rank_tol = rank_tol;
  ds.X_full.resize(n, total);
  ds.X_full.col(0).setOnes();
  ds.columns.push_back({-1, 0});
  Eigen::Index c = 1;
  for (int k = 1; k <= maxdeg; ++k)
    for (int j = 0; j < d; ++j)
      if (degree[static_cast<std::size_t>(j)] >= k) {
        ds.X_full.col(c++) = x.col(j).array().pow(k);
        ds.columns.push_back({j, k});
      }
  for (int j = 0; j < d; ++j) {
    Eigen::MatrixXd B(n, degree[static_cast<std::size_t>(j)] + 1);
    B.col(0).setOnes();
    for (int k = 1; k <= degree[static_cast<std::size_t>(j)]; ++k) B.col(k) = x.col(j).array().pow(k);
    ds.X_j.push_back(std::move(B));
  }
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < total; ++i)
    if (!tested || ds.columns[static_cast<std::size_t>(i)].covariate != *tested) keep.push_back(i);
  ds.X_minus_d.resize(n, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) ds.X_minus_d.col(static_cast<Eigen::Index>(i)) = ds.X_full.col(keep[i]);
  ds.rank = make_projector(ds.X_full, rank_tol).rank();
  return ds;
}

//! G, the per-covariate G_j, G_[-d] and the projection onto G_[-d]^perp X_d without its intercept.
struct ProjectionSet {
  Eigen::MatrixXd G;
  std::vector<Eigen::MatrixXd> G_j;
  Eigen::MatrixXd G_minus_d;
  Eigen::MatrixXd P_resid_d;
};

inline ProjectionSet build_projections(const DesignSet& ds) {
  ProjectionSet ps;
  const Eigen::Index n = ds.X_full.rows();
  ps.G = projection(ds.X_full, ds.rank_tol);
  for (const auto& B : ds.X_j) ps.G_j.push_back(projection(B, ds.rank_tol));
  ps.G_minus_d = projection(ds.X_minus_d, ds.rank_tol);
  if (ds.tested) {
    const Eigen::MatrixXd& Xd = ds.X_j[static_cast<std::size_t>(*ds.tested)];
    const Eigen::MatrixXd R = (Eigen::MatrixXd::Identity(n, n) - ps.G_minus_d) * Xd.rightCols(Xd.cols() - 1);
    ps.P_resid_d = projection(R, ds.rank_tol);
  } else {
    ps.P_resid_d = Eigen::MatrixXd::Zero(n, n);
  }
  const double err = (ps.G - ps.G_minus_d - ps.P_resid_d).cwiseAbs().maxCoeff();
  if (err > 1e-9) throw Error(ErrorCode::degenerate_design, "projection decomposition failed by " + std::to_string(err));
  return ps;
}

}  // namespace addinfer
