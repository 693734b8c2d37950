#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "addinfer/errors.hpp"
#include "addinfer/kernel.hpp"

namespace addinfer {

struct SmootherConfig {
  int p = 1;
  double h = 0.2;
  KernelSpec kernel{};
  int grid_size = 401;
  double ridge_tol = 1e-8;

  void validate() const {
    if (p < 0 || p > 3) throw Error(ErrorCode::invalid_argument, "polynomial order must lie in 0..3");
    if (!(h > 0.0 && h <= 1.0))
      throw Error(ErrorCode::invalid_bandwidth, "bandwidth " + std::to_string(h) + " outside (0, 1]");
    if (grid_size < 51 || grid_size % 2 == 0)
      throw Error(ErrorCode::invalid_argument, "grid size must be odd and at least 51");
    if (!(ridge_tol >= 0.0)) throw Error(ErrorCode::invalid_argument, "ridge tolerance must be nonnegative");
  }
};

namespace detail {

// Weighted local polynomial fit in the scaled basis ((x - z)/h)^r.
inline Eigen::VectorXd local_fit_scaled(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                        const Eigen::VectorXd& w, double z, int p, double h) {
  const Eigen::Index k = p + 1;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
  Eigen::Index support = 0;
  Eigen::VectorXd row(k);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(w[i] > 0.0)) continue;
    ++support;
    const double t = (x[i] - z) / h;
    row[0] = 1.0;
    for (Eigen::Index r = 1; r < k; ++r) row[r] = row[r - 1] * t;
    A.noalias() += w[i] * row * row.transpose();
    b.noalias() += w[i] * y[i] * row;
  }
  if (support < k)
    throw Error(ErrorCode::insufficient_local_data,
                std::to_string(support) + " weighted points at z=" + std::to_string(z));
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-13)
    throw Error(ErrorCode::insufficient_local_data, "rank-deficient local design at z=" + std::to_string(z));
  return ldlt.solve(b);
}

inline Eigen::VectorXd unscale_coefficients(Eigen::VectorXd beta, double h) {
  double f = 1.0;
  for (Eigen::Index r = 1; r < beta.size(); ++r) {
    f *= h;
    beta[r] /= f;
  }
  return beta;
}

}  // namespace detail

//! Local polynomial fit at z with weights K_h(x_i - z); entry r estimates m^(r)(z)/r!.
inline Eigen::VectorXd local_poly_fit(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double z, int p,
                                      double h, const KernelSpec& kernel = {}) {
  if (!(h > 0.0)) throw Error(ErrorCode::invalid_bandwidth, "bandwidth must be positive");
  Eigen::VectorXd w(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) w[i] = scaled_kernel(kernel, h, x[i] - z);
  return detail::unscale_coefficients(detail::local_fit_scaled(x, y, w, z, p, h), h);
}

//! Same with caller-supplied weights.
inline Eigen::VectorXd local_poly_fit_weighted(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                               const Eigen::VectorXd& w, double z, int p, double h) {
  return detail::unscale_coefficients(detail::local_fit_scaled(x, y, w, z, p, h), h);
}

/// Integrated local polynomial smoother for one covariate in [0, 1].
///
/// The z-integral uses `grid_size` midpoint nodes (see weight()). Observation
/// weights are normalized with the same rule, so every row of the kernel weights sums
/// to one over the grid and polynomials up to order p pass through exactly.
/// The smoother is held in factored form H = C C^T with one (p+1)-column block
/// of C per grid node, which gives products and traces without forming H.
class LocalSmoother {
 public:
  LocalSmoother(Eigen::VectorXd x, SmootherConfig config) : x_(std::move(x)), cfg_(config) {
    cfg_.validate();
    build();
  }

  const SmootherConfig& config() const { return cfg_; }
  const Eigen::VectorXd& x() const { return x_; }
  Eigen::Index n() const { return x_.size(); }
  const Eigen::MatrixXd& factor() const { return c_; }
  int ridged_nodes() const { return ridged_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    const Eigen::VectorXd t = c_.transpose() * v;
    return c_ * t;
  }

  double trace() const { return c_.squaredNorm(); }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n(), n());
    h.selfadjointView<Eigen::Lower>().rankUpdate(c_);
    return h.selfadjointView<Eigen::Lower>();
  }

  double node(int q) const { return (q + 0.5) / cfg_.grid_size; }

  /// Midpoint weight 1/M with Gregory-type corrections on the five outermost
  /// nodes at each end. These cancel the endpoint terms of the Euler-Maclaurin
  /// expansion through order M^-5, which the plain midpoint rule leaves at
  /// O(M^-2) whenever the integrand does not vanish at 0 or 1.
  /// All weights stay positive, so H remains symmetric, nonnegative definite
  /// and shrinking.
  double weight(int q) const {
    const int M = cfg_.grid_size;
    const int e = std::min(q, M - 1 - q);
    static constexpr double edge[] = {741.0 / 640.0, 3547.0 / 5760.0, 527.0 / 384.0, 1571.0 / 1920.0, 2983.0 / 2880.0};
    return (e < 5 ? edge[e] : 1.0) / M;
  }

  /// Double-smoothed fit of v evaluated at arbitrary points u in [0, 1].
  Eigen::VectorXd evaluate(const Eigen::VectorXd& v, const Eigen::VectorXd& u) const {
    const int M = cfg_.grid_size;
    const int k = cfg_.p + 1;
    const Eigen::VectorXd coef = c_.transpose() * v;
    Eigen::VectorXd out(u.size());
    Eigen::VectorXd row(k);
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      double norm = 0.0;
      for (int q = 0; q < M; ++q) norm += weight(q) * scaled_kernel(cfg_.kernel, cfg_.h, node(q) - u[i]);
      if (norm < 1e-12) throw Error(ErrorCode::degenerate_bandwidth, "no grid mass near " + std::to_string(u[i]));
      double acc = 0.0;
      for (int q = 0; q < M; ++q) {
        if (!active_[static_cast<std::size_t>(q)]) continue;
        const double w = scaled_kernel(cfg_.kernel, cfg_.h, node(q) - u[i]) / norm;
        if (w == 0.0) continue;
        const double t = (u[i] - node(q)) / cfg_.h;
        row[0] = 1.0;
        for (int r = 1; r < k; ++r) row[r] = row[r - 1] * t;
        const auto L = chol_.middleCols(q * k, k).triangularView<Eigen::Lower>();
        const Eigen::VectorXd a = L.solve(row);
        acc += std::sqrt(weight(q)) * w * a.dot(coef.segment(q * k, k));
      }
      out[i] = acc;
    }
    return out;
  }

 private:
  void build() {
    const Eigen::Index n = x_.size();
    if (n < cfg_.p + 2) throw Error(ErrorCode::invalid_argument, "too few observations for the polynomial order");
    if (x_.minCoeff() < 0.0 || x_.maxCoeff() > 1.0)
      throw Error(ErrorCode::invalid_argument, "covariate must be scaled to [0, 1]");
    const int M = cfg_.grid_size;
    const int k = cfg_.p + 1;
    const double radius = cfg_.kernel.support() * cfg_.h;

    Eigen::VectorXd norm = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int q = 0; q < M; ++q) norm[i] += weight(q) * scaled_kernel(cfg_.kernel, cfg_.h, node(q) - x_[i]);
    for (Eigen::Index i = 0; i < n; ++i)
      if (norm[i] < 1e-12)
        throw Error(ErrorCode::degenerate_bandwidth, "boundary normalizer vanishes at x=" + std::to_string(x_[i]));

    c_.setZero(n, static_cast<Eigen::Index>(M) * k);
    chol_.setZero(k, static_cast<Eigen::Index>(M) * k);
    active_.assign(static_cast<std::size_t>(M), false);
    std::vector<Eigen::Index> idx;
    Eigen::MatrixXd Z;
    Eigen::VectorXd w;
    for (int q = 0; q < M; ++q) {
      const double z = node(q);
      idx.clear();
      for (Eigen::Index i = 0; i < n; ++i)
        if (std::abs(x_[i] - z) <= radius) idx.push_back(i);
      const auto m = static_cast<Eigen::Index>(idx.size());
      Z.resize(m, k);
      w.resize(m);
      bool any = false;
      for (Eigen::Index a = 0; a < m; ++a) {
        const Eigen::Index i = idx[static_cast<std::size_t>(a)];
        w[a] = scaled_kernel(cfg_.kernel, cfg_.h, x_[i] - z) / norm[i];
        any = any || w[a] > 0.0;
        const double t = (x_[i] - z) / cfg_.h;
        Z(a, 0) = 1.0;
        for (int r = 1; r < k; ++r) Z(a, r) = Z(a, r - 1) * t;
      }
      // A node without data carries zero weight for every observation.
      if (!any) continue;
      const Eigen::MatrixXd WZ = w.asDiagonal() * Z;
      Eigen::MatrixXd A = Z.transpose() * WZ;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
      const double lmax = es.eigenvalues().maxCoeff();
      const double lmin = es.eigenvalues().minCoeff();
      if (!(lmin > 0.0) || lmax / lmin > 1e12) {
        if (cfg_.ridge_tol == 0.0)
          throw Error(ErrorCode::bandwidth_too_small, "singular local system at grid point z=" + std::to_string(z));
        A.diagonal().array() += cfg_.ridge_tol * A.trace() / k;
        ++ridged_;
      }
      Eigen::LLT<Eigen::MatrixXd> llt(A);
      if (llt.info() != Eigen::Success)
        throw Error(ErrorCode::bandwidth_too_small, "singular local system at grid point z=" + std::to_string(z));
      const Eigen::MatrixXd L = llt.matrixL();
      chol_.middleCols(q * k, k) = L;
      active_[static_cast<std::size_t>(q)] = true;
      // Rows of sqrt(weight) W Z L^{-T}.
      const Eigen::MatrixXd block =
          L.triangularView<Eigen::Lower>().solve(WZ.transpose()).transpose() * std::sqrt(weight(q));
      for (Eigen::Index a = 0; a < m; ++a) c_.block(idx[static_cast<std::size_t>(a)], q * k, 1, k) = block.row(a);
    }
  }

  Eigen::VectorXd x_;
  SmootherConfig cfg_;
  Eigen::MatrixXd c_;
  Eigen::MatrixXd chol_;
  std::vector<bool> active_;
  int ridged_ = 0;
};

//! Dense smoother matrix for one covariate.
struct SmootherMatrix {
  Eigen::MatrixXd H;
  SmootherConfig config;
  int covariate_index = 0;
};

inline SmootherMatrix build_smoother(const Eigen::VectorXd& x, const SmootherConfig& config, int covariate_index = 0) {
  return {LocalSmoother(x, config).dense(), config, covariate_index};
}

//! Eigenvalues of a symmetric matrix, sorted descending.
inline Eigen::VectorXd sorted_eigenvalues(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  Eigen::VectorXd ev = es.eigenvalues().reverse();
  return ev;
}

inline Eigen::VectorXd smoother_eigs(const SmootherMatrix& sm) { return sorted_eigenvalues(sm.H); }

//! Eigenvalues of H - G_j, sorted descending.
inline Eigen::VectorXd modified_smoother_eigs(const SmootherMatrix& sm, const Eigen::MatrixXd& Gj) {
  if (Gj.rows() != sm.H.rows() || Gj.cols() != sm.H.cols())
    throw Error(ErrorCode::invalid_argument, "projection size does not match smoother");
  return sorted_eigenvalues(sm.H - Gj);
}

}  // namespace addinfer
