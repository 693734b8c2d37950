#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cstdint>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "addinfer/backfit.hpp"
#include "addinfer/errors.hpp"

namespace addinfer {

//! LINEX loss d(z) = (t/s^2)[exp(sz) - 1 - sz]; curvature M = d''(0)/2 = t/2.
struct LossSpec {
  double s = 0.0;
  double t = 1.0;

  double M() const { return 0.5 * t; }
};

inline double linex(const LossSpec& loss, double z) {
  if (!(loss.t > 0.0)) throw Error(ErrorCode::invalid_argument, "LINEX scale must be positive");
  if (loss.s == 0.0) return 0.5 * loss.t * z * z;
  const double sz = loss.s * z;
  if (std::abs(sz) < 1e-4) return loss.t * z * z * (0.5 + sz / 6.0 + sz * sz / 24.0);
  return loss.t / (loss.s * loss.s) * (std::expm1(sz) - sz);
}

//! Exact test matrices from the two hat matrices.
struct TestMatrices {
  Eigen::MatrixXd C;
  Eigen::MatrixXd D;
  Eigen::MatrixXd E;
};

inline TestMatrices test_matrices(const Eigen::MatrixXd& W, const Eigen::MatrixXd& W0) {
  if (W.rows() != W.cols() || W0.rows() != W0.cols() || W.rows() != W0.rows())
    throw Error(ErrorCode::incompatible_fits, "hat matrices differ in shape");
  const Eigen::Index n = W.rows();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd R1 = I - W;
  const Eigen::MatrixXd R0 = I - W0;
  TestMatrices tm;
  tm.D.noalias() = R1.transpose() * R1;
  tm.C.noalias() = R0.transpose() * R0;
  tm.C -= tm.D;
  tm.E = W - W0;
  return tm;
}

//! Traces that normalize the F statistics; computable without forming C.
struct TestTraces {
  double trC = 0.0;
  double trD = 0.0;
  double trEtE = 0.0;
};

inline TestTraces test_traces(const Eigen::MatrixXd& W, const Eigen::MatrixXd& W0) {
  if (W.rows() != W0.rows() || W.cols() != W0.cols()) throw Error(ErrorCode::incompatible_fits, "hat matrices differ in shape");
  const Eigen::Index n = W.rows();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  TestTraces t;
  t.trD = (I - W).squaredNorm();
  t.trC = (I - W0).squaredNorm() - t.trD;
  t.trEtE = (W - W0).squaredNorm();
  return t;
}

inline TestTraces test_traces(const TestMatrices& tm) {
  return {tm.C.trace(), tm.D.trace(), tm.E.squaredNorm()};
}

//! (n/2) log(RSS0/RSS1).
inline double glr_statistic(double rss0, double rss1, Eigen::Index n) {
  if (!(rss0 > 0.0) || !(rss1 > 0.0)) throw Error(ErrorCode::degenerate_fit, "residual sum of squares must be positive");
  return 0.5 * static_cast<double>(n) * std::log(rss0 / rss1);
}

//! (n/2)(RSS0 - RSS1)/RSS1.
inline double glr_ratio_statistic(double rss0, double rss1, Eigen::Index n) {
  if (!(rss0 > 0.0) || !(rss1 > 0.0)) throw Error(ErrorCode::degenerate_fit, "residual sum of squares must be positive");
  return 0.5 * static_cast<double>(n) * (rss0 - rss1) / rss1;
}

//! q_n = sum_i d(fitted1_i - fitted0_i) / (RSS1/n).
inline double lf_statistic(const Eigen::VectorXd& fitted1, const Eigen::VectorXd& fitted0, double rss1,
                           const LossSpec& loss) {
  if (fitted1.size() != fitted0.size()) throw Error(ErrorCode::incompatible_fits, "fitted vectors differ in length");
  if (!(rss1 > 0.0)) throw Error(ErrorCode::degenerate_fit, "residual sum of squares must be positive");
  double Q = 0.0;
  for (Eigen::Index i = 0; i < fitted1.size(); ++i) {
    const double v = linex(loss, fitted1[i] - fitted0[i]);
    if (!std::isfinite(v)) throw Error(ErrorCode::loss_overflow, "loss overflows at observation " + std::to_string(i + 1));
    Q += v;
  }
  if (!std::isfinite(Q)) throw Error(ErrorCode::loss_overflow, "accumulated loss overflows");
  return Q / (rss1 / static_cast<double>(fitted1.size()));
}

struct FStatistics {
  double F_lambda = 0.0;
  double F_q = 0.0;
};

inline FStatistics f_statistics_from(double rss0, double rss1, double diff_ss, const TestTraces& tr) {
  if (tr.trC < 1e-10 || tr.trEtE < 1e-10) throw Error(ErrorCode::degenerate_test, "null and alternative models coincide");
  if (!(rss1 > 0.0)) throw Error(ErrorCode::degenerate_fit, "residual sum of squares must be positive");
  return {(rss0 - rss1) / rss1 * tr.trD / tr.trC, diff_ss / rss1 * tr.trD / tr.trEtE};
}

inline FStatistics f_statistics(const Eigen::VectorXd& y, const TestMatrices& tm) {
  const TestTraces tr = test_traces(tm);
  const double yDy = y.dot(tm.D * y);
  const double yCy = y.dot(tm.C * y);
  const double ee = (tm.E * y).squaredNorm();
  return f_statistics_from(yCy + yDy, yDy, ee, tr);
}

struct ScalingConstants {
  double mu_n = 0.0;
  double sigma_n2 = 0.0;
  double r_k = 0.0;
  double nu_n = 0.0;
  double delta_n2 = 0.0;
  double s_k = 0.0;
  double M = 0.5;
};

inline ScalingConstants scaling_constants(const TestMatrices& tm, const LossSpec& loss = {}) {
  ScalingConstants sc;
  sc.mu_n = 0.5 * tm.C.trace();
  sc.sigma_n2 = 0.5 * (tm.C.squaredNorm() - tm.C.diagonal().squaredNorm());
  const Eigen::MatrixXd EtE = tm.E.transpose() * tm.E;
  sc.nu_n = EtE.trace();
  sc.delta_n2 = EtE.squaredNorm() - EtE.diagonal().squaredNorm();
  if (!(sc.sigma_n2 > 0.0) || !(sc.delta_n2 > 0.0))
    throw Error(ErrorCode::degenerate_test, "vanishing spread of the null distribution");
  sc.r_k = 2.0 * sc.mu_n / sc.sigma_n2;
  sc.s_k = 2.0 * sc.nu_n / sc.delta_n2;
  sc.M = loss.M();
  return sc;
}

//! Upper tail of chi-square with real degrees of freedom.
inline double chi2_upper(double df, double x) {
  if (!(df > 0.0)) throw Error(ErrorCode::degenerate_test, "nonpositive chi-square degrees of freedom");
  if (!(x > 0.0)) return 1.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

inline double f_upper(double df1, double df2, double x) {
  if (!(df1 > 0.0) || !(df2 > 0.0)) throw Error(ErrorCode::degenerate_test, "nonpositive F degrees of freedom");
  if (!(x > 0.0)) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::fisher_f(df1, df2), x));
}

/// Riemann sum of m^2 f over the sorted covariate, with zero width for the
/// first point and for ties.
inline double sb_riemann(const Eigen::VectorXd& x, const Eigen::VectorXd& m, const Eigen::VectorXd& f) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return x[a] < x[b]; });
  double s = 0.0;
  for (std::size_t k = 1; k < order.size(); ++k) {
    const Eigen::Index i = order[k];
    s += m[i] * m[i] * f[i] * (x[i] - x[order[k - 1]]);
  }
  return s;
}

//! Gaussian kernel density estimate of the sample x evaluated at the sample points.
inline Eigen::VectorXd gaussian_kde_at_samples(const Eigen::VectorXd& x, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::invalid_bandwidth, "density bandwidth must be positive");
  const Eigen::Index n = x.size();
  const double c = 1.0 / (static_cast<double>(n) * h * std::sqrt(2.0 * std::numbers::pi));
  Eigen::VectorXd f(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double u = (x[i] - x[k]) / h;
      s += std::exp(-0.5 * u * u);
    }
    f[i] = c * s;
  }
  return f;
}

inline double sb_statistic(const Eigen::VectorXd& x, const Eigen::VectorXd& m, double density_bandwidth) {
  return sb_riemann(x, m, gaussian_kde_at_samples(x, density_bandwidth));
}

enum Statistic : std::size_t { glr = 0, lf = 1, f_lambda = 2, f_q = 3, sb = 4 };
inline constexpr std::size_t statistic_count = 5;
inline constexpr std::array<const char*, statistic_count> statistic_names = {"glr", "lf", "F_lambda", "F_q", "sb"};

//! One evaluation of every statistic on a response vector.
struct StatisticValues {
  double lambda_log = 0.0;
  double lambda_ratio = 0.0;
  double q_n = 0.0;
  double F_lambda = 0.0;
  double F_q = 0.0;
  double S_n = 0.0;
  double rss0 = 0.0;
  double rss1 = 0.0;

  std::array<double, statistic_count> as_array() const { return {lambda_log, q_n, F_lambda, F_q, S_n}; }
};

/// Everything needed to evaluate the statistics for a fixed design and
/// bandwidth pair: both hat matrices, traces, and the map y -> m_d used by S_n.
struct TestSetup {
  HatPair hats;
  std::size_t tested = 0;
  int null_degree = -1;
  TestTraces traces;
  bool degenerate = false;
  Eigen::MatrixXd component_d;
  Eigen::VectorXd x_d;
  Eigen::VectorXd density_d;
};

inline TestSetup prepare_test(const Dataset& data, const ModelSpec& spec, std::size_t d, int null_degree = -1,
                              bool with_sb = true) {
  TestSetup ts{hat_matrices(data, spec, d, null_degree), d, null_degree, {}, false, {}, {}, {}};
  ts.traces = test_traces(ts.hats.full.W, ts.hats.reduced.W);
  ts.degenerate = ts.traces.trC < 1e-10 || ts.traces.trEtE < 1e-10;
  if (with_sb) {
    ts.component_d = ts.hats.full.component_matrix(d);
    ts.x_d = data.x.col(static_cast<Eigen::Index>(d));
    ts.density_d = gaussian_kde_at_samples(ts.x_d, spec.components[d].h);
  }
  return ts;
}

inline StatisticValues evaluate_statistics(const TestSetup& ts, const Eigen::VectorXd& y, const LossSpec& loss) {
  StatisticValues sv;
  const Eigen::VectorXd f1 = ts.hats.full.W * y;
  const Eigen::VectorXd f0 = ts.hats.reduced.W * y;
  sv.rss1 = (y - f1).squaredNorm();
  sv.rss0 = (y - f0).squaredNorm();
  const auto n = y.size();
  if (ts.degenerate) return sv;
  sv.lambda_log = glr_statistic(sv.rss0, sv.rss1, n);
  sv.lambda_ratio = glr_ratio_statistic(sv.rss0, sv.rss1, n);
  sv.q_n = lf_statistic(f1, f0, sv.rss1, loss);
  const FStatistics fs = f_statistics_from(sv.rss0, sv.rss1, (f1 - f0).squaredNorm(), ts.traces);
  sv.F_lambda = fs.F_lambda;
  sv.F_q = fs.F_q;
  if (ts.component_d.size() > 0) sv.S_n = sb_riemann(ts.x_d, ts.component_d * y, ts.density_d);
  return sv;
}

struct AsymptoticPValues {
  double glr = 1.0;
  double lf = 1.0;
  double F_lambda = 1.0;
  double F_q = 1.0;
};

inline AsymptoticPValues asymptotic_pvalues(const StatisticValues& sv, const ScalingConstants& sc, const TestTraces& tr) {
  AsymptoticPValues p;
  p.glr = chi2_upper(sc.r_k * sc.mu_n, sc.r_k * sv.lambda_log);
  p.lf = chi2_upper(sc.s_k * sc.nu_n, sc.s_k * sv.q_n / sc.M);
  p.F_lambda = f_upper(tr.trC, tr.trD, sv.F_lambda);
  p.F_q = f_upper(tr.trEtE, tr.trD, sv.F_q);
  return p;
}

struct TestReport {
  Eigen::Index n = 0;
  std::size_t tested = 0;
  int null_degree = -1;
  LossSpec loss;
  StatisticValues stats;
  std::optional<ScalingConstants> constants;
  TestTraces traces;
  bool degenerate = false;
  AsymptoticPValues p_asym;
  std::optional<std::array<double, statistic_count>> p_boot;
  int boot_replicates = 0;
  int boot_failures = 0;
  std::uint64_t boot_seed = 0;
};

//! Observed statistics, constants and asymptotic p-values. Identical models give zeros and p = 1.
inline TestReport run_test(const TestSetup& ts, const Eigen::VectorXd& y, const LossSpec& loss = {}) {
  TestReport rep;
  rep.n = y.size();
  rep.tested = ts.tested;
  rep.null_degree = ts.null_degree;
  rep.loss = loss;
  rep.traces = ts.traces;
  rep.degenerate = ts.degenerate;
  rep.stats = evaluate_statistics(ts, y, loss);
  if (ts.degenerate) return rep;
  rep.constants = scaling_constants(test_matrices(ts.hats.full.W, ts.hats.reduced.W), loss);
  rep.p_asym = asymptotic_pvalues(rep.stats, *rep.constants, ts.traces);
  return rep;
}

}  // namespace addinfer
