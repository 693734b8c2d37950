#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "addinfer/backfit.hpp"
#include "addinfer/data.hpp"
#include "addinfer/errors.hpp"
#include "addinfer/smoother.hpp"

namespace addinfer {

//! `count` log-spaced points from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, int count) {
  if (!(lo > 0.0) || !(hi > lo) || count < 2) throw Error(ErrorCode::invalid_argument, "invalid bandwidth grid");
  std::vector<double> g(static_cast<std::size_t>(count));
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (int i = 0; i < count; ++i) g[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (count - 1));
  g.front() = lo;
  g.back() = hi;
  return g;
}

struct BandwidthSearch {
  std::vector<double> grid = log_grid(0.02, 1.0, 30);
  int max_cycles = 10;
  double cycle_tol = 1e-3;
  double initial = 0.3;
};

//! AICc = log(sigma^2) + 1 + 2(tr H + 1)/(n - tr H - 2); NaN when tr H >= n - 2.
inline double aicc(const LocalSmoother& H, const Eigen::VectorXd& r) {
  const auto n = static_cast<double>(r.size());
  const double tr = H.trace();
  if (tr >= n - 2.0) return std::numeric_limits<double>::quiet_NaN();
  const double s2 = (r - H.apply(r)).squaredNorm() / n;
  return std::log(s2) + 1.0 + 2.0 * (tr + 1.0) / (n - tr - 2.0);
}

struct AiccSelection {
  double h = 0.0;
  std::vector<double> grid;
  std::vector<double> values;
};

/// Grid search of AICc for a univariate smoother of r on x. Candidates that
/// cannot be built or whose trace reaches n - 2 are skipped.
inline AiccSelection aicc_univariate(const Eigen::VectorXd& x, const Eigen::VectorXd& r, int p,
                                     const std::vector<double>& grid, const KernelSpec& kernel = {},
                                     int grid_size = 401, double ridge_tol = 1e-8) {
  if (grid.empty()) throw Error(ErrorCode::invalid_argument, "empty bandwidth grid");
  AiccSelection sel;
  sel.grid = grid;
  sel.values.assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    try {
      const LocalSmoother H(x, {p, grid[k], kernel, grid_size, ridge_tol});
      sel.values[k] = aicc(H, r);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::invalid_argument) throw;
      continue;
    }
    if (std::isfinite(sel.values[k]) && sel.values[k] < best) {
      best = sel.values[k];
      sel.h = grid[k];
    }
  }
  if (!std::isfinite(best)) throw Error(ErrorCode::bandwidth_grid_too_small, "no admissible bandwidth on the grid");
  return sel;
}

struct CvResult {
  std::vector<double> h;
  bool converged = false;
  int cycles = 0;
  std::vector<std::vector<double>> history;
  std::vector<std::vector<AiccSelection>> selections;
};

/// Cyclic selection: for each smooth covariate in turn, fit the model at the
/// current bandwidths, take the partial residual y - alpha0 - sum_{l != j} m_l,
/// and replace h_j by the AICc minimizer for that residual.
inline CvResult select_bandwidths_cv(const Dataset& data, const ModelSpec& spec, const BandwidthSearch& search = {}) {
  ModelSpec cur = spec;
  for (auto& c : cur.components)
    if (c.role == ComponentRole::smooth) c.h = search.initial;
  CvResult res;
  for (int cycle = 1; cycle <= search.max_cycles; ++cycle) {
    std::vector<double> before;
    for (const auto& c : cur.components) before.push_back(c.h);
    std::vector<AiccSelection> sels;
    for (std::size_t j = 0; j < cur.size(); ++j) {
      if (cur.components[j].role != ComponentRole::smooth) continue;
      const AdditiveFit fit = fit_backfitting(data, cur);
      const Eigen::VectorXd partial = fit.residuals + fit.m[j];
      sels.push_back(aicc_univariate(data.x.col(static_cast<Eigen::Index>(j)), partial, cur.components[j].p, search.grid,
                                     cur.kernel, cur.grid_size, cur.ridge_tol));
      cur.components[j].h = sels.back().h;
    }
    res.cycles = cycle;
    res.selections.push_back(std::move(sels));
    double change = 0.0;
    std::vector<double> after;
    for (std::size_t j = 0; j < cur.size(); ++j) {
      after.push_back(cur.components[j].h);
      change = std::max(change, std::abs(after[j] - before[j]) / before[j]);
    }
    res.history.push_back(after);
    if (change < search.cycle_tol) {
      res.converged = true;
      break;
    }
  }
  for (const auto& c : cur.components) res.h.push_back(c.h);
  return res;
}

//! Rate-optimal testing bandwidth sd * n^{-2/(8p+9)}.
inline double testing_bandwidth(double sd, Eigen::Index n, int p) {
  if (n < 2) throw Error(ErrorCode::invalid_argument, "need at least two observations");
  if (p < 0 || p > 3) throw Error(ErrorCode::invalid_argument, "polynomial order must lie in 0..3");
  return sd * std::pow(static_cast<double>(n), -2.0 / (8.0 * p + 9.0));
}

//! Upper end n^{-1/(4p+4)} of the bandwidth window where the null law is nuisance-free.
inline double wilks_window(Eigen::Index n, int p) { return std::pow(static_cast<double>(n), -1.0 / (4.0 * p + 4.0)); }

inline bool in_wilks_window(double h, Eigen::Index n, int p) { return h > 0.0 && h <= wilks_window(n, p); }

//! Sample standard deviation.
inline double sample_sd(const Eigen::VectorXd& v) {
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

}  // namespace addinfer
