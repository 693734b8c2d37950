#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "addinfer/bandwidth.hpp"
#include "addinfer/bootstrap.hpp"
#include "addinfer/data.hpp"
#include "addinfer/errors.hpp"
#include "addinfer/inference.hpp"
#include "addinfer/parallel.hpp"
#include "addinfer/rng.hpp"

namespace addinfer {

enum class ErrorDist { normal, t5, chisq5, chisq10 };

inline std::string_view to_string(ErrorDist e) {
  switch (e) {
    case ErrorDist::normal: return "normal";
    case ErrorDist::t5: return "t5";
    case ErrorDist::chisq5: return "chisq5";
    case ErrorDist::chisq10: return "chisq10";
  }
  return "unknown";
}

inline ErrorDist parse_error_dist(std::string_view s) {
  if (s == "normal") return ErrorDist::normal;
  if (s == "t5") return ErrorDist::t5;
  if (s == "chisq5") return ErrorDist::chisq5;
  if (s == "chisq10") return ErrorDist::chisq10;
  throw Error(ErrorCode::invalid_argument, "unknown error distribution '" + std::string(s) + "'");
}

struct SimConfig {
  int n = 100;
  double theta = 0.0;
  double beta = 0.0;
  ErrorDist error = ErrorDist::normal;
  std::uint64_t seed = 1;
};

//! Draws one error with mean 0 and variance 1.
inline double draw_error(ErrorDist dist, Engine& eng) {
  switch (dist) {
    case ErrorDist::normal: return std::normal_distribution<double>()(eng);
    case ErrorDist::t5: return std::student_t_distribution<double>(5.0)(eng) / std::sqrt(5.0 / 3.0);
    case ErrorDist::chisq5: return (std::chi_squared_distribution<double>(5.0)(eng) - 5.0) / std::sqrt(10.0);
    case ErrorDist::chisq10: return (std::chi_squared_distribution<double>(10.0)(eng) - 10.0) / std::sqrt(20.0);
  }
  return 0.0;
}

inline double base_m1(double x) { return 0.5 - x * x + 3.0 * x * x * x; }

/// Four covariates X = 2 atan(Z)/pi with Z equicorrelated normal (rho = 0.6) and
/// y = m_{1,beta}(X1) + theta sin(pi X2) + X3(1 - X3) + exp(2 X4 - 1) + e, where
/// m_{1,beta} = [1 + beta sd(m1)] m1 with sd taken over the realized sample.
/// The draws depend only on (n, seed, error), so theta and beta act on common random numbers.
inline Dataset gen_sim_data(const SimConfig& cfg) {
  if (cfg.n < 10) throw Error(ErrorCode::invalid_argument, "simulation needs n >= 10");
  if (!(cfg.theta >= 0.0 && cfg.theta <= 1.0)) throw Error(ErrorCode::invalid_argument, "theta must lie in [0, 1]");
  Engine eng = make_stream(cfg.seed, 0);
  std::normal_distribution<double> normal;
  const Eigen::Index n = cfg.n;
  Eigen::MatrixXd X(n, 4);
  const double a = std::sqrt(0.6);
  const double b = std::sqrt(0.4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double common = normal(eng);
    for (int j = 0; j < 4; ++j) X(i, j) = 2.0 * std::atan(a * common + b * normal(eng)) / std::numbers::pi;
  }
  Eigen::VectorXd e(n);
  for (Eigen::Index i = 0; i < n; ++i) e[i] = draw_error(cfg.error, eng);
  Eigen::VectorXd m1(n);
  for (Eigen::Index i = 0; i < n; ++i) m1[i] = base_m1(X(i, 0));
  const double scale = 1.0 + cfg.beta * sample_sd(m1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x2 = X(i, 1), x3 = X(i, 2), x4 = X(i, 3);
    y[i] = scale * m1[i] + cfg.theta * std::sin(std::numbers::pi * x2) + x3 * (1.0 - x3) + std::exp(2.0 * x4 - 1.0) + e[i];
  }
  return make_dataset(std::move(y), std::move(X), {"x1", "x2", "x3", "x4"});
}

//! Gaussian kernel density of `sample` on `grid` with bandwidth 1.06 s N^{-1/5}.
inline Eigen::VectorXd rule_of_thumb_density(const std::vector<double>& sample, const Eigen::VectorXd& grid) {
  const Eigen::Map<const Eigen::VectorXd> v(sample.data(), static_cast<Eigen::Index>(sample.size()));
  const double h = 1.06 * sample_sd(v) * std::pow(static_cast<double>(sample.size()), -0.2);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(grid.size());
  const double c = 1.0 / (static_cast<double>(sample.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    double s = 0.0;
    for (double x : sample) {
      const double u = (grid[g] - x) / h;
      s += std::exp(-0.5 * u * u);
    }
    f[g] = c * s;
  }
  return f;
}

//! Scaled null statistics of one replicate.
struct NullDraw {
  double scaled_glr = 0.0;
  double scaled_lf = 0.0;
  double F_lambda = 0.0;
  double F_q = 0.0;
  double r_k = 0.0;
  double mu_n = 0.0;
  double s_k = 0.0;
  double nu_n = 0.0;
  double M = 0.5;
  bool ok = false;
};

inline NullDraw null_draw(const Dataset& data, const ModelSpec& spec, std::size_t tested, const LossSpec& loss) {
  NullDraw out;
  const TestSetup ts = prepare_test(data, spec, tested, -1, false);
  const TestReport rep = run_test(ts, data.y, loss);
  if (!rep.constants) return out;
  const auto& c = *rep.constants;
  out.scaled_glr = c.r_k * rep.stats.lambda_log;
  out.scaled_lf = c.s_k * rep.stats.q_n / c.M;
  out.F_lambda = rep.stats.F_lambda;
  out.F_q = rep.stats.F_q;
  out.r_k = c.r_k;
  out.mu_n = c.mu_n;
  out.s_k = c.s_k;
  out.nu_n = c.nu_n;
  out.M = c.M;
  out.ok = true;
  return out;
}

struct NullLawConfig {
  int n = 100;
  int n_sim = 500;
  std::vector<double> h;
  int p = 1;
  double beta = 0.0;
  ErrorDist error = ErrorDist::normal;
  LossSpec loss{0.0, 1.0};
  std::size_t tested = 1;
  std::uint64_t seed = 1;
  unsigned workers = 1;
};

/// CV-selected bandwidths averaged over `pilots` null datasets, pilot s drawn
/// from stream (seed, s). Used as h_opt for the Wilks and null-law experiments.
inline std::vector<double> pilot_bandwidths(int n, int pilots, std::uint64_t seed, int p = 1,
                                            ErrorDist error = ErrorDist::normal, const BandwidthSearch& search = {},
                                            unsigned workers = 1) {
  if (pilots < 1) throw Error(ErrorCode::invalid_argument, "need at least one pilot dataset");
  std::vector<std::vector<double>> sel(static_cast<std::size_t>(pilots));
  parallel_for(sel.size(), workers, [&](std::size_t s) {
    const Dataset data = gen_sim_data({n, 0.0, 0.0, error, stream_seed(seed, s)});
    sel[s] = select_bandwidths_cv(data, make_model_spec(std::vector<int>(4, p), std::vector<double>(4, search.initial)), search).h;
  });
  std::vector<double> h(4, 0.0);
  for (const auto& v : sel)
    for (std::size_t j = 0; j < 4; ++j) h[j] += v[j] / pilots;
  return h;
}

//! Null draws of the scaled statistics; replicate i uses data stream (seed, i).
inline std::vector<NullDraw> simulate_null(const NullLawConfig& cfg) {
  std::vector<NullDraw> out(static_cast<std::size_t>(cfg.n_sim));
  std::vector<int> p(cfg.h.size(), cfg.p);
  const ModelSpec spec = make_model_spec(p, cfg.h);
  parallel_for(out.size(), cfg.workers, [&](std::size_t i) {
    const Dataset data = gen_sim_data({cfg.n, 0.0, cfg.beta, cfg.error, stream_seed(cfg.seed, i)});
    try {
      out[i] = null_draw(data, spec, cfg.tested, cfg.loss);
    } catch (const Error&) {
      out[i].ok = false;
    }
  });
  return out;
}

struct WilksConfig {
  int n = 100;
  int n_sim = 1000;
  std::vector<double> h_opt;
  std::vector<double> h1_factors = {1.0 / 3.0, 1.0, 1.5};
  std::vector<double> betas = {-1.5, 0.0, 1.5};
  int p = 1;
  ErrorDist error = ErrorDist::normal;
  LossSpec loss{0.0, 1.0};
  std::uint64_t seed = 1;
  unsigned workers = 1;
  int curve_points = 401;
};

inline constexpr std::array<const char*, 4> wilks_statistic_names = {"glr", "lf", "F_lambda", "F_q"};

struct WilksVariation {
  std::string group;
  double h1 = 0.0;
  double beta = 0.0;
  std::vector<NullDraw> draws;

  std::vector<double> sample(std::size_t stat) const {
    std::vector<double> v;
    for (const auto& d : draws) {
      if (!d.ok) continue;
      const double vals[] = {d.scaled_glr, d.scaled_lf, d.F_lambda, d.F_q};
      v.push_back(vals[stat]);
    }
    return v;
  }
};

struct WilksResult {
  std::vector<WilksVariation> variations;
  std::array<Eigen::VectorXd, 4> abscissa;
  std::vector<std::array<Eigen::VectorXd, 4>> density;
};

/// Null distributions under bandwidth variations of h1 (beta = 0) and nuisance
/// variations of beta (h = h_opt). All variations reuse the same data streams.
inline WilksResult wilks_experiment(const WilksConfig& cfg) {
  if (cfg.h_opt.size() != 4) throw Error(ErrorCode::invalid_argument, "four optimal bandwidths required");
  WilksResult res;
  for (double f : cfg.h1_factors) res.variations.push_back({"bandwidth", std::min(1.0, f * cfg.h_opt[0]), 0.0, {}});
  for (double b : cfg.betas) res.variations.push_back({"nuisance", cfg.h_opt[0], b, {}});
  for (auto& v : res.variations) {
    NullLawConfig nc{cfg.n, cfg.n_sim, cfg.h_opt, cfg.p, v.beta, cfg.error, cfg.loss, 1, cfg.seed, cfg.workers};
    nc.h[0] = v.h1;
    bool reused = false;
    for (const auto& prev : res.variations) {
      if (&prev == &v) break;
      if (prev.h1 == v.h1 && prev.beta == v.beta) {
        v.draws = prev.draws;
        reused = true;
        break;
      }
    }
    if (!reused) v.draws = simulate_null(nc);
  }
  res.density.resize(res.variations.size());
  for (std::size_t s = 0; s < 4; ++s) {
    double hi = -std::numeric_limits<double>::infinity();
    double lo = std::numeric_limits<double>::infinity();
    double pad = 0.0;
    for (const auto& v : res.variations) {
      const auto sample = v.sample(s);
      if (sample.size() < 2) continue;
      for (double x : sample) {
        hi = std::max(hi, x);
        lo = std::min(lo, x);
      }
      const Eigen::Map<const Eigen::VectorXd> m(sample.data(), static_cast<Eigen::Index>(sample.size()));
      pad = std::max(pad, 4.0 * 1.06 * sample_sd(m) * std::pow(static_cast<double>(sample.size()), -0.2));
    }
    if (!(lo <= hi)) lo = hi = 0.0;
    res.abscissa[s] = Eigen::VectorXd::LinSpaced(cfg.curve_points, lo - pad, hi + pad + 1e-12);
    for (std::size_t k = 0; k < res.variations.size(); ++k) {
      const auto sample = res.variations[k].sample(s);
      res.density[k][s] = sample.size() > 1 ? rule_of_thumb_density(sample, res.abscissa[s])
                                            : Eigen::VectorXd::Zero(cfg.curve_points);
    }
  }
  return res;
}

//! Two-sample Kolmogorov-Smirnov distance.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::invalid_argument, "empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

enum class BandwidthRule { testing_rate, fixed };

struct PowerConfig {
  int n = 100;
  std::vector<double> thetas = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<double> alphas = {0.05, 0.01};
  int n_sim = 500;
  int B = 200;
  BandwidthRule rule = BandwidthRule::testing_rate;
  std::vector<double> fixed_h;
  int p = 1;
  ErrorDist error = ErrorDist::normal;
  LossSpec loss{1.0, 1.0};
  std::size_t tested = 1;
  std::uint64_t seed = 1;
  unsigned workers = 1;
};

struct PowerCell {
  double theta = 0.0;
  double alpha = 0.0;
  std::size_t statistic = 0;
  double rejection = 0.0;
  int used = 0;
  int failures = 0;
};

struct PowerResult {
  std::vector<PowerCell> cells;
  //! p_values[theta][replicate][statistic]; NaN for failed replicates.
  std::vector<std::vector<std::array<double, statistic_count>>> p_values;

  double rejection(double theta, double alpha, std::size_t stat) const {
    for (const auto& c : cells)
      if (c.theta == theta && c.alpha == alpha && c.statistic == stat) return c.rejection;
    throw Error(ErrorCode::invalid_argument, "no such power cell");
  }
};

inline std::vector<double> bandwidths_for(const PowerConfig& cfg, const Dataset& data) {
  if (cfg.rule == BandwidthRule::fixed) {
    if (static_cast<Eigen::Index>(cfg.fixed_h.size()) != data.d())
      throw Error(ErrorCode::invalid_argument, "one fixed bandwidth per covariate required");
    return cfg.fixed_h;
  }
  std::vector<double> h;
  for (Eigen::Index j = 0; j < data.d(); ++j)
    h.push_back(testing_bandwidth(sample_sd(data.x.col(j)), data.n(), cfg.p));
  return h;
}

/// Bootstrap rejection rates over an alternative strength grid. Outer
/// replicate i uses data stream (seed, i) at every theta and bootstrap stream
/// derived from the same pair, so the grid shares common random numbers.
inline PowerResult power_curve(const PowerConfig& cfg) {
  PowerResult res;
  const auto nsim = static_cast<std::size_t>(cfg.n_sim);
  for (double theta : cfg.thetas) {
    std::vector<std::array<double, statistic_count>> pv(nsim);
    parallel_for(nsim, cfg.workers, [&](std::size_t i) {
      pv[i].fill(std::numeric_limits<double>::quiet_NaN());
      try {
        const Dataset data = gen_sim_data({cfg.n, theta, 0.0, cfg.error, stream_seed(cfg.seed, i)});
        const std::vector<int> p(static_cast<std::size_t>(data.d()), cfg.p);
        const ModelSpec spec = make_model_spec(p, bandwidths_for(cfg, data));
        const TestSetup ts = prepare_test(data, spec, cfg.tested);
        BootstrapPlan plan;
        plan.B = cfg.B;
        plan.seed = stream_seed(cfg.seed ^ 0xb0075742a9ULL, i);
        plan.loss = cfg.loss;
        plan.workers = 1;
        pv[i] = conditional_bootstrap(ts, data.y, plan).p_values;
      } catch (const Error&) {
      }
    });
    for (double alpha : cfg.alphas)
      for (std::size_t s = 0; s < statistic_count; ++s) {
        PowerCell cell{theta, alpha, s, 0.0, 0, 0};
        int rejections = 0;
        for (const auto& row : pv) {
          if (std::isnan(row[s])) {
            ++cell.failures;
            continue;
          }
          ++cell.used;
          if (row[s] < alpha) ++rejections;
        }
        cell.rejection = cell.used ? static_cast<double>(rejections) / cell.used : 0.0;
        res.cells.push_back(cell);
      }
    res.p_values.push_back(std::move(pv));
  }
  return res;
}

}  // namespace addinfer
