#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "addinfer/errors.hpp"
#include "addinfer/inference.hpp"
#include "addinfer/parallel.hpp"
#include "addinfer/rng.hpp"

namespace addinfer {

struct BootstrapPlan {
  int B = 200;
  std::uint64_t seed = 1;
  LossSpec loss{};
  unsigned workers = 1;
  double max_failure_rate = 0.05;
};

struct BootstrapResult {
  std::array<std::vector<double>, statistic_count> null_samples;
  std::array<double, statistic_count> observed{};
  std::array<double, statistic_count> p_values{};
  std::vector<bool> failed;
  int failures = 0;
  int B = 0;
  std::uint64_t seed = 0;
};

//! Share of null draws strictly above the observed value.
inline double bootstrap_pvalue(const std::vector<double>& null_samples, const std::vector<bool>& failed, double observed) {
  int count = 0;
  int used = 0;
  for (std::size_t b = 0; b < null_samples.size(); ++b) {
    if (!failed.empty() && failed[b]) continue;
    ++used;
    if (null_samples[b] > observed) ++count;
  }
  return used == 0 ? 1.0 : static_cast<double>(count) / used;
}

//! Residuals of the full fit, centered so the resampling distribution has mean zero.
inline Eigen::VectorXd centered_residuals(const TestSetup& ts, const Eigen::VectorXd& y) {
  Eigen::VectorXd r = y - ts.hats.full.W * y;
  r.array() -= r.mean();
  return r;
}

/// Conditional bootstrap: y* = W0 y + resampled centered residuals of the full
/// fit, with covariates and bandwidths held fixed. Because the hat matrices do
/// not depend on y, every replicate reduces to matrix-vector products.
/// Replicate b draws from its own stream (seed, b), so results do not depend on
/// the worker count.
inline BootstrapResult conditional_bootstrap(const TestSetup& ts, const Eigen::VectorXd& y, const BootstrapPlan& plan) {
  if (plan.B < 1) throw Error(ErrorCode::invalid_argument, "bootstrap needs at least one replicate");
  const Eigen::Index n = y.size();
  BootstrapResult res;
  res.B = plan.B;
  res.seed = plan.seed;
  res.observed = evaluate_statistics(ts, y, plan.loss).as_array();
  const Eigen::VectorXd mean0 = ts.hats.reduced.W * y;
  const Eigen::VectorXd resid = centered_residuals(ts, y);

  const auto B = static_cast<std::size_t>(plan.B);
  for (auto& v : res.null_samples) v.assign(B, 0.0);
  std::vector<char> failed(B, 0);
  parallel_for(B, plan.workers, [&](std::size_t b) {
    Engine eng = make_stream(plan.seed, b);
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    Eigen::VectorXd ystar(n);
    for (Eigen::Index i = 0; i < n; ++i) ystar[i] = mean0[i] + resid[pick(eng)];
    try {
      const auto vals = evaluate_statistics(ts, ystar, plan.loss).as_array();
      bool ok = true;
      for (double v : vals) ok = ok && std::isfinite(v);
      for (std::size_t s = 0; s < statistic_count; ++s) res.null_samples[s][b] = vals[s];
      failed[b] = ok ? 0 : 1;
    } catch (const Error&) {
      failed[b] = 1;
    }
  });
  res.failed.assign(B, false);
  for (std::size_t b = 0; b < B; ++b) {
    res.failed[b] = failed[b] != 0;
    res.failures += failed[b];
  }
  if (res.failures > plan.max_failure_rate * plan.B)
    throw Error(ErrorCode::bootstrap_failure, std::to_string(res.failures) + " of " + std::to_string(plan.B) + " replicates failed");
  for (std::size_t s = 0; s < statistic_count; ++s)
    res.p_values[s] = ts.degenerate ? 1.0 : bootstrap_pvalue(res.null_samples[s], res.failed, res.observed[s]);
  return res;
}

inline void attach_bootstrap(TestReport& rep, const BootstrapResult& br) {
  rep.p_boot = br.p_values;
  rep.boot_replicates = br.B;
  rep.boot_failures = br.failures;
  rep.boot_seed = br.seed;
}

}  // namespace addinfer
