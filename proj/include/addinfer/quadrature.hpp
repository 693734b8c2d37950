#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "addinfer/errors.hpp"

namespace addinfer {

//! Gauss-Legendre nodes and weights on [-1, 1].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

// Newton iteration on the Legendre recurrence, started from the Tricomi
// approximation of the k-th root.
inline QuadratureRule gauss_legendre(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::invalid_argument, "quadrature rule needs at least one node");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const std::size_t half = (n + 1) / 2;
  for (std::size_t k = 0; k < half; ++k) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(k) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (std::size_t j = 2; j <= n; ++j) {
        const double jj = static_cast<double>(j);
        const double p2 = ((2.0 * jj - 1.0) * x * p1 - (jj - 1.0) * p0) / jj;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) {
        p1 = x;
        p0 = 1.0;
      }
      dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[k] = -x;
    rule.nodes[n - 1 - k] = x;
    rule.weights[k] = w;
    rule.weights[n - 1 - k] = w;
  }
  if (n == 1) {
    rule.nodes[0] = 0.0;
    rule.weights[0] = 2.0;
  }
  return rule;
}

//! Integrates f over [a, b] with a fixed rule.
template <typename F>
double integrate(const F& f, double a, double b, const QuadratureRule& rule) {
  if (!(b > a)) return 0.0;
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) sum += rule.weights[i] * f(mid + half * rule.nodes[i]);
  return sum * half;
}

//! Integrates f piecewise over [a, b] split at the given breakpoints (any order).
template <typename F>
double integrate_pieces(const F& f, double a, double b, std::vector<double> breaks, const QuadratureRule& rule) {
  if (!(b > a)) return 0.0;
  std::sort(breaks.begin(), breaks.end());
  double sum = 0.0;
  double lo = a;
  for (double c : breaks) {
    if (c <= lo || c >= b) continue;
    sum += integrate(f, lo, c, rule);
    lo = c;
  }
  return sum + integrate(f, lo, b, rule);
}

//! Result of a node-doubling integration.
struct AdaptiveResult {
  double value = 0.0;
  std::size_t nodes = 0;
};

// Doubles the rule size until two successive estimates agree to abs_tol.
template <typename F>
AdaptiveResult integrate_doubling(const F& f, double a, double b, const std::vector<double>& breaks,
                                  double abs_tol = 1e-9, std::size_t start_nodes = 256,
                                  std::size_t max_nodes = 8192) {
  std::size_t n = start_nodes;
  double prev = integrate_pieces(f, a, b, breaks, gauss_legendre(n));
  while (n < max_nodes) {
    n *= 2;
    const double cur = integrate_pieces(f, a, b, breaks, gauss_legendre(n));
    if (std::abs(cur - prev) <= abs_tol) return {cur, n};
    prev = cur;
  }
  throw Error(ErrorCode::quadrature_failure, "no convergence with " + std::to_string(n) + " nodes");
}

}  // namespace addinfer
