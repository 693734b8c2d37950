#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "addinfer/errors.hpp"
#include "addinfer/quadrature.hpp"

namespace addinfer {

enum class KernelFamily { gaussian, epanechnikov, uniform };

inline std::string_view to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::gaussian: return "gaussian";
    case KernelFamily::epanechnikov: return "epanechnikov";
    case KernelFamily::uniform: return "uniform";
  }
  return "unknown";
}

inline KernelFamily parse_kernel_family(std::string_view name) {
  if (name == "gaussian") return KernelFamily::gaussian;
  if (name == "epanechnikov") return KernelFamily::epanechnikov;
  if (name == "uniform") return KernelFamily::uniform;
  throw Error(ErrorCode::invalid_argument, "unknown kernel '" + std::string(name) + "'");
}

//! Kernel choice. The Gaussian is truncated at `truncation_radius` and
//! renormalized so that every kernel has finite support.
struct KernelSpec {
  KernelFamily family = KernelFamily::gaussian;
  double truncation_radius = 6.0;

  double support() const { return family == KernelFamily::gaussian ? truncation_radius : 1.0; }
};

namespace detail {

inline double std_normal_cdf(double u) { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }

inline double gaussian_mass(double radius) { return std::erf(radius / std::numbers::sqrt2); }

}  // namespace detail

inline double kernel_eval(const KernelSpec& spec, double u) {
  const double a = std::abs(u);
  switch (spec.family) {
    case KernelFamily::gaussian:
      if (a > spec.truncation_radius) return 0.0;
      return std::exp(-0.5 * a * a) / (std::sqrt(2.0 * std::numbers::pi) *
                                       detail::gaussian_mass(spec.truncation_radius));
    case KernelFamily::epanechnikov:
      return a > 1.0 ? 0.0 : 0.75 * (1.0 - a * a);
    case KernelFamily::uniform:
      return a > 1.0 ? 0.0 : 0.5;
  }
  return 0.0;
}

//! Distribution function of the kernel, clamped to exactly 0 and 1 outside the support.
inline double kernel_cdf(const KernelSpec& spec, double u) {
  const double r = spec.support();
  if (u <= -r) return 0.0;
  if (u >= r) return 1.0;
  switch (spec.family) {
    case KernelFamily::gaussian: {
      const double lo = detail::std_normal_cdf(-r);
      return (detail::std_normal_cdf(u) - lo) / detail::gaussian_mass(r);
    }
    case KernelFamily::epanechnikov:
      return 0.5 + 0.75 * (u - u * u * u / 3.0);
    case KernelFamily::uniform:
      return 0.5 * (u + 1.0);
  }
  return 0.0;
}

inline double scaled_kernel(const KernelSpec& spec, double h, double u) {
  if (!(h > 0.0)) throw Error(ErrorCode::invalid_bandwidth, "bandwidth must be positive");
  return kernel_eval(spec, u / h) / h;
}

//! Integral of K_h(w - v) over w in [0, 1].
inline double boundary_normalizer(const KernelSpec& spec, double h, double v) {
  if (!(h > 0.0)) throw Error(ErrorCode::invalid_bandwidth, "bandwidth must be positive");
  const double r = spec.support() * h;
  if (v - r >= -1e-12 && v + r <= 1.0 + 1e-12) return 1.0;
  return kernel_cdf(spec, (1.0 - v) / h) - kernel_cdf(spec, -v / h);
}

/// Boundary-corrected kernel K_h(u - v) / int_0^1 K_h(w - v) dw. Integrates to
/// one in u over [0, 1] for every fixed v; zero when u or v leaves [0, 1].
inline double boundary_kernel(const KernelSpec& spec, double h, double u, double v) {
  if (!(h > 0.0)) throw Error(ErrorCode::invalid_bandwidth, "bandwidth must be positive");
  if (u < 0.0 || u > 1.0 || v < 0.0 || v > 1.0) return 0.0;
  const double norm = boundary_normalizer(spec, h, v);
  if (norm < 1e-12)
    throw Error(ErrorCode::degenerate_bandwidth, "boundary normalizer vanishes at v=" + std::to_string(v));
  return scaled_kernel(spec, h, u - v) / norm;
}

//! Moments mu_t = int u^t K, v_t = int u^t K^2 and the (p+1)x(p+1) moment matrix S.
struct KernelMoments {
  std::vector<double> mu;
  std::vector<double> v;
  Eigen::MatrixXd S;
  Eigen::MatrixXd S_inv;
};

inline KernelMoments kernel_moments(const KernelSpec& spec, int p) {
  if (p < 0 || p > 3) throw Error(ErrorCode::invalid_argument, "polynomial order must lie in 0..3");
  const int tmax = 2 * p + 2;
  const auto rule = gauss_legendre(512);
  const double r = spec.support();
  KernelMoments km;
  for (int t = 0; t <= tmax; ++t) {
    auto fmu = [&](double u) { return std::pow(u, t) * kernel_eval(spec, u); };
    auto fv = [&](double u) {
      const double k = kernel_eval(spec, u);
      return std::pow(u, t) * k * k;
    };
    km.mu.push_back(integrate_pieces(fmu, -r, r, {0.0}, rule));
    km.v.push_back(integrate_pieces(fv, -r, r, {0.0}, rule));
  }
  km.S.resize(p + 1, p + 1);
  for (int i = 0; i <= p; ++i)
    for (int j = 0; j <= p; ++j) km.S(i, j) = km.mu[static_cast<std::size_t>(i + j)];
  km.S_inv = km.S.inverse();
  return km;
}

/// (K_l * K_m)(u) with K_l(x) = x^l K(x), by Gauss-Legendre quadrature doubled
/// from 256 nodes until successive estimates agree to 1e-9.
inline double kernel_convolution(const KernelSpec& spec, int l, int m, double u) {
  if (l < 0 || m < 0 || l > 3 || m > 3)
    throw Error(ErrorCode::invalid_argument, "convolution powers must lie in 0..3");
  const double r = spec.support();
  const double lo = std::max(-r, u - r);
  const double hi = std::min(r, u + r);
  if (!(hi > lo)) return 0.0;
  auto f = [&](double v) {
    const double w = u - v;
    return std::pow(w, l) * kernel_eval(spec, w) * std::pow(v, m) * kernel_eval(spec, v);
  };
  return integrate_doubling(f, lo, hi, {0.0, u}).value;
}

namespace detail {

// Numerator and denominator of the LF-vs-GLR efficiency ratio for a fixed rule.
// c = K*K, g(u) = int c(u+v) c(v) dv.
inline std::pair<double, double> are_integrals(const KernelSpec& spec, const QuadratureRule& rule) {
  const double r = spec.support();
  auto self_conv = [&](double x) {
    const double lo = std::max(-r, x - r);
    const double hi = std::min(r, x + r);
    return integrate(
        [&](double v) { return kernel_eval(spec, x - v) * kernel_eval(spec, v); }, lo, hi, rule);
  };
  auto double_conv = [&](double u) {
    const double lo = std::max(-2.0 * r, -2.0 * r - u);
    const double hi = std::min(2.0 * r, 2.0 * r - u);
    return integrate_pieces([&](double v) { return self_conv(u + v) * self_conv(v); }, lo, hi,
                            {-u, 0.0}, rule);
  };
  // One pass over the outer nodes accumulates both integrals.
  const double edges[] = {-4.0 * r, -2.0 * r, 0.0, 2.0 * r, 4.0 * r};
  double num = 0.0;
  double den = 0.0;
  for (int piece = 0; piece < 4; ++piece) {
    const double mid = 0.5 * (edges[piece] + edges[piece + 1]);
    const double half = 0.5 * (edges[piece + 1] - edges[piece]);
    for (std::size_t i = 0; i < rule.size(); ++i) {
      const double u = mid + half * rule.nodes[i];
      const double g = double_conv(u);
      const double t = 2.0 * self_conv(u) - g;
      num += half * rule.weights[i] * t * t;
      den += half * rule.weights[i] * g * g;
    }
  }
  return {num, den};
}

}  // namespace detail

//! Base ratio of the efficiency formula evaluated with a fixed node count per panel.
inline double are_base_ratio(const KernelSpec& spec, std::size_t nodes) {
  const auto [num, den] = detail::are_integrals(spec, gauss_legendre(nodes));
  if (!(den > 0.0)) throw Error(ErrorCode::quadrature_failure, "vanishing denominator");
  return num / den;
}

/// Pitman efficiency of the loss-function test relative to the GLR test for
/// local-constant smoothing with h proportional to n^-omega.
inline double are_lf_glr(const KernelSpec& spec, double omega) {
  if (!(omega > 0.0 && omega < 0.2))
    throw Error(ErrorCode::invalid_argument, "omega must lie in (0, 1/5)");
  // Nested triple quadrature costs O(nodes^3), so the doubling starts lower than
  // for single convolutions.
  std::size_t n = 48;
  double prev = are_base_ratio(spec, n);
  double cur = prev;
  bool converged = false;
  while (n < 768) {
    n *= 2;
    cur = are_base_ratio(spec, n);
    if (std::abs(cur - prev) <= 1e-9 * std::max(1.0, std::abs(cur))) {
      converged = true;
      break;
    }
    prev = cur;
  }
  if (!converged) throw Error(ErrorCode::quadrature_failure, "efficiency ratio did not converge");
  return std::pow(cur, 1.0 / (2.0 - 3.0 * omega));
}

}  // namespace addinfer
