#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "addinfer/data.hpp"
#include "addinfer/design.hpp"
#include "addinfer/errors.hpp"
#include "addinfer/kernel.hpp"
#include "addinfer/smoother.hpp"

namespace addinfer {

enum class ComponentRole { smooth, parametric, omitted };

//! One additive component: smooth (order p, bandwidth h), a fixed polynomial of
//! the given degree, or absent.
struct ComponentSpec {
  ComponentRole role = ComponentRole::smooth;
  int p = 1;
  double h = 0.3;
  int degree = 1;

  int design_degree() const {
    switch (role) {
      case ComponentRole::smooth: return p;
      case ComponentRole::parametric: return degree;
      case ComponentRole::omitted: return 0;
    }
    return 0;
  }
};

struct ModelSpec {
  std::vector<ComponentSpec> components;
  KernelSpec kernel{};
  int grid_size = 401;
  double ridge_tol = 1e-8;
  int max_iter = 100;
  double tol = 1e-8;
  std::vector<int> update_order;

  std::size_t size() const { return components.size(); }

  SmootherConfig smoother_config(std::size_t j) const {
    return {components[j].p, components[j].h, kernel, grid_size, ridge_tol};
  }
};

inline ModelSpec make_model_spec(const std::vector<int>& p, const std::vector<double>& h, KernelSpec kernel = {}) {
  if (p.size() != h.size()) throw Error(ErrorCode::invalid_argument, "orders and bandwidths differ in length");
  ModelSpec spec;
  spec.kernel = kernel;
  for (std::size_t j = 0; j < p.size(); ++j) spec.components.push_back({ComponentRole::smooth, p[j], h[j], 1});
  return spec;
}

//! Restricted model for testing component d: drop it (degree < 0) or keep it as a polynomial of the given degree.
inline ModelSpec null_model(const ModelSpec& spec, std::size_t d, int degree = -1) {
  if (d >= spec.size()) throw Error(ErrorCode::invalid_argument, "tested component out of range");
  ModelSpec out = spec;
  if (degree < 0) {
    out.components[d].role = ComponentRole::omitted;
  } else {
    if (degree > 3) throw Error(ErrorCode::invalid_argument, "null polynomial degree must lie in 0..3");
    out.components[d].role = degree == 0 ? ComponentRole::omitted : ComponentRole::parametric;
    out.components[d].degree = degree;
  }
  return out;
}

/// Smoother and projection for one smooth component. The resolvent
/// A_j = (I - S_j)^{-1} - I with S_j = H_j - G_j is formed on first use and
/// cached, so models sharing a component share the factorization.
class SmoothComponent {
 public:
  SmoothComponent(const Eigen::VectorXd& x, const SmootherConfig& cfg, const Eigen::MatrixXd& basis, double rank_tol)
      : smoother_(x, cfg), proj_(make_projector(basis, rank_tol)) {}

  const LocalSmoother& smoother() const { return smoother_; }
  const Projector& projection() const { return proj_; }

  Eigen::VectorXd apply_modified(const Eigen::VectorXd& v) const { return smoother_.apply(v) - proj_.apply(v); }

  Eigen::MatrixXd modified_dense() const { return smoother_.dense() - proj_.dense(); }

  const Eigen::MatrixXd& resolvent() const {
    std::call_once(once_, [this] {
      const Eigen::Index n = smoother_.n();
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      Eigen::LLT<Eigen::MatrixXd> llt(I - modified_dense());
      if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-10))
        throw Error(ErrorCode::bandwidth_too_small,
                    "modified smoother has an eigenvalue at or above one (h=" + std::to_string(smoother_.config().h) + ")");
      Eigen::MatrixXd A = llt.solve(I);
      A.diagonal().array() -= 1.0;
      resolvent_ = 0.5 * (A + A.transpose());
    });
    return resolvent_;
  }

 private:
  LocalSmoother smoother_;
  Projector proj_;
  mutable std::once_flag once_;
  mutable Eigen::MatrixXd resolvent_;
};

//! Everything about a model that depends on covariates and bandwidths but not on y.
struct AdditiveOperators {
  ModelSpec spec;
  DesignSet design;
  Projector G;
  Eigen::MatrixXd X_pinv;
  std::vector<std::shared_ptr<const SmoothComponent>> smooth;
  std::vector<int> order;

  Eigen::Index n() const { return design.X_full.rows(); }
  std::size_t d() const { return spec.size(); }
  bool is_smooth(std::size_t j) const { return smooth[j] != nullptr; }
};

/// Builds the operators for `spec` on the scaled covariates. Smooth components
/// whose configuration matches one in `share` are reused rather than rebuilt.
inline AdditiveOperators build_operators(const Dataset& data, const ModelSpec& spec,
                                         const AdditiveOperators* share = nullptr) {
  if (static_cast<Eigen::Index>(spec.size()) != data.d())
    throw Error(ErrorCode::invalid_argument, "model has " + std::to_string(spec.size()) + " components for " +
                                                 std::to_string(data.d()) + " covariates");
  if (!(spec.tol > 0.0) || spec.max_iter < 1) throw Error(ErrorCode::invalid_argument, "invalid convergence controls");
  AdditiveOperators ops;
  ops.spec = spec;
  std::vector<int> degree;
  for (const auto& c : spec.components) degree.push_back(c.design_degree());
  ops.design = build_design(data.x, degree);
  ops.G = make_projector(ops.design.X_full, ops.design.rank_tol);
  ops.X_pinv = ops.design.X_full.completeOrthogonalDecomposition().pseudoInverse();
  ops.smooth.resize(spec.size());
  for (std::size_t j = 0; j < spec.size(); ++j) {
    if (spec.components[j].role != ComponentRole::smooth) continue;
    const SmootherConfig cfg = spec.smoother_config(j);
    if (share && j < share->smooth.size() && share->smooth[j] && share->n() == data.n()) {
      const auto& other = share->smooth[j]->smoother().config();
      if (other.p == cfg.p && other.h == cfg.h && other.kernel.family == cfg.kernel.family &&
          other.kernel.truncation_radius == cfg.kernel.truncation_radius && other.grid_size == cfg.grid_size &&
          other.ridge_tol == cfg.ridge_tol && share->smooth[j]->smoother().x() == data.x.col(static_cast<Eigen::Index>(j))) {
        ops.smooth[j] = share->smooth[j];
        continue;
      }
    }
    ops.smooth[j] = std::make_shared<const SmoothComponent>(data.x.col(static_cast<Eigen::Index>(j)), cfg,
                                                             ops.design.X_j[j], ops.design.rank_tol);
  }
  if (spec.update_order.empty()) {
    for (std::size_t j = 0; j < spec.size(); ++j)
      if (ops.smooth[j]) ops.order.push_back(static_cast<int>(j));
  } else {
    for (int j : spec.update_order) {
      if (j < 0 || j >= static_cast<int>(spec.size())) throw Error(ErrorCode::invalid_argument, "bad update order");
      if (ops.smooth[static_cast<std::size_t>(j)]) ops.order.push_back(j);
    }
  }
  return ops;
}

struct FitTimings {
  double setup_seconds = 0.0;
  double solve_seconds = 0.0;
};

struct AdditiveFit {
  double alpha0 = 0.0;
  std::vector<Eigen::VectorXd> g;
  std::vector<Eigen::VectorXd> m_star;
  std::vector<Eigen::VectorXd> m;
  std::vector<Eigen::VectorXd> smoother_input;
  Eigen::VectorXd coef;
  Eigen::VectorXd fitted;
  Eigen::VectorXd residuals;
  double rss = 0.0;
  Eigen::MatrixXd W;
  int iterations = 0;
  bool converged = false;
  double last_change = 0.0;
  std::vector<double> change_history;
  std::vector<std::string> warnings;
  FitTimings timings;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Fills alpha0, g, m, fitted, residuals and rss from the parametric vector and the m_star parts.
inline void assemble_fit(const AdditiveOperators& ops, const Eigen::VectorXd& y, const Eigen::VectorXd& param,
                         AdditiveFit& fit) {
  const std::size_t d = ops.d();
  const Eigen::Index n = ops.n();
  fit.coef = ops.X_pinv * param;
  fit.g.assign(d, Eigen::VectorXd::Zero(n));
  for (std::size_t c = 1; c < ops.design.columns.size(); ++c) {
    const auto col = ops.design.columns[c];
    const Eigen::VectorXd xk = ops.design.X_full.col(static_cast<Eigen::Index>(c));
    fit.g[static_cast<std::size_t>(col.covariate)] += fit.coef[static_cast<Eigen::Index>(c)] * (xk.array() - xk.mean()).matrix();
  }
  fit.alpha0 = param.mean();
  fit.m.resize(d);
  Eigen::VectorXd sum_star = Eigen::VectorXd::Zero(n);
  for (std::size_t j = 0; j < d; ++j) {
    fit.m[j] = fit.g[j] + fit.m_star[j];
    sum_star += fit.m_star[j];
  }
  fit.fitted = param + sum_star;
  fit.residuals = y - fit.fitted;
  fit.rss = fit.residuals.squaredNorm();
  fit.smoother_input.assign(d, Eigen::VectorXd());
  for (std::size_t j = 0; j < d; ++j)
    if (ops.is_smooth(j)) fit.smoother_input[j] = y - param - (sum_star - fit.m_star[j]);
  if (ops.design.concurvity())
    fit.warnings.push_back("exact concurvity: polynomial design has rank " + std::to_string(ops.design.rank) + " < " +
                           std::to_string(ops.design.X_full.cols()));
}

}  // namespace detail

/// Iterative fit. One sweep sets g = G(y - sum m*) and then, in update order,
/// m*_j = (H_j - G_j)(y - g - sum_{l != j} m*_l). Stops when every component's
/// relative sup-norm change falls below tol.
inline AdditiveFit fit_backfitting(const AdditiveOperators& ops, const Eigen::VectorXd& y) {
  const auto t0 = std::chrono::steady_clock::now();
  const Eigen::Index n = ops.n();
  if (y.size() != n) throw Error(ErrorCode::invalid_argument, "response length mismatch");
  const std::size_t d = ops.d();
  AdditiveFit fit;
  fit.m_star.assign(d, Eigen::VectorXd::Zero(n));
  Eigen::VectorXd total = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd param = ops.G.apply(y);
  for (int it = 1; it <= ops.spec.max_iter; ++it) {
    param = ops.G.apply(y - total);
    double change = 0.0;
    for (int jj : ops.order) {
      const auto j = static_cast<std::size_t>(jj);
      const Eigen::VectorXd& old = fit.m_star[j];
      Eigen::VectorXd next = ops.smooth[j]->apply_modified(y - param - (total - old));
      const double rel = (next - old).lpNorm<Eigen::Infinity>() / (1.0 + old.lpNorm<Eigen::Infinity>());
      change = std::max(change, rel);
      total += next - old;
      fit.m_star[j] = std::move(next);
    }
    fit.change_history.push_back(change);
    fit.iterations = it;
    fit.last_change = change;
    if (change < ops.spec.tol) {
      fit.converged = true;
      break;
    }
  }
  param = ops.G.apply(y - total);
  if (!fit.converged)
    fit.warnings.push_back("backfitting did not converge after " + std::to_string(fit.iterations) +
                           " iterations (last change " + std::to_string(fit.last_change) + ")");
  detail::assemble_fit(ops, y, param, fit);
  fit.timings.solve_seconds = detail::seconds_since(t0);
  return fit;
}

/// Closed-form linear maps of a model: the hat matrix W = G + G^perp A V with
/// A = sum_j A_j and V = (I + G^perp A)^{-1} G^perp, so that m*_j = A_j V y.
struct LinearFit {
  std::shared_ptr<const AdditiveOperators> ops;
  Eigen::MatrixXd W;
  Eigen::MatrixXd V;
  Eigen::MatrixXd param_map;

  //! Matrix taking y to m*_j.
  Eigen::MatrixXd mstar_matrix(std::size_t j) const {
    if (!ops->is_smooth(j)) return Eigen::MatrixXd::Zero(ops->n(), ops->n());
    return ops->smooth[j]->resolvent() * V;
  }

  //! Matrix taking y to g_j.
  Eigen::MatrixXd g_matrix(std::size_t j) const {
    const Eigen::MatrixXd coef = ops->X_pinv * param_map;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(ops->n(), ops->n());
    for (std::size_t c = 1; c < ops->design.columns.size(); ++c) {
      if (ops->design.columns[c].covariate != static_cast<int>(j)) continue;
      const Eigen::VectorXd xk = ops->design.X_full.col(static_cast<Eigen::Index>(c));
      out.noalias() += (xk.array() - xk.mean()).matrix() * coef.row(static_cast<Eigen::Index>(c));
    }
    return out;
  }

  //! Matrix taking y to the component total m_j = g_j + m*_j.
  Eigen::MatrixXd component_matrix(std::size_t j) const { return g_matrix(j) + mstar_matrix(j); }
};

inline LinearFit linear_fit(std::shared_ptr<const AdditiveOperators> ops) {
  const Eigen::Index n = ops->n();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd G = ops->G.dense();
  const Eigen::MatrixXd Gp = I - G;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t j = 0; j < ops->d(); ++j)
    if (ops->is_smooth(j)) A += ops->smooth[j]->resolvent();
  LinearFit lf;
  Eigen::MatrixXd T = I;
  T.noalias() += Gp * A;
  lf.V = T.partialPivLu().solve(Gp);
  const Eigen::MatrixXd AV = A * lf.V;
  lf.W = G;
  lf.W.noalias() += Gp * AV;
  lf.param_map = G - G * AV;
  lf.ops = std::move(ops);
  return lf;
}

//! Closed-form fit from precomputed linear maps.
inline AdditiveFit fit_from_linear(const LinearFit& lf, const Eigen::VectorXd& y, bool keep_w = true) {
  const auto& ops = *lf.ops;
  if (y.size() != ops.n()) throw Error(ErrorCode::invalid_argument, "response length mismatch");
  AdditiveFit fit;
  const Eigen::VectorXd vy = lf.V * y;
  fit.m_star.assign(ops.d(), Eigen::VectorXd::Zero(ops.n()));
  for (std::size_t j = 0; j < ops.d(); ++j)
    if (ops.is_smooth(j)) fit.m_star[j] = ops.smooth[j]->resolvent() * vy;
  const Eigen::VectorXd param = lf.param_map * y;
  detail::assemble_fit(ops, y, param, fit);
  fit.converged = true;
  if (keep_w) fit.W = lf.W;
  return fit;
}

inline AdditiveFit fit_explicit(std::shared_ptr<const AdditiveOperators> ops, const Eigen::VectorXd& y) {
  const auto t0 = std::chrono::steady_clock::now();
  const LinearFit lf = linear_fit(std::move(ops));
  const double setup = detail::seconds_since(t0);
  AdditiveFit fit = fit_from_linear(lf, y);
  fit.timings.setup_seconds = setup;
  fit.timings.solve_seconds = detail::seconds_since(t0);
  return fit;
}

inline AdditiveFit fit_backfitting(const Dataset& data, const ModelSpec& spec) {
  const auto t0 = std::chrono::steady_clock::now();
  const AdditiveOperators ops = build_operators(data, spec);
  const double setup = detail::seconds_since(t0);
  AdditiveFit fit = fit_backfitting(ops, data.y);
  fit.timings.setup_seconds = setup;
  return fit;
}

inline AdditiveFit fit_explicit(const Dataset& data, const ModelSpec& spec) {
  return fit_explicit(std::make_shared<const AdditiveOperators>(build_operators(data, spec)), data.y);
}

//! Hat matrices of the full model and of the model restricted at component d.
struct HatPair {
  LinearFit full;
  LinearFit reduced;
};

inline HatPair hat_matrices(const Dataset& data, const ModelSpec& spec, std::size_t d, int null_degree = -1) {
  auto full = std::make_shared<const AdditiveOperators>(build_operators(data, spec));
  auto reduced = std::make_shared<const AdditiveOperators>(build_operators(data, null_model(spec, d, null_degree), full.get()));
  return {linear_fit(full), linear_fit(reduced)};
}

/// Residual of the stacked normal equations m_j + H_j sum_{l != j} m_l = H_j (y - alpha0)
/// over smooth components, relative to |y|.
inline double normal_equation_residual(const AdditiveOperators& ops, const AdditiveFit& fit, const Eigen::VectorXd& y) {
  Eigen::VectorXd total = Eigen::VectorXd::Zero(ops.n());
  for (const auto& mj : fit.m) total += mj;
  const Eigen::VectorXd centered = (y.array() - fit.alpha0).matrix();
  double ss = 0.0;
  for (std::size_t j = 0; j < ops.d(); ++j) {
    if (!ops.is_smooth(j)) continue;
    const auto& H = ops.smooth[j]->smoother();
    const Eigen::VectorXd r = fit.m[j] + H.apply(total - fit.m[j]) - H.apply(centered);
    ss += r.squaredNorm();
  }
  return std::sqrt(ss) / y.norm();
}

//! Component curves at scaled evaluation points.
struct ComponentCurves {
  Eigen::VectorXd u;
  std::vector<Eigen::VectorXd> g;
  std::vector<Eigen::VectorXd> m_star;
  std::vector<Eigen::VectorXd> m;
};

inline ComponentCurves component_curves(const AdditiveOperators& ops, const AdditiveFit& fit, const Eigen::VectorXd& u) {
  ComponentCurves cc;
  cc.u = u;
  const std::size_t d = ops.d();
  cc.g.assign(d, Eigen::VectorXd::Zero(u.size()));
  cc.m_star.assign(d, Eigen::VectorXd::Zero(u.size()));
  for (std::size_t c = 1; c < ops.design.columns.size(); ++c) {
    const auto col = ops.design.columns[c];
    const double mean = ops.design.X_full.col(static_cast<Eigen::Index>(c)).mean();
    cc.g[static_cast<std::size_t>(col.covariate)] +=
        fit.coef[static_cast<Eigen::Index>(c)] * (u.array().pow(col.power) - mean).matrix();
  }
  for (std::size_t j = 0; j < d; ++j) {
    if (!ops.is_smooth(j)) continue;
    const auto& comp = *ops.smooth[j];
    const Eigen::VectorXd& r = fit.smoother_input[j];
    const Eigen::MatrixXd& B = ops.design.X_j[j];
    const Eigen::VectorXd b = B.completeOrthogonalDecomposition().solve(comp.projection().apply(r));
    Eigen::VectorXd poly = Eigen::VectorXd::Zero(u.size());
    for (Eigen::Index k = 0; k < b.size(); ++k) poly += b[k] * u.array().pow(static_cast<double>(k)).matrix();
    cc.m_star[j] = comp.smoother().evaluate(r, u) - poly;
  }
  cc.m.resize(d);
  for (std::size_t j = 0; j < d; ++j) cc.m[j] = cc.g[j] + cc.m_star[j];
  return cc;
}

//! Local polynomial coefficient curves beta_jr(z) of each component's partial residual.
struct GridEstimates {
  Eigen::VectorXd z;
  std::vector<Eigen::MatrixXd> beta;
};

inline GridEstimates grid_estimates(const AdditiveOperators& ops, const AdditiveFit& fit, const Eigen::VectorXd& z) {
  GridEstimates ge;
  ge.z = z;
  for (std::size_t j = 0; j < ops.d(); ++j) {
    if (!ops.is_smooth(j)) {
      ge.beta.emplace_back();
      continue;
    }
    const auto& cfg = ops.smooth[j]->smoother().config();
    const Eigen::VectorXd& x = ops.smooth[j]->smoother().x();
    const Eigen::VectorXd partial = fit.residuals + fit.m_star[j];
    Eigen::MatrixXd B(z.size(), cfg.p + 1);
    for (Eigen::Index q = 0; q < z.size(); ++q) {
      try {
        B.row(q) = local_poly_fit(x, partial, z[q], cfg.p, cfg.h, cfg.kernel).transpose();
      } catch (const Error& e) {
        if (e.code() != ErrorCode::insufficient_local_data) throw;
        B.row(q).setConstant(std::numeric_limits<double>::quiet_NaN());
      }
    }
    ge.beta.push_back(std::move(B));
  }
  return ge;
}

}  // namespace addinfer
