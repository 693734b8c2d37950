#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "addinfer/errors.hpp"

namespace addinfer {

//! Response plus covariates; each covariate is mapped affinely onto [0, 1]
//! using its observed range. Bandwidths elsewhere are in the scaled units.
struct Dataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd raw;
  Eigen::MatrixXd x;
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<std::string> names;
  std::string response = "y";

  Eigen::Index n() const { return y.size(); }
  Eigen::Index d() const { return raw.cols(); }
  double range(Eigen::Index j) const { return hi[static_cast<std::size_t>(j)] - lo[static_cast<std::size_t>(j)]; }
  double to_scaled(Eigen::Index j, double v) const { return (v - lo[static_cast<std::size_t>(j)]) / range(j); }
  double to_raw(Eigen::Index j, double u) const { return lo[static_cast<std::size_t>(j)] + u * range(j); }
};

inline Dataset make_dataset(Eigen::VectorXd y, Eigen::MatrixXd raw, std::vector<std::string> names = {}) {
  if (raw.rows() != y.size())
    throw Error(ErrorCode::invalid_argument, "response and covariates differ in length");
  if (y.size() < 2) throw Error(ErrorCode::invalid_argument, "need at least two observations");
  if (!y.allFinite() || !raw.allFinite())
    throw Error(ErrorCode::invalid_argument, "data contain non-finite values");
  if (names.empty())
    for (Eigen::Index j = 0; j < raw.cols(); ++j) names.push_back("x" + std::to_string(j + 1));
  if (static_cast<Eigen::Index>(names.size()) != raw.cols())
    throw Error(ErrorCode::invalid_argument, "covariate name count mismatch");
  Dataset ds;
  ds.y = std::move(y);
  ds.raw = std::move(raw);
  ds.names = std::move(names);
  ds.x.resize(ds.raw.rows(), ds.raw.cols());
  for (Eigen::Index j = 0; j < ds.raw.cols(); ++j) {
    const double lo = ds.raw.col(j).minCoeff();
    const double hi = ds.raw.col(j).maxCoeff();
    if (!(hi > lo)) throw Error(ErrorCode::degenerate_design, "covariate '" + ds.names[static_cast<std::size_t>(j)] + "' is constant");
    ds.lo.push_back(lo);
    ds.hi.push_back(hi);
    ds.x.col(j) = (ds.raw.col(j).array() - lo) / (hi - lo);
  }
  return ds;
}

//! Same covariates, new response. Used by the bootstrap and by tests.
inline Dataset with_response(const Dataset& ds, Eigen::VectorXd y) {
  if (y.size() != ds.n()) throw Error(ErrorCode::invalid_argument, "response length mismatch");
  Dataset out = ds;
  out.y = std::move(y);
  return out;
}

}  // namespace addinfer
