// addinfer: fit additive models, test components, select bandwidths and run
// the simulation experiments from the command line.

#include <CLI11.hpp>

#include <boost/version.hpp>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "addinfer/addinfer.hpp"

#ifndef ADDINFER_VERSION
#define ADDINFER_VERSION "unknown"
#endif

using namespace addinfer;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct DataOptions {
  std::string input;
  std::string response;
  std::vector<std::string> covariates;
  std::vector<std::string> log_columns;
};

struct ModelOptions {
  std::vector<int> order{1};
  std::string bandwidths = "0.3";
  std::string kernel = "gaussian";
  int grid_size = 401;
  double cv_min = 0.02;
  double cv_max = 1.0;
  int cv_count = 30;
  int cv_cycles = 10;
  std::vector<double> drop_outliers;
};

struct Global {
  unsigned workers = default_worker_count();
  bool json_errors = false;
};

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::size_t k = 0;
  for (const auto& item : split(s)) out.push_back(parse_number(item, ++k, what));
  if (out.empty()) throw Error(ErrorCode::invalid_argument, what + " is empty");
  return out;
}

template <class T>
std::vector<T> per_covariate(const std::vector<T>& v, std::size_t d, const std::string& what) {
  if (v.size() == 1) return std::vector<T>(d, v[0]);
  if (v.size() != d)
    throw Error(ErrorCode::invalid_argument, what + ": expected 1 or " + std::to_string(d) + " values, got " + std::to_string(v.size()));
  return v;
}

json manifest(const std::string& command, const json& config, Clock::time_point t0, unsigned workers) {
  json m;
  m["tool"] = "addinfer";
  m["version"] = ADDINFER_VERSION;
  m["libraries"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                  std::to_string(EIGEN_MINOR_VERSION)},
                    {"boost", BOOST_LIB_VERSION},
                    {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                          std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                          std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  m["command"] = command;
  m["config"] = config;
  m["workers"] = workers;
  m["wall_seconds"] = std::chrono::duration<double>(Clock::now() - t0).count();
  return m;
}

void emit_json(const json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::invalid_argument, "cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::invalid_argument, "cannot write '" + path + "'");
  return out;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::invalid_argument, "cannot create '" + dir + "': " + ec.message());
}

Dataset load_dataset(const DataOptions& o) {
  if (o.covariates.empty()) throw Error(ErrorCode::invalid_argument, "no covariates given");
  const CsvTable t = read_csv_file(o.input);
  std::vector<std::string> cols{o.response};
  cols.insert(cols.end(), o.covariates.begin(), o.covariates.end());
  Eigen::MatrixXd M = numeric_columns(t, cols);
  for (const auto& name : o.log_columns) {
    const auto it = std::find(cols.begin(), cols.end(), name);
    if (it == cols.end()) throw Error(ErrorCode::invalid_argument, "--log column '" + name + "' is not in the model");
    const auto c = static_cast<Eigen::Index>(it - cols.begin());
    if (!(M.col(c).minCoeff() > 0.0)) throw Error(ErrorCode::invalid_argument, "--log column '" + name + "' has non-positive values");
    M.col(c) = M.col(c).array().log().matrix();
  }
  return make_dataset(M.col(0), M.rightCols(M.cols() - 1), o.covariates);
}

Dataset subset_rows(const Dataset& ds, const std::vector<Eigen::Index>& keep) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(keep.size()));
  Eigen::MatrixXd X(static_cast<Eigen::Index>(keep.size()), ds.d());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    y[static_cast<Eigen::Index>(i)] = ds.y[keep[i]];
    X.row(static_cast<Eigen::Index>(i)) = ds.raw.row(keep[i]);
  }
  return make_dataset(std::move(y), std::move(X), ds.names);
}

BandwidthSearch search_from(const ModelOptions& o) {
  BandwidthSearch s;
  s.grid = log_grid(o.cv_min, o.cv_max, o.cv_count);
  s.max_cycles = o.cv_cycles;
  return s;
}

json cv_json(const CvResult& cv, const Dataset& data) {
  json j;
  j["h"] = cv.h;
  std::vector<double> raw;
  for (std::size_t k = 0; k < cv.h.size(); ++k) raw.push_back(cv.h[k] * data.range(static_cast<Eigen::Index>(k)));
  j["h_raw"] = raw;
  j["cycles"] = cv.cycles;
  j["converged"] = cv.converged;
  j["history"] = cv.history;
  return j;
}

/// Builds the model for `data`. Automatic bandwidths run CV first, testing
/// bandwidths use the per-covariate rate rule; with
/// outlier trimming the model is fitted, rows outside [low, high] are dropped
/// and CV is repeated on the retained rows.
ModelSpec resolve_model(Dataset& data, const ModelOptions& o, json& record) {
  const std::size_t d = static_cast<std::size_t>(data.d());
  const auto p = per_covariate(o.order, d, "--order");
  const KernelSpec kernel{parse_kernel_family(o.kernel)};
  const bool automatic = o.bandwidths == "auto";
  auto select = [&](const Dataset& ds) {
    ModelSpec spec = make_model_spec(p, std::vector<double>(d, 0.3), kernel);
    spec.grid_size = o.grid_size;
    if (o.bandwidths == "testing") {
      for (std::size_t j = 0; j < d; ++j)
        spec.components[j].h = testing_bandwidth(sample_sd(ds.x.col(static_cast<Eigen::Index>(j))), ds.n(), p[j]);
      return spec;
    }
    if (!automatic) {
      const auto h = per_covariate(parse_list(o.bandwidths, "--bandwidths"), d, "--bandwidths");
      for (std::size_t j = 0; j < d; ++j) spec.components[j].h = h[j];
      return spec;
    }
    const CvResult cv = select_bandwidths_cv(ds, spec, search_from(o));
    record["cv"].push_back(cv_json(cv, ds));
    for (std::size_t j = 0; j < d; ++j) spec.components[j].h = cv.h[j];
    return spec;
  };
  ModelSpec spec = select(data);
  if (!o.drop_outliers.empty()) {
    if (o.drop_outliers.size() != 2 || !(o.drop_outliers[0] < o.drop_outliers[1]))
      throw Error(ErrorCode::invalid_argument, "--drop-outliers needs LOW,HIGH with LOW < HIGH");
    const AdditiveFit fit = fit_backfitting(data, spec);
    std::vector<Eigen::Index> keep;
    std::vector<Eigen::Index> dropped;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      const double r = fit.residuals[i];
      (r < o.drop_outliers[0] || r > o.drop_outliers[1] ? dropped : keep).push_back(i);
    }
    json rows = json::array();
    for (auto i : dropped) rows.push_back(i + 1);
    record["dropped_rows"] = rows;
    if (!dropped.empty()) {
      data = subset_rows(data, keep);
      spec = select(data);
    }
  }
  std::vector<double> h;
  for (const auto& c : spec.components) h.push_back(c.h);
  record["h"] = h;
  record["order"] = p;
  record["kernel"] = o.kernel;
  record["n"] = data.n();
  return spec;
}

json data_config(const DataOptions& o) {
  return {{"input", o.input}, {"response", o.response}, {"covariates", o.covariates}, {"log", o.log_columns}};
}

void add_data_options(CLI::App* app, DataOptions& o) {
  app->add_option("-i,--input", o.input, "CSV file with a header row")->required();
  app->add_option("-y,--response", o.response, "response column")->required();
  app->add_option("-x,--covariates", o.covariates, "covariate columns")->required()->delimiter(',');
  app->add_option("--log", o.log_columns, "columns to log-transform before fitting")->delimiter(',');
}

void add_model_options(CLI::App* app, ModelOptions& o) {
  app->add_option("-p,--order", o.order, "local polynomial order, one value or one per covariate")->delimiter(',');
  app->add_option("--bandwidths", o.bandwidths, "bandwidths on the [0,1] scale, comma separated, 'auto' (CV) or 'testing' (S_X n^-2/(8p+9))");
  app->add_option("--kernel", o.kernel, "gaussian, epanechnikov or uniform");
  app->add_option("--grid-size", o.grid_size, "quadrature nodes on [0,1]");
  app->add_option("--cv-min", o.cv_min, "smallest CV bandwidth");
  app->add_option("--cv-max", o.cv_max, "largest CV bandwidth");
  app->add_option("--cv-count", o.cv_count, "CV grid points");
  app->add_option("--cv-cycles", o.cv_cycles, "maximum CV cycles");
  app->add_option("--drop-outliers", o.drop_outliers, "refit without rows whose residual lies outside LOW,HIGH")
      ->delimiter(',')
      ->expected(2);
}

int null_degree(const std::string& s) {
  if (s == "omit") return -1;
  if (s == "linear") return 1;
  if (s.rfind("polynomial:", 0) == 0) {
    const int k = static_cast<int>(parse_number(s.substr(11), 1, "--null"));
    if (k < 0 || k > 3) throw Error(ErrorCode::invalid_argument, "--null polynomial degree must lie in 0..3");
    return k;
  }
  throw Error(ErrorCode::invalid_argument, "--null must be omit, linear or polynomial:k");
}

void dump_smoothers(const Dataset& data, const ModelSpec& spec, const std::string& path) {
  std::vector<std::size_t> smooth;
  for (std::size_t j = 0; j < spec.size(); ++j)
    if (spec.components[j].role == ComponentRole::smooth) smooth.push_back(j);
  const fs::path base(path);
  for (std::size_t j : smooth) {
    fs::path out = base;
    if (smooth.size() > 1) out.replace_filename(base.stem().string() + "_" + data.names[j] + base.extension().string());
    const auto& c = spec.components[j];
    const SmootherMatrix sm = build_smoother(data.x.col(static_cast<Eigen::Index>(j)),
                                             {c.p, c.h, spec.kernel, spec.grid_size, spec.ridge_tol}, static_cast<int>(j));
    write_matrix_csv(out.string(), sm.H);
  }
}

int cmd_fit(const DataOptions& dopt, const ModelOptions& mopt, const std::string& out, const std::string& curves,
            int points, const std::string& dump, const Global& g) {
  const auto t0 = Clock::now();
  Dataset data = load_dataset(dopt);
  json record;
  const ModelSpec spec = resolve_model(data, mopt, record);
  if (!dump.empty()) dump_smoothers(data, spec, dump);
  const AdditiveOperators ops = build_operators(data, spec);
  const AdditiveFit fit = fit_backfitting(ops, data.y);
  if (!curves.empty()) {
    const Eigen::VectorXd u = Eigen::VectorXd::LinSpaced(points, 0.0, 1.0);
    const ComponentCurves cc = component_curves(ops, fit, u);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t j = 0; j < cc.m.size(); ++j)
      for (Eigen::Index k = 0; k < u.size(); ++k)
        rows.push_back({data.names[j], format_number(data.to_raw(static_cast<Eigen::Index>(j), u[k])), format_number(u[k]),
                        format_number(cc.m[j][k]), format_number(cc.m_star[j][k]), format_number(cc.g[j][k])});
    auto f = open_out(curves);
    write_csv(f, {"covariate", "x", "u", "m", "m_star", "g"}, rows);
  }
  json cfg = data_config(dopt);
  cfg["model"] = record;
  json j;
  j["fit"] = to_json(fit, data.names);
  j["normal_equation_residual"] = normal_equation_residual(ops, fit, data.y);
  j["manifest"] = manifest("fit", cfg, t0, g.workers);
  emit_json(j, out);
  return 0;
}

struct TestOptions {
  std::string tested;
  std::string null_form = "omit";
  int B = 200;
  std::uint64_t seed = 1;
  double loss_s = 0.0;
  double loss_t = 1.0;
  std::string out;
  std::string null_samples;
};

int cmd_test(const DataOptions& dopt, const ModelOptions& mopt, const TestOptions& t, const Global& g) {
  const auto t0 = Clock::now();
  Dataset data = load_dataset(dopt);
  const auto it = std::find(data.names.begin(), data.names.end(), t.tested);
  if (it == data.names.end()) throw Error(ErrorCode::invalid_argument, "--tested '" + t.tested + "' is not a covariate");
  const auto d = static_cast<std::size_t>(it - data.names.begin());
  const int degree = null_degree(t.null_form);
  if (t.B < 0) throw Error(ErrorCode::invalid_argument, "-B must be non-negative");
  json record;
  const ModelSpec spec = resolve_model(data, mopt, record);
  const LossSpec loss{t.loss_s, t.loss_t};
  const TestSetup ts = prepare_test(data, spec, d, degree);
  TestReport rep = run_test(ts, data.y, loss);
  if (t.B > 0) {
    BootstrapPlan plan;
    plan.B = t.B;
    plan.seed = t.seed;
    plan.loss = loss;
    plan.workers = g.workers;
    const BootstrapResult br = conditional_bootstrap(ts, data.y, plan);
    attach_bootstrap(rep, br);
    if (!t.null_samples.empty()) {
      std::vector<std::vector<std::string>> rows;
      for (std::size_t s = 0; s < statistic_count; ++s)
        for (std::size_t b = 0; b < br.null_samples[s].size(); ++b)
          rows.push_back({std::to_string(b + 1), statistic_names[s], format_number(br.null_samples[s][b])});
      auto f = open_out(t.null_samples);
      write_csv(f, {"replicate", "statistic", "value"}, rows);
    }
  }
  json cfg = data_config(dopt);
  cfg["model"] = record;
  cfg["tested"] = t.tested;
  cfg["null"] = t.null_form;
  cfg["B"] = t.B;
  cfg["seed"] = t.seed;
  json j;
  j["report"] = to_json(rep, data.names);
  j["manifest"] = manifest("test", cfg, t0, g.workers);
  emit_json(j, t.out);
  return 0;
}

int cmd_bandwidth(const DataOptions& dopt, ModelOptions mopt, const std::string& out, const std::string& curves,
                  const Global& g) {
  const auto t0 = Clock::now();
  Dataset data = load_dataset(dopt);
  const std::size_t d = static_cast<std::size_t>(data.d());
  const auto p = per_covariate(mopt.order, d, "--order");
  ModelSpec spec = make_model_spec(p, std::vector<double>(d, 0.3), KernelSpec{parse_kernel_family(mopt.kernel)});
  spec.grid_size = mopt.grid_size;
  const CvResult cv = select_bandwidths_cv(data, spec, search_from(mopt));
  if (!curves.empty()) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t c = 0; c < cv.selections.size(); ++c)
      for (std::size_t j = 0; j < cv.selections[c].size(); ++j) {
        const AiccSelection& s = cv.selections[c][j];
        for (std::size_t k = 0; k < s.grid.size(); ++k)
          rows.push_back({std::to_string(c + 1), data.names[j], format_number(s.grid[k]), format_number(s.values[k])});
      }
    auto f = open_out(curves);
    write_csv(f, {"cycle", "covariate", "h", "aicc"}, rows);
  }
  json cfg = data_config(dopt);
  cfg["order"] = p;
  cfg["grid"] = {{"min", mopt.cv_min}, {"max", mopt.cv_max}, {"count", mopt.cv_count}};
  json j;
  j["bandwidths"] = cv_json(cv, data);
  j["testing_bandwidth_raw"] = [&] {
    std::vector<double> h;
    for (Eigen::Index k = 0; k < data.d(); ++k)
      h.push_back(testing_bandwidth(sample_sd(data.raw.col(k)), data.n(), p[static_cast<std::size_t>(k)]));
    return h;
  }();
  j["manifest"] = manifest("bandwidth", cfg, t0, g.workers);
  emit_json(j, out);
  return 0;
}

struct EigenOptions {
  std::string input;
  std::string covariate;
  int n = 100;
  std::uint64_t seed = 1;
  int order = 1;
  std::string bandwidths = "0.02,0.05,0.1,0.2,0.4";
  std::string kernel = "gaussian";
  std::string out;
};

int cmd_eigen(const EigenOptions& o) {
  Eigen::VectorXd x;
  if (!o.input.empty()) {
    if (o.covariate.empty()) throw Error(ErrorCode::invalid_argument, "--covariate is required with --input");
    x = numeric_columns(read_csv_file(o.input), {o.covariate}).col(0);
  } else {
    if (o.n < 2) throw Error(ErrorCode::invalid_argument, "--n must be at least 2");
    Engine eng = make_stream(o.seed, 0);
    std::uniform_real_distribution<double> u;
    x.resize(o.n);
    for (auto& v : x) v = u(eng);
  }
  const Dataset ds = make_dataset(Eigen::VectorXd::Zero(x.size()), x);
  const Eigen::VectorXd xs = ds.x.col(0);
  Eigen::MatrixXd P(xs.size(), o.order + 1);
  for (int k = 0; k <= o.order; ++k) P.col(k) = xs.array().pow(k).matrix();
  const Eigen::MatrixXd G = projection(P);
  std::vector<std::vector<std::string>> rows;
  for (double h : parse_list(o.bandwidths, "--bandwidths")) {
    const SmootherMatrix sm = build_smoother(xs, {o.order, h, KernelSpec{parse_kernel_family(o.kernel)}});
    const Eigen::VectorXd a = smoother_eigs(sm);
    const Eigen::VectorXd b = modified_smoother_eigs(sm, G);
    for (Eigen::Index k = 0; k < a.size(); ++k)
      rows.push_back({format_number(h), std::to_string(k + 1), format_number(a[k]), format_number(b[k])});
  }
  if (o.out.empty() || o.out == "-") {
    write_csv(std::cout, {"h", "index", "eig_H", "eig_modified"}, rows);
  } else {
    auto f = open_out(o.out);
    write_csv(f, {"h", "index", "eig_H", "eig_modified"}, rows);
  }
  return 0;
}

struct SimDataOptions {
  int n = 100;
  double theta = 0.0;
  double beta = 0.0;
  std::string error = "normal";
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_simulate_data(const SimDataOptions& o) {
  const Dataset ds = gen_sim_data({o.n, o.theta, o.beta, parse_error_dist(o.error), o.seed});
  std::vector<std::vector<std::string>> rows;
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    std::vector<std::string> r{format_number(ds.y[i])};
    for (Eigen::Index j = 0; j < ds.d(); ++j) r.push_back(format_number(ds.raw(i, j)));
    rows.push_back(std::move(r));
  }
  std::vector<std::string> header{"y"};
  header.insert(header.end(), ds.names.begin(), ds.names.end());
  if (o.out.empty() || o.out == "-") {
    write_csv(std::cout, header, rows);
  } else {
    auto f = open_out(o.out);
    write_csv(f, header, rows);
  }
  return 0;
}

struct WilksOptions {
  int n = 100;
  int n_sim = 1000;
  std::string h_opt = "auto";
  int pilots = 10;
  std::uint64_t pilot_seed = 999;
  std::uint64_t seed = 1;
  std::string error = "normal";
  int order = 1;
  double loss_s = 0.0;
  double loss_t = 1.0;
  std::string out_dir = "wilks";
};

int cmd_simulate_wilks(const WilksOptions& o, const Global& g) {
  const auto t0 = Clock::now();
  ensure_dir(o.out_dir);
  WilksConfig cfg;
  cfg.n = o.n;
  cfg.n_sim = o.n_sim;
  cfg.p = o.order;
  cfg.error = parse_error_dist(o.error);
  cfg.loss = {o.loss_s, o.loss_t};
  cfg.seed = o.seed;
  cfg.workers = g.workers;
  cfg.h_opt = o.h_opt == "auto" ? pilot_bandwidths(o.n, o.pilots, o.pilot_seed, o.order, cfg.error, {}, g.workers)
                                : per_covariate(parse_list(o.h_opt, "--h-opt"), 4, "--h-opt");
  const WilksResult res = wilks_experiment(cfg);
  {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t k = 0; k < res.variations.size(); ++k) {
      const auto& v = res.variations[k];
      for (std::size_t i = 0; i < v.draws.size(); ++i) {
        const NullDraw& dr = v.draws[i];
        const double vals[4] = {dr.scaled_glr, dr.scaled_lf, dr.F_lambda, dr.F_q};
        for (std::size_t s = 0; s < 4; ++s)
          rows.push_back({std::to_string(k + 1), v.group, format_number(v.h1), format_number(v.beta), std::to_string(i + 1),
                          wilks_statistic_names[s], dr.ok ? format_number(vals[s]) : "NA"});
      }
    }
    auto f = open_out((fs::path(o.out_dir) / "draws.csv").string());
    write_csv(f, {"variation", "group", "h1", "beta", "replicate", "statistic", "value"}, rows);
  }
  for (std::size_t s = 0; s < 4; ++s) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t k = 0; k < res.variations.size(); ++k) {
      const auto& v = res.variations[k];
      for (Eigen::Index i = 0; i < res.abscissa[s].size(); ++i)
        rows.push_back({std::to_string(k + 1), v.group, format_number(v.h1), format_number(v.beta),
                        format_number(res.abscissa[s][i]), format_number(res.density[k][s][i])});
    }
    auto f = open_out((fs::path(o.out_dir) / ("density_" + std::string(wilks_statistic_names[s]) + ".csv")).string());
    write_csv(f, {"variation", "group", "h1", "beta", "x", "density"}, rows);
  }
  json summary = json::array();
  for (std::size_t k = 0; k < res.variations.size(); ++k) {
    const auto& v = res.variations[k];
    json e{{"variation", k + 1}, {"group", v.group}, {"h1", v.h1}, {"beta", v.beta}};
    for (std::size_t s = 0; s < 4; ++s) {
      const auto x = v.sample(s);
      double m = 0.0;
      for (double a : x) m += a;
      e[std::string("mean_") + wilks_statistic_names[s]] = x.empty() ? json(nullptr) : json(m / static_cast<double>(x.size()));
    }
    e["replicates_used"] = v.sample(0).size();
    summary.push_back(e);
  }
  json cfgj{{"n", o.n}, {"n_sim", o.n_sim}, {"h_opt", cfg.h_opt}, {"h_opt_source", o.h_opt == "auto" ? "pilot_cv" : "given"},
            {"pilots", o.pilots}, {"pilot_seed", o.pilot_seed}, {"seed", o.seed}, {"error", o.error}, {"order", o.order},
            {"loss", {{"s", o.loss_s}, {"t", o.loss_t}}}};
  json j{{"summary", summary}, {"manifest", manifest("simulate-wilks", cfgj, t0, g.workers)}};
  emit_json(j, (fs::path(o.out_dir) / "manifest.json").string());
  return 0;
}

struct PowerOptions {
  int n = 100;
  std::string thetas = "0,0.2,0.4,0.6,0.8,1";
  std::string alphas = "0.05,0.01";
  int n_sim = 500;
  int B = 2000;
  std::string rule = "testing";
  std::string h;
  std::string error = "normal";
  int order = 1;
  double loss_s = 1.0;
  double loss_t = 1.0;
  std::uint64_t seed = 1;
  std::string out_dir = "power";
};

int cmd_simulate_power(const PowerOptions& o, const Global& g) {
  const auto t0 = Clock::now();
  ensure_dir(o.out_dir);
  PowerConfig cfg;
  cfg.n = o.n;
  cfg.thetas = parse_list(o.thetas, "--thetas");
  cfg.alphas = parse_list(o.alphas, "--alphas");
  cfg.n_sim = o.n_sim;
  cfg.B = o.B;
  cfg.p = o.order;
  cfg.error = parse_error_dist(o.error);
  cfg.loss = {o.loss_s, o.loss_t};
  cfg.seed = o.seed;
  cfg.workers = g.workers;
  if (o.rule == "testing") {
    cfg.rule = BandwidthRule::testing_rate;
  } else if (o.rule == "fixed") {
    cfg.rule = BandwidthRule::fixed;
    cfg.fixed_h = per_covariate(parse_list(o.h, "--fixed-h"), 4, "--fixed-h");
  } else {
    throw Error(ErrorCode::invalid_argument, "--rule must be testing or fixed");
  }
  const PowerResult res = power_curve(cfg);
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& c : res.cells)
      rows.push_back({format_number(c.theta), format_number(c.alpha), statistic_names[c.statistic], format_number(c.rejection),
                      std::to_string(c.used), std::to_string(c.failures)});
    auto f = open_out((fs::path(o.out_dir) / "rejection.csv").string());
    write_csv(f, {"theta", "alpha", "statistic", "rejection", "used", "failures"}, rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t t = 0; t < res.p_values.size(); ++t)
      for (std::size_t i = 0; i < res.p_values[t].size(); ++i)
        for (std::size_t s = 0; s < statistic_count; ++s)
          rows.push_back({format_number(cfg.thetas[t]), std::to_string(i + 1), statistic_names[s],
                          format_number(res.p_values[t][i][s])});
    auto f = open_out((fs::path(o.out_dir) / "pvalues.csv").string());
    write_csv(f, {"theta", "replicate", "statistic", "p_value"}, rows);
  }
  json cfgj{{"n", o.n}, {"thetas", cfg.thetas}, {"alphas", cfg.alphas}, {"n_sim", o.n_sim}, {"B", o.B}, {"rule", o.rule},
            {"h", cfg.fixed_h}, {"error", o.error}, {"order", o.order}, {"loss", {{"s", o.loss_s}, {"t", o.loss_t}}},
            {"seed", o.seed}};
  emit_json({{"manifest", manifest("simulate-power", cfgj, t0, g.workers)}}, (fs::path(o.out_dir) / "manifest.json").string());
  return 0;
}

int cmd_are(const std::string& kernel, double omega, const std::string& out) {
  const KernelSpec spec{parse_kernel_family(kernel)};
  emit_json({{"kernel", kernel}, {"omega", omega}, {"are", are_lf_glr(spec, omega)}}, out);
  return 0;
}

bool is_usage(ErrorCode c) { return c == ErrorCode::invalid_argument || c == ErrorCode::parse_error; }

int report_error(const std::string& kind, const std::string& message, int code, bool as_json) {
  if (as_json)
    std::cerr << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << "\n";
  else
    std::cerr << "addinfer: " << message << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  Global g;
  for (int i = 1; i < argc; ++i)
    if (std::string(argv[i]) == "--json-errors") g.json_errors = true;

  CLI::App app{"Additive models by smooth backfitting: fitting, component tests and simulation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("--json-errors", g.json_errors, "print errors as JSON on stderr");
  app.add_option("--threads", g.workers, "worker threads (default: ADDINFER_THREADS or hardware)")
      ->check(CLI::PositiveNumber);

  DataOptions dopt;
  ModelOptions mopt;

  auto* fit = app.add_subcommand("fit", "fit an additive model");
  std::string fit_out, fit_curves, dump;
  int points = 101;
  add_data_options(fit, dopt);
  add_model_options(fit, mopt);
  fit->add_option("-o,--out", fit_out, "JSON output (default stdout)");
  fit->add_option("--curves", fit_curves, "CSV of component curves m, m*, g");
  fit->add_option("--curve-points", points, "evaluation points per curve")->check(CLI::Range(2, 100000));
  fit->add_option("--dump-smoother", dump, "write dense smoother matrices as CSV");

  auto* test = app.add_subcommand("test", "test whether one component is needed");
  TestOptions topt;
  add_data_options(test, dopt);
  add_model_options(test, mopt);
  test->add_option("--tested", topt.tested, "covariate under test")->required();
  test->add_option("--null", topt.null_form, "omit, linear or polynomial:k");
  test->add_option("-B,--bootstrap", topt.B, "bootstrap replicates (0: asymptotic only)");
  test->add_option("--seed", topt.seed, "bootstrap seed");
  test->add_option("--loss-s", topt.loss_s, "LINEX shape s");
  test->add_option("--loss-t", topt.loss_t, "LINEX scale t");
  test->add_option("-o,--out", topt.out, "JSON output (default stdout)");
  test->add_option("--null-samples", topt.null_samples, "CSV of bootstrap null draws");

  auto* bw = app.add_subcommand("bandwidth", "select bandwidths by cyclic AICc");
  std::string bw_out, bw_curves;
  add_data_options(bw, dopt);
  add_model_options(bw, mopt);
  bw->add_option("-o,--out", bw_out, "JSON output (default stdout)");
  bw->add_option("--aicc-curves", bw_curves, "CSV of AICc against h per cycle");

  auto* eig = app.add_subcommand("eigen", "eigenvalues of H and of H - G_j");
  EigenOptions eopt;
  eig->add_option("-i,--input", eopt.input, "CSV file (default: uniform sample)");
  eig->add_option("--covariate", eopt.covariate, "column to use with --input");
  eig->add_option("-n", eopt.n, "sample size without --input");
  eig->add_option("--seed", eopt.seed, "seed without --input");
  eig->add_option("-p,--order", eopt.order, "local polynomial order")->check(CLI::Range(0, 3));
  eig->add_option("--bandwidths", eopt.bandwidths, "comma separated bandwidths");
  eig->add_option("--kernel", eopt.kernel, "kernel family");
  eig->add_option("-o,--out", eopt.out, "CSV output (default stdout)");

  auto* sdata = app.add_subcommand("simulate-data", "draw one dataset from the simulation model");
  SimDataOptions sopt;
  sdata->add_option("-n", sopt.n, "sample size");
  sdata->add_option("--theta", sopt.theta, "signal in the second component");
  sdata->add_option("--beta", sopt.beta, "nuisance level of the first component");
  sdata->add_option("--error", sopt.error, "normal, t5, chisq5 or chisq10");
  sdata->add_option("--seed", sopt.seed, "seed");
  sdata->add_option("-o,--out", sopt.out, "CSV output (default stdout)");

  auto* wilks = app.add_subcommand("simulate-wilks", "null distributions under bandwidth and nuisance variations");
  WilksOptions wopt;
  wilks->add_option("-n", wopt.n, "sample size");
  wilks->add_option("--n-sim", wopt.n_sim, "replicates per variation");
  wilks->add_option("--h-opt", wopt.h_opt, "four bandwidths, or 'auto' for pilot CV");
  wilks->add_option("--pilots", wopt.pilots, "pilot datasets for --h-opt auto");
  wilks->add_option("--pilot-seed", wopt.pilot_seed, "seed of the pilot datasets");
  wilks->add_option("--seed", wopt.seed, "seed");
  wilks->add_option("--error", wopt.error, "error distribution");
  wilks->add_option("-p,--order", wopt.order, "local polynomial order");
  wilks->add_option("--loss-s", wopt.loss_s, "LINEX shape s");
  wilks->add_option("--loss-t", wopt.loss_t, "LINEX scale t");
  wilks->add_option("--out-dir", wopt.out_dir, "output directory");

  auto* power = app.add_subcommand("simulate-power", "bootstrap power curves");
  PowerOptions popt;
  power->add_option("-n", popt.n, "sample size");
  power->add_option("--thetas", popt.thetas, "comma separated signal levels");
  power->add_option("--alphas", popt.alphas, "comma separated levels");
  power->add_option("--n-sim", popt.n_sim, "replicates per signal level");
  power->add_option("-B,--bootstrap", popt.B, "bootstrap replicates");
  power->add_option("--rule", popt.rule, "testing (S_X n^-2/17 per covariate) or fixed");
  power->add_option("--fixed-h", popt.h, "bandwidths for --rule fixed");
  power->add_option("--error", popt.error, "error distribution");
  power->add_option("-p,--order", popt.order, "local polynomial order");
  power->add_option("--loss-s", popt.loss_s, "LINEX shape s");
  power->add_option("--loss-t", popt.loss_t, "LINEX scale t");
  power->add_option("--seed", popt.seed, "seed");
  power->add_option("--out-dir", popt.out_dir, "output directory");

  auto* are = app.add_subcommand("are", "asymptotic efficiency of the LF test relative to GLR");
  std::string are_kernel = "gaussian", are_out;
  double omega = 0.1;
  are->add_option("--kernel", are_kernel, "kernel family");
  are->add_option("--omega", omega, "bandwidth exponent in (0, 1/5)");
  are->add_option("-o,--out", are_out, "JSON output (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    if (g.json_errors) return report_error("usage", e.what(), 1, true);
    app.exit(e);
    return 1;
  }

  try {
    if (*fit) return cmd_fit(dopt, mopt, fit_out, fit_curves, points, dump, g);
    if (*test) return cmd_test(dopt, mopt, topt, g);
    if (*bw) return cmd_bandwidth(dopt, mopt, bw_out, bw_curves, g);
    if (*eig) return cmd_eigen(eopt);
    if (*sdata) return cmd_simulate_data(sopt);
    if (*wilks) return cmd_simulate_wilks(wopt, g);
    if (*power) return cmd_simulate_power(popt, g);
    if (*are) return cmd_are(are_kernel, omega, are_out);
  } catch (const Error& e) {
    return report_error(std::string(to_string(e.code())), e.what(), is_usage(e.code()) ? 1 : 2, g.json_errors);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), 2, g.json_errors);
  }
  return 1;
}
