#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "addinfer/backfit.hpp"
#include "addinfer/bootstrap.hpp"
#include "addinfer/errors.hpp"
#include "addinfer/inference.hpp"

namespace addinfer {

using json = nlohmann::ordered_json;

//! Header plus rows of raw string fields.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw Error(ErrorCode::invalid_argument, "no column named '" + name + "'");
  }
};

/// RFC 4180 reader: quoted fields may contain commas, newlines and doubled
/// quotes; CRLF and LF line endings are both accepted.
inline CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t line = 1;
  auto end_record = [&] {
    record.push_back(field);
    field.clear();
    field_started = false;
    if (!(record.size() == 1 && record[0].empty())) {
      if (table.header.empty())
        table.header = record;
      else {
        if (record.size() != table.header.size())
          throw Error(ErrorCode::parse_error, "line " + std::to_string(line) + ": expected " +
                                                  std::to_string(table.header.size()) + " fields, found " +
                                                  std::to_string(record.size()));
        table.rows.push_back(record);
      }
    }
    record.clear();
  };
  char c;
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      record.push_back(field);
      field.clear();
      field_started = false;
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get(c);
      end_record();
      ++line;
    } else if (c == '\n') {
      end_record();
      ++line;
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw Error(ErrorCode::parse_error, "unterminated quoted field");
  if (!field.empty() || !record.empty()) end_record();
  if (table.header.empty()) throw Error(ErrorCode::parse_error, "empty input");
  return table;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::invalid_argument, "cannot open '" + path + "'");
  return read_csv(in);
}

inline bool is_missing(const std::string& s) { return s.empty() || s == "NA" || s == "NaN" || s == "nan"; }

inline double parse_number(const std::string& s, std::size_t row, const std::string& col) {
  std::size_t b = s.find_first_not_of(" \t");
  std::size_t e = s.find_last_not_of(" \t");
  if (b == std::string::npos) throw Error(ErrorCode::parse_error, "row " + std::to_string(row) + ", column '" + col + "': empty");
  const char* first = s.data() + b;
  const char* last = s.data() + e + 1;
  if (*first == '+') ++first;
  double v = 0.0;
  const auto r = std::from_chars(first, last, v);
  if (r.ec != std::errc() || r.ptr != last || !std::isfinite(v))
    throw Error(ErrorCode::parse_error, "row " + std::to_string(row) + ", column '" + col + "': '" + s + "' is not a number");
  return v;
}

/// Numeric matrix of the named columns. Missing cells are reported together
/// with their (1-based data) row numbers.
inline Eigen::MatrixXd numeric_columns(const CsvTable& t, const std::vector<std::string>& names) {
  std::vector<std::size_t> idx;
  for (const auto& nm : names) idx.push_back(t.column(nm));
  std::vector<std::size_t> missing;
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t k : idx)
      if (is_missing(t.rows[r][k])) {
        missing.push_back(r + 1);
        break;
      }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? "," : "") + std::to_string(missing[i]);
    if (missing.size() > 20) list += ",...";
    throw Error(ErrorCode::parse_error, std::to_string(missing.size()) + " rows with missing values: " + list);
  }
  Eigen::MatrixXd M(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t k = 0; k < idx.size(); ++k)
      M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = parse_number(t.rows[r][idx[k]], r + 1, names[k]);
  return M;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

//! Shortest round-trip decimal form.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline void write_csv(std::ostream& out, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << csv_escape(header[i]);
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_escape(row[i]);
    out << "\n";
  }
}

inline void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& M) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::invalid_argument, "cannot write '" + path + "'");
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) out << (j ? "," : "") << format_number(M(i, j));
    out << "\n";
  }
}

inline json to_json_vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(std::isfinite(v[i]) ? json(v[i]) : json(nullptr));
  return a;
}

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const ScalingConstants& c) {
  return json{{"mu_n", c.mu_n}, {"sigma_n2", c.sigma_n2}, {"r_k", c.r_k}, {"nu_n", c.nu_n},
              {"delta_n2", c.delta_n2}, {"s_k", c.s_k}, {"M", c.M}};
}

inline json to_json(const TestReport& r, const std::vector<std::string>& names = {}) {
  json j;
  j["n"] = r.n;
  j["tested"] = r.tested < names.size() ? json(names[r.tested]) : json(r.tested + 1);
  j["null_form"] = r.null_degree < 0 ? std::string("omit")
                                     : (r.null_degree == 1 ? std::string("linear") : "polynomial:" + std::to_string(r.null_degree));
  j["loss"] = {{"family", "linex"}, {"s", r.loss.s}, {"t", r.loss.t}};
  j["rss0"] = r.stats.rss0;
  j["rss1"] = r.stats.rss1;
  j["degenerate"] = r.degenerate;
  j["statistics"] = {{"lambda_n", r.stats.lambda_log}, {"lambda_n_ratio", r.stats.lambda_ratio}, {"q_n", r.stats.q_n},
                     {"F_lambda", r.stats.F_lambda}, {"F_q", r.stats.F_q}, {"S_n", r.stats.S_n}};
  j["constants"] = r.constants ? to_json(*r.constants) : json(nullptr);
  j["df"] = {{"chi2_glr", r.constants ? json(r.constants->r_k * r.constants->mu_n) : json(nullptr)},
             {"chi2_lf", r.constants ? json(r.constants->s_k * r.constants->nu_n) : json(nullptr)},
             {"F_lambda", {r.traces.trC, r.traces.trD}},
             {"F_q", {r.traces.trEtE, r.traces.trD}}};
  j["p_asymptotic"] = {{"glr", r.p_asym.glr}, {"lf", r.p_asym.lf}, {"F_lambda", r.p_asym.F_lambda}, {"F_q", r.p_asym.F_q}};
  if (r.p_boot) {
    json pb;
    for (std::size_t s = 0; s < statistic_count; ++s) pb[statistic_names[s]] = (*r.p_boot)[s];
    j["p_bootstrap"] = pb;
    j["bootstrap"] = {{"B", r.boot_replicates}, {"failures", r.boot_failures}, {"seed", r.boot_seed}};
  } else {
    j["p_bootstrap"] = nullptr;
    j["bootstrap"] = nullptr;
  }
  return j;
}

inline json to_json(const AdditiveFit& f, const std::vector<std::string>& names) {
  json j;
  j["alpha0"] = f.alpha0;
  j["rss"] = f.rss;
  j["iterations"] = f.iterations;
  j["converged"] = f.converged;
  j["last_change"] = f.last_change;
  j["timings"] = {{"setup_seconds", f.timings.setup_seconds}, {"solve_seconds", f.timings.solve_seconds}};
  j["warnings"] = f.warnings;
  json comps = json::array();
  for (std::size_t k = 0; k < f.m.size(); ++k)
    comps.push_back({{"name", k < names.size() ? names[k] : "x" + std::to_string(k + 1)},
                     {"g", to_json_vec(f.g[k])},
                     {"m_star", to_json_vec(f.m_star[k])},
                     {"m", to_json_vec(f.m[k])}});
  j["components"] = comps;
  j["fitted"] = to_json_vec(f.fitted);
  j["residuals"] = to_json_vec(f.residuals);
  return j;
}

}  // namespace addinfer
