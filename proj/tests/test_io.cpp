#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "addinfer/io.hpp"
#include "addinfer/simulate.hpp"

using namespace addinfer;

namespace {

CsvTable parse(const std::string& s) {
  std::istringstream in(s);
  return read_csv(in);
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::invalid_argument;
}

}  // namespace

TEST(Csv, QuotedFields) {
  const CsvTable t = parse("name,\"x, y\",z\r\n\"a \"\"b\"\"\",1.5,\"line\nbreak\"\r\nc,2,3\n\n");
  ASSERT_EQ(t.header.size(), 3u);
  EXPECT_EQ(t.header[1], "x, y");
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][0], "a \"b\"");
  EXPECT_EQ(t.rows[0][2], "line\nbreak");
  EXPECT_EQ(t.rows[1][2], "3");
  EXPECT_EQ(t.column("z"), 2u);
  EXPECT_THROW(t.column("w"), Error);
}

TEST(Csv, Malformed) {
  EXPECT_EQ(code_of([] { parse("a,b\n1\n"); }), ErrorCode::parse_error);
  EXPECT_EQ(code_of([] { parse("a,b\n\"1,2\n"); }), ErrorCode::parse_error);
  EXPECT_EQ(code_of([] { parse(""); }), ErrorCode::parse_error);
  EXPECT_EQ(code_of([] { read_csv_file("/nonexistent/file.csv"); }), ErrorCode::invalid_argument);
}

TEST(Csv, NumericColumns) {
  const CsvTable t = parse("y,x1,label\n1, 2.5,a\n-3e-2,+4,b\n");
  const Eigen::MatrixXd M = numeric_columns(t, {"x1", "y"});
  ASSERT_EQ(M.rows(), 2);
  EXPECT_EQ(M(0, 0), 2.5);
  EXPECT_EQ(M(1, 0), 4.0);
  EXPECT_EQ(M(1, 1), -0.03);
  EXPECT_EQ(code_of([&] { numeric_columns(t, {"label"}); }), ErrorCode::parse_error);
}

TEST(Csv, MissingRowsListed) {
  const CsvTable t = parse("y,x\n1,2\nNA,3\n4,\n5,6\n");
  try {
    numeric_columns(t, {"y", "x"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::parse_error);
    EXPECT_NE(std::string(e.what()).find("2 rows"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("2,3"), std::string::npos);
  }
  EXPECT_NO_THROW(numeric_columns(t, {}));
  EXPECT_TRUE(is_missing("NaN"));
  EXPECT_FALSE(is_missing("0"));
}

TEST(Csv, RoundTrip) {
  std::mt19937_64 eng(9);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd M(50, 4);
  for (auto& v : M.reshaped()) v = nd(eng) * std::pow(10.0, nd(eng) * 3.0);
  const auto path = (std::filesystem::temp_directory_path() / "addinfer_roundtrip.csv").string();
  write_matrix_csv(path, M);
  std::ifstream in(path);
  std::ostringstream body;
  body << "a,b,c,d\n" << in.rdbuf();
  const Eigen::MatrixXd back = numeric_columns(parse(body.str()), {"a", "b", "c", "d"});
  std::remove(path.c_str());
  for (Eigen::Index i = 0; i < M.size(); ++i)
    EXPECT_LE(std::abs(back.reshaped()[i] - M.reshaped()[i]), 1e-12 * std::abs(M.reshaped()[i]));
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(std::nan("")), "NA");
}

TEST(Csv, WriterEscapes) {
  std::ostringstream out;
  write_csv(out, {"a", "b,c"}, {{"x\"y", "1"}});
  EXPECT_EQ(out.str(), "a,\"b,c\"\n\"x\"\"y\",1\n");
  const CsvTable t = parse(out.str());
  EXPECT_EQ(t.header[1], "b,c");
  EXPECT_EQ(t.rows[0][0], "x\"y");
}

TEST(Json, TestReport) {
  const Dataset data = gen_sim_data({80, 0.5, 0.0, ErrorDist::normal, 4});
  const TestSetup ts = prepare_test(data, make_model_spec({1, 1, 1, 1}, {0.35, 0.5, 0.5, 0.5}), 1);
  const TestReport rep = run_test(ts, data.y);
  const json j = to_json(rep, data.names);
  EXPECT_EQ(j["tested"], "x2");
  EXPECT_EQ(j["null_form"], "omit");
  EXPECT_EQ(j["n"], 80);
  EXPECT_DOUBLE_EQ(j["statistics"]["lambda_n"].get<double>(), rep.stats.lambda_log);
  EXPECT_DOUBLE_EQ(j["df"]["chi2_glr"].get<double>(), rep.constants->r_k * rep.constants->mu_n);
  EXPECT_TRUE(j["p_bootstrap"].is_null());
  const json back = json::parse(j.dump());
  EXPECT_EQ(back, j);
}

TEST(Json, FitAndNonFinite) {
  const Dataset data = gen_sim_data({60, 0.0, 0.0, ErrorDist::normal, 5});
  const AdditiveFit fit = fit_backfitting(data, make_model_spec({1, 1, 1, 1}, {0.35, 0.5, 0.5, 0.5}));
  const json j = to_json(fit, data.names);
  ASSERT_EQ(j["components"].size(), 4u);
  EXPECT_EQ(j["components"][3]["name"], "x4");
  EXPECT_EQ(j["residuals"].size(), 60u);
  EXPECT_TRUE(finite_or_null(INFINITY).is_null());
  Eigen::VectorXd v(2);
  v << 1.0, std::nan("");
  EXPECT_TRUE(to_json_vec(v)[1].is_null());
}
