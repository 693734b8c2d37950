#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <sys/wait.h>

#include "addinfer/addinfer.hpp"

using namespace addinfer;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("addinfer_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  Outcome run(const std::string& args) const {
    const std::string out = path("stdout.txt"), err = path("stderr.txt");
    const std::string cmd = std::string(ADDINFER_CLI) + " " + args + " > " + out + " 2> " + err;
    const int status = std::system(cmd.c_str());
    Outcome r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  std::string simulate(int n, double theta, int seed, const std::string& name) const {
    const auto r = run("simulate-data -n " + std::to_string(n) + " --theta " + std::to_string(theta) + " --seed " +
                       std::to_string(seed) + " -o " + path(name));
    EXPECT_EQ(r.code, 0) << r.err;
    return path(name);
  }

  fs::path dir_;
};

const std::string model4 = " -y y -x x1,x2,x3,x4 ";

}  // namespace

TEST_F(Cli, ConstantResponseFit) {
  {
    std::ofstream f(path("c.csv"));
    std::mt19937_64 eng(1);
    std::uniform_real_distribution<double> u;
    f << "y,a,b\n";
    for (int i = 0; i < 60; ++i) f << "3.5," << u(eng) << "," << u(eng) << "\n";
  }
  const Outcome r = run("fit -i " + path("c.csv") + " -y y -x a,b --curves " + path("curves.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_NEAR(j["fit"]["alpha0"].get<double>(), 3.5, 1e-12);
  const CsvTable t = read_csv_file(path("curves.csv"));
  ASSERT_EQ(t.rows.size(), 2u * 101u);
  const Eigen::MatrixXd M = numeric_columns(t, {"m", "m_star", "g"});
  EXPECT_LT(M.cwiseAbs().maxCoeff(), 1e-10);
}

TEST_F(Cli, SimulatedFitAndCurveRoundTrip) {
  const std::string data = simulate(150, 0.5, 3, "d.csv");
  const Outcome r = run("fit -i " + data + model4 + "--bandwidths 0.35,0.5,0.5,0.5 --curves " + path("curves.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  for (const auto& c : j["fit"]["components"]) {
    double mean = 0.0;
    for (const auto& v : c["m"]) mean += v.get<double>();
    EXPECT_LT(std::abs(mean / 150.0), 1e-9);
  }
  const CsvTable raw = read_csv_file(data);
  const Eigen::MatrixXd M = numeric_columns(raw, {"y", "x1", "x2", "x3", "x4"});
  const Dataset ds = make_dataset(M.col(0), M.rightCols(4), {"x1", "x2", "x3", "x4"});
  const AdditiveOperators ops = build_operators(ds, make_model_spec({1, 1, 1, 1}, {0.35, 0.5, 0.5, 0.5}));
  const AdditiveFit fit = fit_backfitting(ops, ds.y);
  const ComponentCurves cc = component_curves(ops, fit, Eigen::VectorXd::LinSpaced(101, 0.0, 1.0));
  const CsvTable t = read_csv_file(path("curves.csv"));
  const Eigen::MatrixXd C = numeric_columns(t, {"m", "m_star", "g"});
  for (Eigen::Index r = 0; r < C.rows(); ++r) {
    const auto j = static_cast<std::size_t>(r / 101);
    const Eigen::Index k = r % 101;
    EXPECT_NEAR(C(r, 0), cc.m[j][k], 1e-12 * std::max(1.0, std::abs(cc.m[j][k])));
    EXPECT_NEAR(C(r, 1), cc.m_star[j][k], 1e-12 * std::max(1.0, std::abs(cc.m_star[j][k])));
    EXPECT_NEAR(C(r, 2), cc.g[j][k], 1e-12 * std::max(1.0, std::abs(cc.g[j][k])));
  }
}

TEST_F(Cli, AutoBandwidthsMatchStandaloneSelection) {
  const std::string data = simulate(150, 1.0, 4, "d.csv");
  const Outcome a = run("bandwidth -i " + data + model4);
  const Outcome b = run("fit -i " + data + model4 + "--bandwidths auto");
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(json::parse(a.out)["bandwidths"]["h"], json::parse(b.out)["manifest"]["config"]["model"]["h"]);
}

TEST_F(Cli, SmootherDump) {
  const std::string data = simulate(40, 0.0, 5, "d.csv");
  ASSERT_EQ(run("fit -i " + data + " -y y -x x1,x2 --bandwidths 0.4 --dump-smoother " + path("H.csv")).code, 0);
  for (const char* name : {"H_x1.csv", "H_x2.csv"}) {
    std::ifstream in(path(name));
    std::ostringstream body;
    body << "c1";
    for (int k = 2; k <= 40; ++k) body << ",c" << k;
    body << "\n" << in.rdbuf();
    std::istringstream s(body.str());
    const CsvTable t = read_csv(s);
    EXPECT_EQ(t.rows.size(), 40u) << name;
  }
}

TEST_F(Cli, TestSizeOverTwentyRuns) {
  std::array<int, statistic_count> keep{};
  for (int s = 1; s <= 20; ++s) {
    const std::string data = simulate(100, 0.0, 100 + s, "d.csv");
    const Outcome r = run("test -i " + data + model4 + "--bandwidths testing --tested x2 -B 200 --seed " + std::to_string(s));
    ASSERT_EQ(r.code, 0) << r.err;
    const json p = json::parse(r.out)["report"]["p_bootstrap"];
    for (std::size_t k = 0; k < statistic_count; ++k) keep[k] += p[statistic_names[k]].get<double>() > 0.05;
  }
  for (std::size_t k = 0; k < statistic_count; ++k) EXPECT_GE(keep[k], 15) << statistic_names[k];
}

TEST_F(Cli, TestPowerOverTwentyRuns) {
  std::array<int, statistic_count> reject{};
  for (int s = 1; s <= 20; ++s) {
    const std::string data = simulate(400, 1.0, 200 + s, "d.csv");
    const Outcome r = run("test -i " + data + model4 + "--bandwidths testing --tested x2 -B 200 --seed " + std::to_string(s));
    ASSERT_EQ(r.code, 0) << r.err;
    const json p = json::parse(r.out)["report"]["p_bootstrap"];
    for (std::size_t k = 0; k < statistic_count; ++k) reject[k] += p[statistic_names[k]].get<double>() < 0.05;
  }
  for (std::size_t k = 0; k < statistic_count; ++k) EXPECT_GE(reject[k], 18) << statistic_names[k];
}

TEST_F(Cli, TestOutputsAndDeterminism) {
  const std::string data = simulate(100, 0.5, 6, "d.csv");
  const std::string base = "test -i " + data + model4 + "--bandwidths 0.35,0.5,0.5,0.5 --tested x2 ";
  const Outcome asym = run(base + "-B 0 --null linear");
  ASSERT_EQ(asym.code, 0) << asym.err;
  const json ja = json::parse(asym.out)["report"];
  EXPECT_TRUE(ja["p_bootstrap"].is_null());
  EXPECT_EQ(ja["null_form"], "linear");
  const Outcome a = run(base + "-B 50 --seed 9 --threads 1");
  const Outcome b = run(base + "-B 50 --seed 9 --threads 3");
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(json::parse(a.out)["report"], json::parse(b.out)["report"]);
  EXPECT_EQ(json::parse(b.out)["manifest"]["workers"], 3);
}

TEST_F(Cli, ExitCodes) {
  const std::string data = simulate(50, 0.0, 7, "d.csv");
  Outcome r = run("test -i " + data + model4 + "--tested x9 --json-errors");
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(json::parse(r.err)["exit_code"], 1);
  r = run("fit -i " + data + " -y y -x nope");
  EXPECT_EQ(r.code, 1);
  r = run("fit -i " + data + " -y y --json-errors");
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(json::parse(r.err)["error"], "usage");
  r = run("frobnicate");
  EXPECT_EQ(r.code, 1);
  r = run("fit -i " + data + " -y y -x x1 --bandwidths 0.0001 --json-errors");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(json::parse(r.err)["exit_code"], 2);
  {
    std::ofstream f(path("bad.csv"));
    f << "y,x\n1,2\nNA,3\n2,abc\n";
  }
  r = run("fit -i " + path("bad.csv") + " -y y -x x");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("missing"), std::string::npos);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, Eigenvalues) {
  const Outcome r = run("eigen -n 100 --seed 2 -p 1 --bandwidths 0.1,0.2,0.4");
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream s(r.out);
  const CsvTable t = read_csv(s);
  ASSERT_EQ(t.rows.size(), 300u);
  const Eigen::MatrixXd M = numeric_columns(t, {"h", "eig_H", "eig_modified"});
  for (Eigen::Index b = 0; b < 3; ++b) {
    const auto H = M.col(1).segment(100 * b, 100);
    const auto S = M.col(2).segment(100 * b, 100);
    EXPECT_EQ(((H.array() - 1.0).abs() < 1e-6).count(), 2);
    EXPECT_LT(S.maxCoeff(), 1.0);
    EXPECT_GE(H.minCoeff(), -1e-8);
    EXPECT_LE(H.maxCoeff(), 1.0 + 1e-8);
  }
}

TEST_F(Cli, WilksOutputs) {
  const Outcome r = run("simulate-wilks -n 60 --n-sim 20 --h-opt 0.3,0.6,0.5,0.6 --seed 3 --out-dir " + path("w"));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* s : {"glr", "lf", "F_lambda", "F_q"}) {
    const CsvTable t = read_csv_file(path("w/density_" + std::string(s) + ".csv"));
    EXPECT_EQ(t.rows.size(), 6u * 401u) << s;
  }
  const json m = json::parse(slurp(path("w/manifest.json")));
  EXPECT_EQ(m["summary"].size(), 6u);
  EXPECT_EQ(m["manifest"]["config"]["seed"], 3);
  EXPECT_EQ(read_csv_file(path("w/draws.csv")).rows.size(), 6u * 20u * 4u);
}

TEST_F(Cli, PowerTableSize) {
  const Outcome r = run("simulate-power -n 100 --n-sim 200 -B 200 --alphas 0.05 --seed 1 --out-dir " + path("p"));
  ASSERT_EQ(r.code, 0) << r.err;
  const CsvTable t = read_csv_file(path("p/rejection.csv"));
  ASSERT_EQ(t.rows.size(), 6u * statistic_count);
  const Eigen::MatrixXd M = numeric_columns(t, {"theta", "rejection"});
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    if (M(i, 0) == 0.0) {
      EXPECT_GE(M(i, 1), 0.02) << t.rows[static_cast<std::size_t>(i)][2];
      EXPECT_LE(M(i, 1), 0.09) << t.rows[static_cast<std::size_t>(i)][2];
    }
}

TEST_F(Cli, AsymptoticEfficiency) {
  const Outcome r = run("are --kernel gaussian --omega 0.1");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_GT(json::parse(r.out)["are"].get<double>(), 1.0);
  EXPECT_EQ(run("are --omega 0.3").code, 1);
}
