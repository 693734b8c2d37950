#include <gtest/gtest.h>

#include <cstring>

#include "addinfer/bootstrap.hpp"
#include "addinfer/simulate.hpp"

using namespace addinfer;

namespace {

Dataset sim(int n, std::uint64_t seed, double theta = 0.0) { return gen_sim_data({n, theta, 0.0, ErrorDist::normal, seed}); }

ModelSpec sim_spec() { return make_model_spec({1, 1, 1, 1}, {0.35, 0.5, 0.5, 0.5}); }

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(Bootstrap, SingleReplicatePValue) {
  const Dataset data = sim(80, 1, 0.5);
  const TestSetup ts = prepare_test(data, sim_spec(), 1);
  BootstrapPlan plan;
  plan.B = 1;
  const BootstrapResult br = conditional_bootstrap(ts, data.y, plan);
  for (double p : br.p_values) EXPECT_TRUE(p == 0.0 || p == 1.0) << p;
  plan.B = 0;
  EXPECT_THROW(conditional_bootstrap(ts, data.y, plan), Error);
}

TEST(Bootstrap, DeterministicAndThreadInvariant) {
  const Dataset data = sim(100, 2, 0.3);
  const TestSetup ts = prepare_test(data, sim_spec(), 1);
  BootstrapPlan plan;
  plan.B = 64;
  plan.seed = 77;
  const BootstrapResult a = conditional_bootstrap(ts, data.y, plan);
  const BootstrapResult b = conditional_bootstrap(ts, data.y, plan);
  plan.workers = 4;
  const BootstrapResult c = conditional_bootstrap(ts, data.y, plan);
  for (std::size_t s = 0; s < statistic_count; ++s) {
    EXPECT_TRUE(bitwise_equal(a.null_samples[s], b.null_samples[s])) << statistic_names[s];
    EXPECT_TRUE(bitwise_equal(a.null_samples[s], c.null_samples[s])) << statistic_names[s];
    EXPECT_EQ(a.p_values[s], c.p_values[s]);
  }
  plan.seed = 78;
  const BootstrapResult d = conditional_bootstrap(ts, data.y, plan);
  EXPECT_FALSE(bitwise_equal(a.null_samples[0], d.null_samples[0]));
}

TEST(Bootstrap, ResidualPoolCentered) {
  const Dataset data = sim(90, 3, 1.0);
  const TestSetup ts = prepare_test(data, sim_spec(), 1);
  const Eigen::VectorXd y = (data.y.array() + 5.0).matrix();
  EXPECT_LT(std::abs(centered_residuals(ts, y).mean()), 1e-12);
}

TEST(Bootstrap, PValueMonotoneInObserved) {
  const std::vector<double> null = {0.5, 1.0, 1.0, 2.0, 3.5, 4.0};
  double prev = 1.0;
  for (double obs : {-1.0, 0.5, 0.9, 1.0, 1.5, 3.9, 4.0, 9.0}) {
    const double p = bootstrap_pvalue(null, {}, obs);
    EXPECT_LE(p, prev);
    prev = p;
  }
  EXPECT_DOUBLE_EQ(bootstrap_pvalue(null, {}, 1.0), 3.0 / 6.0);
  EXPECT_EQ(bootstrap_pvalue(null, {}, 4.0), 0.0);
  EXPECT_DOUBLE_EQ(bootstrap_pvalue(null, {false, true, false, false, true, false}, 0.7), 3.0 / 4.0);
}

TEST(Bootstrap, LossScaleIrrelevant) {
  const Dataset data = sim(100, 4, 0.4);
  const TestSetup ts = prepare_test(data, sim_spec(), 1);
  BootstrapPlan plan;
  plan.B = 100;
  plan.seed = 5;
  plan.loss = {0.5, 1.0};
  const BootstrapResult a = conditional_bootstrap(ts, data.y, plan);
  plan.loss = {0.5, 2.0};
  const BootstrapResult b = conditional_bootstrap(ts, data.y, plan);
  EXPECT_EQ(a.p_values[lf], b.p_values[lf]);
  for (std::size_t k = 0; k < 100; ++k) EXPECT_NEAR(b.null_samples[lf][k], 2.0 * a.null_samples[lf][k], 1e-12 * b.null_samples[lf][k]);
  EXPECT_EQ(a.p_values[glr], b.p_values[glr]);
}

TEST(Bootstrap, DegenerateSetupGivesPOne) {
  const Dataset data = sim(60, 5, 1.0);
  ModelSpec spec = sim_spec();
  spec.components[1].role = ComponentRole::parametric;
  const TestSetup ts = prepare_test(data, spec, 1, 1);
  ASSERT_TRUE(ts.degenerate);
  BootstrapPlan plan;
  plan.B = 10;
  const BootstrapResult br = conditional_bootstrap(ts, data.y, plan);
  for (double p : br.p_values) EXPECT_EQ(p, 1.0);
  TestReport rep = run_test(ts, data.y);
  attach_bootstrap(rep, br);
  ASSERT_TRUE(rep.p_boot.has_value());
  EXPECT_EQ(rep.boot_replicates, 10);
}

TEST(Bootstrap, SizeUnderNull) {
  PowerConfig cfg;
  cfg.n = 100;
  cfg.thetas = {0.0};
  cfg.alphas = {0.05};
  cfg.n_sim = 200;
  cfg.B = 200;
  cfg.seed = 303;
  const PowerResult pr = power_curve(cfg);
  for (std::size_t s = 0; s < statistic_count; ++s) {
    const double r = pr.rejection(0.0, 0.05, s);
    EXPECT_GE(r, 0.02) << statistic_names[s];
    EXPECT_LE(r, 0.09) << statistic_names[s];
  }
}
