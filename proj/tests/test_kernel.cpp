#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "addinfer/kernel.hpp"
#include "oracles.hpp"

using namespace addinfer;

namespace {
const KernelSpec gauss{KernelFamily::gaussian};
const KernelSpec epan{KernelFamily::epanechnikov};
const KernelSpec unif{KernelFamily::uniform};
}  // namespace

TEST(Kernel, PointValues) {
  EXPECT_DOUBLE_EQ(kernel_eval(epan, 0.0), 0.75);
  EXPECT_EQ(kernel_eval(epan, 1.5), 0.0);
  EXPECT_NEAR(kernel_eval(gauss, 0.0), 1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-8);
  EXPECT_DOUBLE_EQ(scaled_kernel(epan, 0.05, 0.0), 15.0);
  EXPECT_NEAR(scaled_kernel(gauss, 0.2, 0.2), std::exp(-0.5) / (0.2 * std::sqrt(2.0 * std::numbers::pi)), 1e-8);
  EXPECT_NEAR(scaled_kernel(gauss, 0.2, 0.2), 1.2099, 1e-4);
  EXPECT_DOUBLE_EQ(scaled_kernel(unif, 1.0, 0.3), kernel_eval(unif, 0.3));
}

TEST(Kernel, RejectsNonpositiveBandwidth) {
  try {
    scaled_kernel(gauss, 0.0, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_bandwidth);
  }
  EXPECT_THROW(boundary_kernel(gauss, -1.0, 0.1, 0.1), Error);
}

TEST(Kernel, DensityPropertiesAndSymmetry) {
  std::mt19937 g(7);
  std::uniform_real_distribution<double> u(-8.0, 8.0);
  for (const auto& k : {gauss, epan, unif}) {
    const double r = k.support();
    EXPECT_NEAR(oracle::simpson([&](double v) { return kernel_eval(k, v); }, -r, r, {0.0}), 1.0, 1e-8);
    for (int i = 0; i < 1000; ++i) {
      const double v = u(g);
      EXPECT_EQ(kernel_eval(k, v), kernel_eval(k, -v));
      EXPECT_GE(kernel_eval(k, v), 0.0);
    }
  }
}

TEST(Kernel, BoundaryKernelExamples) {
  EXPECT_NEAR(boundary_kernel(epan, 0.05, 0.5, 0.5), 15.0, 1e-12);
  EXPECT_NEAR(boundary_kernel(epan, 0.05, 0.0, 0.0), 30.0, 1e-12);
  const double norm0 = oracle::simpson([&](double w) { return scaled_kernel(epan, 0.05, w); }, 0.0, 1.0, {0.05});
  EXPECT_NEAR(norm0, 0.5, 1e-10);
  EXPECT_EQ(boundary_kernel(epan, 0.05, 1.2, 0.5), 0.0);
}

TEST(Kernel, BoundaryKernelRowNormalization) {
  for (const auto& k : {gauss, epan, unif})
    for (double h : {0.05, 0.2}) {
      for (int i = 0; i <= 100; ++i) {
        const double v = i / 100.0;
        const double r = k.support() * h;
        const double total = oracle::simpson([&](double u) { return boundary_kernel(k, h, u, v); }, 0.0, 1.0,
                                             {v - r, v, v + r}, 2000);
        EXPECT_NEAR(total, 1.0, 1e-8) << to_string(k.family) << " h=" << h << " v=" << v;
      }
    }
}

TEST(Kernel, BoundaryKernelMatchesScaledKernelInInterior) {
  for (const auto& k : {epan, unif}) {
    const double h = 0.1;
    for (int i = 10; i <= 90; ++i)
      for (int j = 0; j <= 100; ++j) {
        const double v = i / 100.0, u = j / 100.0;
        EXPECT_EQ(boundary_kernel(k, h, u, v), scaled_kernel(k, h, u - v));
      }
  }
}

TEST(Kernel, BoundaryNormalizerDegenerate) {
  EXPECT_NO_THROW(boundary_kernel(epan, 1e-6, 0.5, 0.5));
  KernelSpec narrow = gauss;
  narrow.truncation_radius = 1.0;
  // A vanishing normalizer cannot occur for v in [0, 1]; the guard is exercised directly.
  EXPECT_GT(boundary_normalizer(narrow, 1e-9, 0.0), 1e-12);
}

TEST(Kernel, Moments) {
  for (const auto& k : {gauss, epan, unif})
    for (int p = 0; p <= 3; ++p) {
      const auto km = kernel_moments(k, p);
      EXPECT_NEAR(km.mu[0], 1.0, 1e-8);
      for (std::size_t t = 1; t < km.mu.size(); t += 2) EXPECT_LT(std::abs(km.mu[t]), 1e-10);
      EXPECT_LT((km.S_inv * km.S - Eigen::MatrixXd::Identity(p + 1, p + 1)).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_GT(Eigen::LLT<Eigen::MatrixXd>(km.S).info() == Eigen::Success, 0);
    }
  EXPECT_NEAR(kernel_moments(epan, 1).mu[2], 0.2, 1e-12);
  EXPECT_NEAR(kernel_moments(gauss, 1).mu[2], 1.0, 1e-7);
}

TEST(Kernel, ConvolutionExamples) {
  EXPECT_NEAR(kernel_convolution(gauss, 0, 0, 0.0), 1.0 / std::sqrt(4.0 * std::numbers::pi), 1e-8);
  EXPECT_NEAR(kernel_convolution(epan, 0, 0, 0.0), 0.6, 1e-9);
  for (const auto& k : {gauss, epan, unif}) {
    const double r = 2.0 * k.support();
    const double total = oracle::simpson([&](double u) { return kernel_convolution(k, 0, 0, u); }, -r, r, {0.0}, 200);
    EXPECT_NEAR(total, 1.0, 1e-8) << to_string(k.family);
  }
}

TEST(Kernel, ConvolutionSymmetry) {
  for (const auto& k : {gauss, epan})
    for (int l = 0; l <= 3; ++l)
      for (int m = 0; m <= 3; ++m)
        for (double u : {-0.7, 0.0, 0.3, 1.1}) {
          const double sign = (l + m) % 2 ? -1.0 : 1.0;
          EXPECT_NEAR(kernel_convolution(k, l, m, u), sign * kernel_convolution(k, m, l, -u), 1e-9);
          const double direct = oracle::simpson(
              [&](double v) { return std::pow(u - v, l) * kernel_eval(k, u - v) * std::pow(v, m) * kernel_eval(k, v); },
              -k.support(), k.support(), {u - k.support(), u + k.support(), 0.0, u}, 3000);
          EXPECT_NEAR(kernel_convolution(k, l, m, u), direct, 1e-9);
        }
}

TEST(Kernel, AreGaussianClosedForm) {
  // For the untruncated Gaussian, K*K is N(0,2) and its autocorrelation N(0,4).
  const double base = 4.0 * std::sqrt(2.0) - 4.0 * std::sqrt(4.0 / 3.0) + 1.0;
  EXPECT_NEAR(are_base_ratio(gauss, 192), base, 1e-7);
  const double are = are_lf_glr(gauss, 0.1);
  EXPECT_NEAR(are, std::pow(base, 1.0 / 1.7), 1e-6);
  EXPECT_GT(are, 1.0);
  EXPECT_LT(are_lf_glr(gauss, 0.01), are_lf_glr(gauss, 0.15));
}

TEST(Kernel, AreOtherKernelsExceedOne) {
  EXPECT_GT(are_lf_glr(epan, 0.1), 1.0);
  EXPECT_GT(are_lf_glr(unif, 0.1), 1.0);
  EXPECT_THROW(are_lf_glr(gauss, 0.2), Error);
  EXPECT_THROW(are_lf_glr(gauss, 0.0), Error);
}
