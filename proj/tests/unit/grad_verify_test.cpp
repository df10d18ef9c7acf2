#include <gtest/gtest.h>

#include <cmath>

#include "jumpsae/grad_verify.hpp"
#include "test_util.hpp"

using namespace jumpsae;
using jumpsae::testing::standard_normal_pdf;

namespace {
constexpr KernelKind kKernels[] = {KernelKind::Rectangle, KernelKind::Triangular,
                                   KernelKind::Gaussian, KernelKind::Epanechnikov};
}

// By hand: at pi = theta = 1 the boundary feature counts half, so
// x_hat = 0.5 and I = 2 * 1 * 1 * (1 - 0.5) = 1; (1 - 0.1) * phi(1).
TEST(Analytic, DefaultToyValue) {
  const ToyProblem toy;
  const double expected = 0.9 * standard_normal_pdf(1.0);
  EXPECT_NEAR(analytic_grad(toy), expected, 1e-15);
  EXPECT_NEAR(analytic_grad(toy), 0.217771, 5e-6);
}

TEST(Analytic, VanishesAtBalancedLambdaAndFarThreshold) {
  ToyProblem toy;
  toy.lambda = 1.0;  // E[I | pi = theta] for the default toy
  EXPECT_NEAR(analytic_grad(toy), 0.0, 1e-16);
  ToyProblem far;
  far.theta = 60.0;
  EXPECT_EQ(analytic_grad(far), 0.0);
}

TEST(Analytic, DensityOfScaledShiftedGaussian) {
  ToyProblem toy;
  toy.w_enc = 2.0;
  toy.b_enc = 0.5;
  // pi ~ N(0.5, 4)
  EXPECT_NEAR(pre_activation_density(toy, 1.5), standard_normal_pdf(0.5) / 2.0, 1e-16);
}

TEST(Quadrature, SimpsonIsExactOnCubics) {
  auto f = [](double x) { return 3 * x * x * x - x + 2; };
  EXPECT_NEAR(simpson(f, -1.0, 2.0, 10), 3.0 * 15.0 / 4.0 - 1.5 + 6.0, 1e-12);
}

TEST(FiniteDifference, AgreesWithAnalytic) {
  const ToyProblem toy;
  EXPECT_NEAR(fd_expected_grad(toy, 1e-4), analytic_grad(toy), 1e-4);
  ToyProblem other;
  other.w_enc = 1.3;
  other.b_enc = -0.2;
  other.decoder = 0.7;
  other.b_dec = 0.1;
  other.theta = 0.6;
  other.lambda = 0.05;
  EXPECT_NEAR(fd_expected_grad(other, 1e-4), analytic_grad(other), 1e-4);
}

TEST(FiniteDifference, ZeroWhenNothingDependsOnTheta) {
  ToyProblem toy;
  toy.lambda = 0.0;
  toy.decoder = 0.0;
  EXPECT_NEAR(fd_expected_grad(toy, 1e-4), 0.0, 1e-9);
  ToyProblem constant;  // pi = b_enc = -1 everywhere: no density at theta = 1
  constant.w_enc = 0.0;
  constant.b_enc = -1.0;
  EXPECT_NEAR(fd_expected_grad(constant, 1e-4), 0.0, 1e-9);
  EXPECT_EQ(analytic_grad(constant), 0.0);
}

TEST(FiniteDifference, RejectsBadStep) {
  const ToyProblem toy;
  EXPECT_THROW(fd_expected_grad(toy, 0.0), std::invalid_argument);
  EXPECT_THROW(fd_expected_grad(toy, 2.0), std::invalid_argument);
}

TEST(MonteCarlo, BackwardEqualsEstimatorOnSameSamples) {
  const ToyProblem toy;
  RngStream r(1, StreamId::Verify);
  const auto xs = draw_toy_inputs(5000, r);
  for (KernelKind k : kKernels) {
    for (double eps : {0.02, 0.2}) {
      const double a = mc_ste_grad(toy, xs, eps, k);
      const double b = kde_estimate(toy, xs, eps, k).value;
      EXPECT_LE(relative_error(a, b), 1e-12) << to_string(k);
    }
  }
}

TEST(MonteCarlo, ConvergesToAnalyticAtModerateN) {
  const ToyProblem toy;
  RngStream r(2, StreamId::Verify);
  const double g = mc_ste_grad(toy, 200'000, 0.05, KernelKind::Rectangle, r);
  EXPECT_NEAR(g, analytic_grad(toy), 0.1 * analytic_grad(toy));
}

TEST(MonteCarlo, LambdaOnlyEstimatesScaledDensity) {
  ToyProblem toy;
  toy.decoder = 0.0;
  RngStream r(3, StreamId::Verify);
  const double g = mc_ste_grad(toy, 200'000, 0.05, KernelKind::Rectangle, r);
  const double expected = -0.1 * standard_normal_pdf(1.0);
  EXPECT_NEAR(g, expected, 0.1 * std::abs(expected));
}

// The exact estimator mean, by quadrature, against a large-sample average.
TEST(MonteCarlo, EstimatorMeanMatchesQuadrature) {
  const ToyProblem toy;
  RngStream r(4, StreamId::Verify);
  const auto xs = draw_toy_inputs(400'000, r);
  for (KernelKind k : kKernels) {
    const KdeEstimate e = kde_estimate(toy, xs, 0.2, k);
    EXPECT_NEAR(e.value, expected_kde_estimate(toy, 0.2, k), 5.0 * e.std_error) << to_string(k);
  }
}

TEST(MonteCarlo, BiasShrinksWithBandwidth) {
  const ToyProblem toy;
  const double g = analytic_grad(toy);
  double prev = 0.0;
  for (double eps : {0.02, 0.05, 0.1, 0.2, 0.5}) {
    const double bias = std::abs(expected_kde_estimate(toy, eps, KernelKind::Rectangle) - g);
    EXPECT_GT(bias, prev) << eps;
    prev = bias;
  }
}

TEST(Identity, RandomMultiFeatureInstances) {
  const IdentityCheck ic = check_ste_kde_identity(99, 100);
  EXPECT_LE(ic.max_relative_error, 1e-12);
  EXPECT_GT(ic.nonzero_features, 0u);
}

TEST(Report, JsonCarriesEveryCheck) {
  std::vector<CheckResult> results(2);
  results[0].name = "a";
  results[0].passed = true;
  results[1].name = "b";
  const auto j = to_json(results);
  EXPECT_FALSE(j.at("all_passed").get<bool>());
  EXPECT_EQ(j.at("checks").size(), 2u);
}
