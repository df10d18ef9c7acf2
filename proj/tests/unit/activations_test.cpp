#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "jumpsae/activations.hpp"
#include "jumpsae/rng.hpp"

using namespace jumpsae;

namespace {
constexpr KernelKind kKernels[] = {KernelKind::Rectangle, KernelKind::Triangular,
                                   KernelKind::Gaussian, KernelKind::Epanechnikov};
}

TEST(JumpRelu, PassesValuesStrictlyAboveThreshold) {
  EXPECT_EQ(jumprelu(2.0, 0.5), 2.0);
  EXPECT_EQ(jumprelu(0.3, 0.5), 0.0);
  EXPECT_EQ(jumprelu(0.5, 0.5), 0.0);
  EXPECT_THROW(jumprelu(1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(jumprelu(1.0, -0.1), std::invalid_argument);
}

TEST(JumpRelu, EqualsInputTimesStep) {
  RngStream r(1, StreamId::Verify);
  for (int i = 0; i < 1000; ++i) {
    const double z = 2.0 * r.normal();
    const double theta = 0.01 + r.uniform();
    EXPECT_EQ(jumprelu(z, theta), z * step(z, theta));
  }
}

TEST(Bandwidth, MustBePositive) {
  EXPECT_THROW(Bandwidth(0.0), std::invalid_argument);
  EXPECT_THROW(Bandwidth(-1e-3), std::invalid_argument);
  EXPECT_EQ(Bandwidth(kDefaultBandwidth).value(), 0.001);
}

TEST(Kernel, PointValues) {
  EXPECT_EQ(kernel_eval(KernelKind::Rectangle, 0.3), 1.0);
  EXPECT_EQ(kernel_eval(KernelKind::Rectangle, 0.7), 0.0);
  EXPECT_EQ(kernel_eval(KernelKind::Epanechnikov, 0.0), 0.75);
  EXPECT_EQ(kernel_eval(KernelKind::Triangular, 0.25), 0.75);
  EXPECT_DOUBLE_EQ(kernel_eval(KernelKind::Gaussian, 1.0), std::exp(-0.5) / std::sqrt(2.0 * M_PI));
}

TEST(Kernel, NamesRoundTrip) {
  for (KernelKind k : kKernels) EXPECT_EQ(parse_kernel(to_string(k)), k);
  EXPECT_THROW(parse_kernel("box"), std::invalid_argument);
}

// Riemann sums over [-10, 10] at step 1e-4.
TEST(Kernel, IntegratesToOneWithZeroMeanAndPositiveVariance) {
  const double h = 1e-4;
  for (KernelKind k : kKernels) {
    double mass = 0, first = 0, second = 0;
    for (long i = 0; i <= 200000; ++i) {
      const double z = -10.0 + h * static_cast<double>(i);
      const double v = kernel_eval(k, z);
      ASSERT_GE(v, 0.0);
      mass += v * h;
      first += z * v * h;
      second += z * z * v * h;
    }
    EXPECT_NEAR(mass, 1.0, 1e-3) << to_string(k);
    EXPECT_NEAR(first, 0.0, 1e-3) << to_string(k);
    EXPECT_GT(second, 0.0) << to_string(k);
  }
}

TEST(PseudoGrad, JumpReluThetaExamples) {
  EXPECT_DOUBLE_EQ(pseudo_grad_jumprelu_theta(1.0003, 1.0, Bandwidth(0.001), KernelKind::Rectangle),
                   -1000.0);
  EXPECT_EQ(pseudo_grad_jumprelu_theta(1.002, 1.0, Bandwidth(0.001), KernelKind::Rectangle), 0.0);
  EXPECT_DOUBLE_EQ(pseudo_grad_jumprelu_theta(0.5, 0.5, Bandwidth(1.0), KernelKind::Epanechnikov),
                   -0.375);
}

TEST(PseudoGrad, StepThetaExamples) {
  EXPECT_DOUBLE_EQ(pseudo_grad_step_theta(1.0003, 1.0, Bandwidth(0.001), KernelKind::Rectangle),
                   -1000.0);
  EXPECT_EQ(pseudo_grad_step_theta(0.0, 1.0, Bandwidth(0.001), KernelKind::Rectangle), 0.0);
}

TEST(PseudoGrad, RatioOfJumpReluToStepIsTheta) {
  RngStream r(2, StreamId::Verify);
  for (KernelKind k : kKernels) {
    for (int i = 0; i < 200; ++i) {
      const double theta = 0.1 + r.uniform();
      const Bandwidth eps(0.05);
      const double z = theta + 0.04 * (2.0 * r.uniform() - 1.0);
      const double step_g = pseudo_grad_step_theta(z, theta, eps, k);
      if (step_g == 0.0) continue;
      EXPECT_NEAR(pseudo_grad_jumprelu_theta(z, theta, eps, k) / step_g, theta, 1e-14 * theta);
    }
  }
}

TEST(PseudoGrad, VanishesOutsideKernelSupport) {
  const double theta = 1.0;
  const Bandwidth eps(0.01);
  for (KernelKind k : kKernels) {
    const double radius = std::isinf(kernel_support_radius(k)) ? 10.0 : kernel_support_radius(k);
    for (double sign : {-1.0, 1.0}) {
      const double z = theta + sign * radius * eps.value() * 1.0001;
      EXPECT_LE(std::abs(pseudo_grad_jumprelu_theta(z, theta, eps, k)), 1e-20) << to_string(k);
      EXPECT_LE(std::abs(pseudo_grad_step_theta(z, theta, eps, k)), 1e-20) << to_string(k);
    }
  }
}

TEST(TopK, SelectsLargestWithLowIndexTies) {
  EXPECT_EQ(topk_select(std::vector<double>{3, 1, 2, 0.5}, 2), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(topk_select(std::vector<double>{1, 1, 1}, 1), (std::vector<std::size_t>{0}));
  EXPECT_EQ(topk_select(std::vector<double>{-1, -2}, 2), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(topk_select(std::vector<double>{0, 5, 5, 5}, 2), (std::vector<std::size_t>{1, 2}));
}

TEST(TopK, RejectsOutOfRangeK) {
  EXPECT_THROW(topk_select(std::vector<double>{1, 2}, 0), std::invalid_argument);
  EXPECT_THROW(topk_select(std::vector<double>{1, 2}, 3), std::invalid_argument);
}

TEST(TopK, AgreesWithSortingOnRandomInputs) {
  RngStream r(4, StreamId::Verify);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + r.below(40);
    const std::size_t k = 1 + r.below(n);
    std::vector<double> v(n);
    for (double& x : v) x = static_cast<double>(r.below(10));  // plenty of ties
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] > v[b]; });
    order.resize(k);
    std::sort(order.begin(), order.end());
    EXPECT_EQ(topk_select(v, k), order);
  }
}
