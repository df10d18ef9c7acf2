#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "jumpsae/datagen.hpp"

using namespace jumpsae;

namespace {

GroundTruth small_truth(double p, double noise, double magnitude_std = 0.5) {
  RngStream r(1, StreamId::GroundTruth);
  GroundTruth gt = make_ground_truth(4, 8, p * 8.0, noise, r);
  gt.magnitude_std = magnitude_std;
  return gt;
}

}  // namespace

TEST(GroundTruth, UnitColumnsAndRequestedExpectedL0) {
  RngStream r(2, StreamId::GroundTruth);
  const GroundTruth gt = make_ground_truth(64, 256, 20.0, 0.01, r);
  for (std::size_t c = 0; c < 256; ++c) {
    double n2 = 0.0;
    for (std::size_t i = 0; i < 64; ++i) n2 += gt.dictionary(i, c) * gt.dictionary(i, c);
    EXPECT_NEAR(n2, 1.0, 1e-12);
  }
  EXPECT_NEAR(gt.expected_l0(), 20.0, 1e-12);
  EXPECT_THROW(make_ground_truth(4, 8, 8.0, 0.0, r), std::invalid_argument);
}

TEST(Generate, ZeroProbabilityAndNoiseGivesZeroBatch) {
  GroundTruth gt = small_truth(0.5, 0.0);
  gt.p_active.assign(8, 0.0);
  RngStream r(3, StreamId::TrainData);
  const SyntheticBatch b = generate(gt, 10, r);
  for (double v : b.batch.x.data()) EXPECT_EQ(v, 0.0);
}

TEST(Generate, SingleActiveFeatureIsScaledDictionaryColumn) {
  GroundTruth gt = small_truth(0.5, 0.0);
  gt.p_active.assign(8, 0.0);
  gt.p_active[3] = 0.999999;
  RngStream r(4, StreamId::TrainData);
  const SyntheticBatch b = generate(gt, 50, r);
  for (std::size_t s = 0; s < 50; ++s) {
    const double m = b.coefficients(s, 3);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(b.batch.x(s, c), m * gt.dictionary(c, 3));
  }
}

// With a constant magnitude every Bernoulli success is visible as a non-zero
// coefficient, so the activation rate can be counted directly.
TEST(Generate, ActivationRateWithinBinomialError) {
  const double p = 0.3;
  const GroundTruth gt = small_truth(p, 0.01, 0.0);
  RngStream r(5, StreamId::TrainData);
  const std::size_t n = 1'000'000;
  const SyntheticBatch b = generate(gt, n, r);
  const double tol = 3.0 * std::sqrt(p * (1 - p) / static_cast<double>(n));
  for (std::size_t i = 0; i < 8; ++i) {
    std::size_t active = 0;
    for (std::size_t s = 0; s < n; ++s) active += b.coefficients(s, i) > 0.0 ? 1 : 0;
    EXPECT_NEAR(static_cast<double>(active) / n, p, tol) << "feature " << i;
  }
}

// Under the default law a success has magnitude zero with probability
// P(N < -2), so the non-zero rate is p * Phi(2).
TEST(Generate, NonZeroRateAccountsForClippedMagnitudes) {
  const double p = 0.3;
  const GroundTruth gt = small_truth(p, 0.0);
  RngStream r(6, StreamId::TrainData);
  const std::size_t n = 400'000;
  const SyntheticBatch b = generate(gt, n, r);
  const double phi2 = 0.5 * std::erfc(-2.0 / std::sqrt(2.0));
  const double q = p * phi2;
  std::size_t active = 0;
  for (std::size_t s = 0; s < n; ++s) active += b.coefficients(s, 0) > 0.0 ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(active) / n, q, 4.0 * std::sqrt(q * (1 - q) / n));
}

TEST(Generate, DeterministicPerSeed) {
  const GroundTruth gt = small_truth(0.3, 0.01);
  RngStream a(7, StreamId::TrainData), b(7, StreamId::TrainData);
  EXPECT_EQ(generate(gt, 100, a).batch.x, generate(gt, 100, b).batch.x);
}

TEST(Normalizer, HandComputedScale) {
  const ActivationBatch b{Matrix::from_rows({{3, 4}, {0, 0}})};
  EXPECT_DOUBLE_EQ(fit_normalizer(b).scale, std::sqrt(12.5));
  EXPECT_NEAR(fit_normalizer(b).scale, 3.5355339059327378, 1e-15);
}

TEST(Normalizer, IdempotentAndHomogeneous) {
  const GroundTruth gt = small_truth(0.3, 0.01);
  RngStream r(8, StreamId::Calibration);
  ActivationBatch b = generate(gt, 5000, r).batch;
  const NormStats s = fit_normalizer(b);
  ActivationBatch scaled = b;
  for (double& v : scaled.x.data()) v *= 7.0;
  EXPECT_NEAR(fit_normalizer(scaled).scale, 7.0 * s.scale, 1e-12 * s.scale);
  s.apply_in_place(b);
  EXPECT_NEAR(fit_normalizer(b).scale, 1.0, 1e-12);
  double mean_sq = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) mean_sq += squared_norm(b.x.row(i));
  EXPECT_NEAR(mean_sq / b.size(), 1.0, 1e-6);
}

TEST(Normalizer, RejectsEmptyAndZeroSets) {
  EXPECT_THROW(fit_normalizer(ActivationBatch{Matrix(0, 3)}), std::invalid_argument);
  EXPECT_THROW(fit_normalizer(ActivationBatch{Matrix(2, 3)}), std::invalid_argument);
}

TEST(Sources, SyntheticSourceMatchesDirectGeneration) {
  const GroundTruth gt = small_truth(0.3, 0.01);
  SyntheticSource src(gt, RngStream(9, StreamId::TrainData), NormStats{2.0});
  RngStream r(9, StreamId::TrainData);
  const Matrix direct = generate(gt, 6, r).batch.x;
  const ActivationBatch b = src.next(6);
  EXPECT_EQ(b.norm_scale, 2.0);
  for (std::size_t i = 0; i < direct.size(); ++i) EXPECT_EQ(b.x.data()[i], direct.data()[i] / 2.0);
}

TEST(Sources, MatrixSourceCyclesInOrder) {
  MatrixSource src(Matrix::from_rows({{1}, {2}, {3}}), NormStats{1.0});
  EXPECT_EQ(src.next(2).x, Matrix::from_rows({{1}, {2}}));
  EXPECT_EQ(src.next(3).x, Matrix::from_rows({{3}, {1}, {2}}));
}

TEST(ActivationFile, RoundTripAndLayout) {
  const Matrix x = Matrix::from_rows({{1.5, -2.0, 3.25}, {0.0, 1e-300, 7.0}});
  const auto path = std::filesystem::temp_directory_path() / "jumpsae_act_test.bin";
  save_activations(path.string(), x);
  EXPECT_EQ(std::filesystem::file_size(path), 4u + 16u + 6u * 8u);
  EXPECT_EQ(load_activations(path.string()), x);
  std::filesystem::resize_file(path, 4u + 16u + 5u * 8u);
  EXPECT_THROW(load_activations(path.string()), std::runtime_error);
  std::filesystem::remove(path);
}

TEST(GroundTruthJson, RoundTripIsExact) {
  const GroundTruth gt = small_truth(0.3, 0.01);
  const GroundTruth back = ground_truth_from_json(nlohmann::json::parse(to_json(gt).dump()));
  EXPECT_EQ(back.dictionary, gt.dictionary);
  EXPECT_EQ(back.p_active, gt.p_active);
  EXPECT_EQ(back.noise_std, gt.noise_std);
}
