#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "jumpsae/datagen.hpp"
#include "jumpsae/metrics.hpp"
#include "test_util.hpp"

using namespace jumpsae;
using jumpsae::testing::random_params;

namespace {

Matrix random_unit_columns(std::size_t n, std::size_t m, RngStream& r) {
  Matrix d = gaussian(r, n, m);
  for (std::size_t c = 0; c < m; ++c) {
    double n2 = 0;
    for (std::size_t i = 0; i < n; ++i) n2 += d(i, c) * d(i, c);
    for (std::size_t i = 0; i < n; ++i) d(i, c) /= std::sqrt(n2);
  }
  return d;
}

}  // namespace

TEST(Fvu, ReferencePredictors) {
  RngStream r(1, StreamId::Verify);
  const Matrix x = gaussian(r, 50, 4);
  Vector mean(4, 0.0);
  for (std::size_t s = 0; s < 50; ++s)
    for (std::size_t c = 0; c < 4; ++c) mean[c] += x(s, c) / 50.0;
  Matrix at_mean(50, 4), halfway(50, 4);
  for (std::size_t s = 0; s < 50; ++s) {
    for (std::size_t c = 0; c < 4; ++c) {
      at_mean(s, c) = mean[c];
      halfway(s, c) = mean[c] + 0.5 * (x(s, c) - mean[c]);
    }
  }
  EXPECT_EQ(fvu(x, x), 0.0);
  EXPECT_NEAR(fvu(x, at_mean), 1.0, 1e-14);
  EXPECT_NEAR(fvu(x, halfway), 0.25, 1e-14);
  EXPECT_THROW(fvu(Matrix(3, 2, 1.0), Matrix(3, 2, 1.0)), std::invalid_argument);
}

TEST(Frequency, BinsAndDeadCounting) {
  // Features fire on 0, 100, 5 and 20 of 100 tokens.
  const std::vector<std::size_t> counts{0, 100, 5, 20};
  const FrequencyStats f = frequency_stats(counts, 100);
  EXPECT_EQ(f.freq, (Vector{0.0, 1.0, 0.05, 0.2}));
  EXPECT_DOUBLE_EQ(f.dead_frac, 0.25);
  EXPECT_DOUBLE_EQ(f.high_freq_frac_10pct, 0.5);
  EXPECT_DOUBLE_EQ(f.high_freq_frac_1pct, 0.75);
  const double alive = static_cast<double>(std::count_if(f.freq.begin(), f.freq.end(),
                                                         [](double v) { return v > 0.0; })) / 4.0;
  EXPECT_DOUBLE_EQ(f.dead_frac + alive, 1.0);
}

TEST(EffectiveSparsity, ExampleValues) {
  EXPECT_DOUBLE_EQ(*effective_sparsity(Vector{1, 1, 1}, Vector{2, 2, 2}), 1.0);
  EXPECT_DOUBLE_EQ(*effective_sparsity(Vector{0, 3, 0}, Vector{1, 1, 1}), 1.0);
  const double s = -(0.9 * std::log(0.9) + 0.1 * std::log(0.1));
  EXPECT_NEAR(*effective_sparsity(Vector{0.9, 0.1}, Vector{1, 1}), std::exp(s) / 2.0, 1e-15);
  EXPECT_NEAR(*effective_sparsity(Vector{0.9, 0.1}, Vector{1, 1}), 0.692072744230843, 1e-12);
  EXPECT_FALSE(effective_sparsity(Vector{0, 0}, Vector{1, 1}).has_value());
  EXPECT_FALSE(effective_sparsity(Vector{1, 1}, Vector{0, 0}).has_value());
}

TEST(EffectiveSparsity, BoundsOnRandomVectors) {
  RngStream r(2, StreamId::Verify);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t m = 1 + r.below(32);
    Vector f(m), a(m);
    for (std::size_t i = 0; i < m; ++i) {
      f[i] = r.uniform() < 0.5 ? 0.0 : std::exp(3.0 * r.normal());
      a[i] = r.normal();
    }
    const auto v = effective_sparsity(f, a);
    if (!v) continue;
    const double active = static_cast<double>(std::count_if(f.begin(), f.end(), [](double x) { return x != 0.0; }));
    EXPECT_LE(*v, 1.0 + 1e-12);
    EXPECT_GE(*v, 1.0 / active - 1e-12);
  }
}

TEST(Recovery, PermutedAndSignFlippedDictionaryScoresOne) {
  RngStream r(3, StreamId::Verify);
  const Matrix gt = random_unit_columns(16, 24, r);
  Matrix learned(16, 24);
  for (std::size_t c = 0; c < 24; ++c) {
    const std::size_t src = (c * 7) % 24;
    const double sign = c % 2 == 0 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < 16; ++i) learned(i, c) = sign * 3.0 * gt(i, src);
  }
  EXPECT_NEAR(dictionary_recovery(learned, gt), 1.0, 1e-14);
}

TEST(Recovery, DuplicatedColumnStillBounded) {
  RngStream r(4, StreamId::Verify);
  Matrix gt = random_unit_columns(8, 5, r);
  gt.set_column(4, gt.column(0));
  const Matrix learned = random_unit_columns(8, 5, r);
  const double v = dictionary_recovery(learned, gt);
  EXPECT_GT(v, 0.0);
  EXPECT_LE(v, 1.0 + 1e-15);
  EXPECT_NEAR(dictionary_recovery(gt, gt), 1.0, 1e-14);
}

// The null: a random unit dictionary against the default-size ground truth.
// The expected score is estimated first from independent draws, then the
// implementation is checked against it.
TEST(Recovery, RandomDictionaryNullBelowPointSix) {
  RngStream r(5, StreamId::Verify);
  const Matrix gt = random_unit_columns(64, 256, r);
  double null_sum = 0.0;
  const int trials = 5;
  for (int t = 0; t < trials; ++t) {
    const Matrix learned = random_unit_columns(64, 256, r);
    double total = 0.0;
    for (std::size_t i = 0; i < 256; ++i) {
      double best = 0.0;
      for (std::size_t j = 0; j < 256; ++j) {
        double d = 0.0;
        for (std::size_t c = 0; c < 64; ++c) d += gt(c, i) * learned(c, j);
        best = std::max(best, std::abs(d));
      }
      total += best;
    }
    const double expected = total / 256.0;
    EXPECT_NEAR(dictionary_recovery(learned, gt), expected, 1e-12);
    null_sum += expected;
  }
  EXPECT_LT(null_sum / trials, 0.6);
}

TEST(Evaluate, StreamingMatchesSingleBatch) {
  RngStream r(6, StreamId::Verify);
  const SaeParams p = random_params(Arch::JumpRelu, 5, 7, r);
  const Matrix x = gaussian(r, 40, 5);
  EvalOptions opts;
  opts.probe = {1, -1, 0.5, 0, 2};
  const EvalReport whole = evaluate(p, ActivationBatch{x}, opts);
  MatrixSource src(x, NormStats{1.0});
  const EvalReport streamed = evaluate(p, src, 40, 7, opts);
  EXPECT_EQ(whole.eval_size, 40u);
  EXPECT_EQ(streamed.eval_size, 40u);
  EXPECT_NEAR(whole.fvu, streamed.fvu, 1e-12);
  EXPECT_EQ(whole.freq, streamed.freq);
  EXPECT_DOUBLE_EQ(whole.mean_l0, streamed.mean_l0);
  ASSERT_TRUE(whole.r_l0_mean.has_value());
  EXPECT_NEAR(*whole.r_l0_mean, *streamed.r_l0_mean, 1e-12);
  EXPECT_NEAR(whole.fvu, fvu(p, ActivationBatch{x}), 1e-12);
}

TEST(Evaluate, ReportFractionsInRangeAndJsonFields) {
  RngStream r(7, StreamId::Verify);
  const SaeParams p = random_params(Arch::Relu, 4, 6, r);
  EvalOptions opts;
  opts.dictionary = random_unit_columns(4, 3, r);
  const EvalReport rep = evaluate(p, ActivationBatch{gaussian(r, 30, 4)}, opts);
  for (double v : {rep.dead_frac, rep.high_freq_frac_10pct, rep.high_freq_frac_1pct}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_GE(rep.fvu, 0.0);
  const auto j = to_json(rep);
  EXPECT_EQ(j.at("eval_size").get<std::size_t>(), 30u);
  EXPECT_TRUE(j.at("r_l0_mean").is_null());
  EXPECT_TRUE(j.at("recovery").is_number());
}
