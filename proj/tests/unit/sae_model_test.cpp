#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "jumpsae/sae_model.hpp"
#include "test_util.hpp"

using namespace jumpsae;
using jumpsae::testing::random_params;

namespace {

SaeParams scalar_jumprelu(double theta) {
  SaeParams p = make_params(Arch::JumpRelu, 1, 1);
  p.w_enc(0, 0) = 1.0;
  p.w_dec(0, 0) = 1.0;
  p.log_theta[0] = std::log(theta);
  return p;
}

ActivationBatch batch_of(std::vector<std::vector<double>> rows) {
  return ActivationBatch{Matrix::from_rows(rows)};
}

}  // namespace

TEST(Forward, JumpReluScalarAboveAndBelowThreshold) {
  const SaeParams p = scalar_jumprelu(0.5);
  const ForwardTrace above = forward(p, batch_of({{2.0}}));
  EXPECT_DOUBLE_EQ(above.features(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(above.reconstruction(0, 0), 2.0);
  const ForwardTrace below = forward(p, batch_of({{0.3}}));
  EXPECT_EQ(below.features(0, 0), 0.0);
  EXPECT_EQ(below.reconstruction(0, 0), 0.0);
}

TEST(Forward, GatedComposesGateAndMagnitude) {
  // Identity encoder, r_mag = 0: pi_gate = x + b_gate, pi_mag = x + b_mag.
  SaeParams p = make_params(Arch::Gated, 2, 2);
  p.w_enc = Matrix::from_rows({{1, 0}, {0, 1}});
  p.w_dec = Matrix::from_rows({{1, 0}, {0, 1}});
  p.b_gate = {-0.8, -2.1};
  p.b_mag = {0.5, 0.0};
  const ForwardTrace t = forward(p, batch_of({{1.0, 2.0}}), false);
  EXPECT_NEAR(t.pre_activations(0, 0), 0.2, 1e-15);
  EXPECT_NEAR(t.pre_activations(0, 1), -0.1, 1e-15);
  EXPECT_DOUBLE_EQ(t.pre_mag(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(t.pre_mag(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(t.features(0, 0), 1.5);
  EXPECT_EQ(t.features(0, 1), 0.0);
}

TEST(Forward, PreEncoderBiasSubtractsDecoderBias) {
  SaeParams p = make_params(Arch::Relu, 1, 1);
  p.w_enc(0, 0) = 1.0;
  p.w_dec(0, 0) = 1.0;
  p.b_dec = {0.5};
  EXPECT_DOUBLE_EQ(forward(p, batch_of({{2.0}}), true).pre_activations(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(forward(p, batch_of({{2.0}}), false).pre_activations(0, 0), 2.0);
}

TEST(Forward, RejectsWrongDimension) {
  const SaeParams p = scalar_jumprelu(0.5);
  EXPECT_THROW(forward(p, batch_of({{1.0, 2.0}})), std::invalid_argument);
}

TEST(Forward, TinyThresholdReproducesRelu) {
  RngStream r(1, StreamId::Verify);
  SaeParams jr = random_params(Arch::JumpRelu, 6, 9, r);
  for (double& v : jr.log_theta) v = std::log(1e-300);
  SaeParams relu = jr;
  relu.arch = Arch::Relu;
  relu.log_theta.clear();
  const ActivationBatch b{gaussian(r, 20, 6)};
  EXPECT_EQ(forward(jr, b).features, forward(relu, b).features);
}

// Gated with r_mag = 0 and b_gate = b_mag is a ReLU gated by pi > 0; check
// against a direct loop.
TEST(Forward, GatedWithTiedBiasesMatchesBruteForce) {
  RngStream r(2, StreamId::Verify);
  for (int trial = 0; trial < 20; ++trial) {
    SaeParams p = random_params(Arch::Gated, 5, 7, r);
    for (double& v : p.r_mag) v = 0.0;
    p.b_mag = p.b_gate;
    const ActivationBatch b{gaussian(r, 8, 5)};
    const ForwardTrace t = forward(p, b);
    for (std::size_t s = 0; s < 8; ++s) {
      for (std::size_t i = 0; i < 7; ++i) {
        double pre = p.b_gate[i];
        for (std::size_t c = 0; c < 5; ++c) pre += p.w_enc(i, c) * (b.x(s, c) - p.b_dec[c]);
        EXPECT_NEAR(t.features(s, i), pre > 0.0 ? pre : 0.0, 1e-12);
      }
    }
  }
}

TEST(Forward, MagnitudeEncoderIsTiedToGate) {
  RngStream r(3, StreamId::Verify);
  const SaeParams p = random_params(Arch::GatedRiL1, 4, 6, r);
  const Matrix w_mag = p.magnitude_encoder();
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c = 0; c < 4; ++c)
      EXPECT_EQ(w_mag(i, c), std::exp(p.r_mag[i]) * p.w_enc(i, c));
}

TEST(Forward, FeaturesNonNegativeAndDeterministic) {
  RngStream r(4, StreamId::Verify);
  for (Arch a : {Arch::Relu, Arch::JumpRelu, Arch::Gated, Arch::GatedRiL1}) {
    const SaeParams p = random_params(a, 5, 8, r);
    const ActivationBatch b{gaussian(r, 16, 5)};
    const ForwardTrace t1 = forward(p, b);
    const ForwardTrace t2 = forward(p, b);
    EXPECT_EQ(t1.reconstruction, t2.reconstruction);
    for (double v : t1.features.data()) EXPECT_GE(v, 0.0);
  }
}

TEST(L0, CountsStrictlyPositiveEntries) {
  ForwardTrace t;
  t.features = Matrix::from_rows({{0, 0.1, 0, 3}, {0, 0, 0, 0}});
  EXPECT_EQ(l0_of(t), (std::vector<std::size_t>{2, 0}));
}

TEST(L0, TopKWithPositiveDistinctPreActivationsActivatesExactlyK) {
  SaeParams p = make_params(Arch::TopK, 3, 5, 2);
  p.w_enc = Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {0, 1, 1}});
  const ForwardTrace t = forward(p, batch_of({{0.1, 0.2, 0.4}}));
  EXPECT_EQ(l0_of(t), (std::vector<std::size_t>{2}));
  EXPECT_DOUBLE_EQ(t.features(0, 4), 0.6);
  EXPECT_DOUBLE_EQ(t.features(0, 2), 0.4);
}

TEST(Params, NamesRoundTripAndValidate) {
  for (Arch a : {Arch::Relu, Arch::JumpRelu, Arch::Gated, Arch::GatedRiL1, Arch::TopK}) {
    EXPECT_EQ(parse_arch(to_string(a)), a);
    EXPECT_NO_THROW(validate(make_params(a, 3, 4, 2)));
  }
  EXPECT_THROW(parse_arch("sigmoid"), std::invalid_argument);
  SaeParams bad = make_params(Arch::JumpRelu, 3, 4);
  bad.log_theta.pop_back();
  EXPECT_THROW(validate(bad), std::invalid_argument);
  EXPECT_THROW(make_params(Arch::TopK, 3, 4, 5), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsBitExactForEveryArchitecture) {
  RngStream r(5, StreamId::Verify);
  for (Arch a : {Arch::Relu, Arch::JumpRelu, Arch::Gated, Arch::GatedRiL1, Arch::TopK}) {
    const SaeParams p = random_params(a, 3, 5, r);
    const auto bytes = encode_checkpoint(p);
    const SaeParams back = decode_checkpoint(bytes);
    EXPECT_EQ(back, p);
    EXPECT_EQ(encode_checkpoint(back), bytes);
  }
}

TEST(Checkpoint, HeaderLayout) {
  const SaeParams p = make_params(Arch::TopK, 2, 3, 1);
  const auto bytes = encode_checkpoint(p);
  ASSERT_GE(bytes.size(), 29u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "SAE1");
  EXPECT_EQ(bytes[4], 4);
  EXPECT_EQ(bytes[5], 2);   // n, little-endian
  EXPECT_EQ(bytes[13], 3);  // M
  EXPECT_EQ(bytes[21], 1);  // K
  // w_enc, b_enc, w_dec, b_dec
  EXPECT_EQ(bytes.size(), 29u + 8u * (6 + 3 + 6 + 2));
}

TEST(Checkpoint, RejectsCorruptInput) {
  auto bytes = encode_checkpoint(make_params(Arch::Relu, 2, 2));
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_checkpoint(truncated), std::runtime_error);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_checkpoint(trailing), std::runtime_error);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), std::runtime_error);
  auto bad_tag = bytes;
  bad_tag[4] = 9;
  EXPECT_THROW(decode_checkpoint(bad_tag), std::runtime_error);
}

TEST(Checkpoint, FileRoundTrip) {
  RngStream r(6, StreamId::Verify);
  const SaeParams p = random_params(Arch::JumpRelu, 4, 3, r);
  const auto path = std::filesystem::temp_directory_path() / "jumpsae_ckpt_test.bin";
  save_checkpoint(path.string(), p);
  EXPECT_EQ(load_checkpoint(path.string()), p);
  std::filesystem::remove(path);
}
