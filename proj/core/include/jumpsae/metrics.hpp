#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include <nlohmann/json.hpp>

#include "jumpsae/datagen.hpp"
#include "jumpsae/sae_model.hpp"

namespace jumpsae {

inline constexpr double kHighFrequency10pct = 0.1;
inline constexpr double kHighFrequency1pct = 0.01;

struct EvalReport {
  std::size_t eval_size = 0;
  double mean_l0 = 0.0;
  double fvu = 0.0;
  Vector freq;
  /// Features with zero activations over the whole eval set.
  double dead_frac = 0.0;
  double high_freq_frac_10pct = 0.0;
  double high_freq_frac_1pct = 0.0;
  /// Mean r_L0 over examples with a non-zero attribution-weighted vector.
  std::optional<double> r_l0_mean;
  std::optional<double> recovery;
};

struct EvalOptions {
  bool use_pre_enc_bias = kDefaultPreEncoderBias;
  /// Gradient of a linear probe on x, standing in for the downstream loss in
  /// the attribution vector W_dec^T grad_x L. Empty disables r_L0.
  Vector probe;
  /// Ground-truth dictionary (n x M*) for the recovery score, if known.
  std::optional<Matrix> dictionary;
};

/// Streams eval batches through the SAE and aggregates every statistic.
class EvalAccumulator {
public:
  EvalAccumulator(const SaeParams& params, EvalOptions options);
  void add(const ActivationBatch& batch);
  EvalReport finish() const;

private:
  const SaeParams& params_;
  EvalOptions options_;
  Vector attribution_;  // W_dec^T probe
  std::size_t count_ = 0;
  double l0_sum_ = 0.0;
  double residual_sq_sum_ = 0.0;
  double x_sq_sum_ = 0.0;
  Vector x_sum_;
  std::vector<std::size_t> fire_counts_;
  double r_l0_sum_ = 0.0;
  std::size_t r_l0_count_ = 0;
};

EvalReport evaluate(const SaeParams& params, const ActivationBatch& eval_set,
                    const EvalOptions& options = {});
EvalReport evaluate(const SaeParams& params, BatchSource& source, std::size_t total,
                    std::size_t chunk, const EvalOptions& options = {});

/// Mean ||x - x_hat||^2 over mean ||x - x_bar||^2. Throws on zero variance.
double fvu(const Matrix& x, const Matrix& reconstruction);
double fvu(const SaeParams& params, const ActivationBatch& eval_set,
           bool use_pre_enc_bias = kDefaultPreEncoderBias);

struct FrequencyStats {
  Vector freq;
  double dead_frac = 0.0;
  double high_freq_frac_10pct = 0.0;
  double high_freq_frac_1pct = 0.0;
};

FrequencyStats frequency_stats(std::span<const std::size_t> fire_counts, std::size_t eval_size);
FrequencyStats frequency_stats(const SaeParams& params, const ActivationBatch& eval_set,
                               bool use_pre_enc_bias = kDefaultPreEncoderBias);

/// Uniformity of active feature importance, exp(S(p)) / ||y||_0 with
/// y = f * attribution and p = |y| / sum |y|. Empty when y is all zero.
std::optional<double> effective_sparsity(std::span<const double> features,
                                         std::span<const double> attribution);

/// Mean over ground-truth columns of the best absolute cosine similarity
/// against the learned decoder columns.
double dictionary_recovery(const Matrix& learned_dec, const Matrix& gt_dictionary);

nlohmann::json to_json(const EvalReport& report);

}  // namespace jumpsae
