#pragma once

#include <cstddef>
#include <vector>

#include "jumpsae/rng.hpp"
#include "jumpsae/sae_model.hpp"

namespace jumpsae {

struct AdamConfig {
  double beta1 = 0.0;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam moments, shaped like the parameters they track.
struct OptimState {
  std::size_t step = 0;
  ParamTensors m;
  ParamTensors v;

  static OptimState zeros_like(const SaeParams& p);
  friend bool operator==(const OptimState&, const OptimState&) = default;
};

/// One bias-corrected Adam update: p -= lr * m_hat / (sqrt(v_hat) + eps).
/// Throws if any update is non-finite, naming the parameter.
void adam_step(SaeParams& params, OptimState& state, const GradientSet& grads, double lr,
               const AdamConfig& cfg = {});

struct Schedule {
  double base_lr = 7e-5;
  std::size_t lr_warmup_steps = 1000;
  std::size_t lambda_warmup_steps = 10000;
  std::size_t batch_size = 4096;
};

/// Half-cosine ramp from 0.1 * base_lr at t = 0 to base_lr at the end of
/// warmup, constant afterwards.
double lr_at(const Schedule& schedule, std::size_t t);

/// Linear sparsity-coefficient warmup, lambda_final * min(t / W, 1).
double lambda_at(const Schedule& schedule, double lambda_final, std::size_t t);

/// Removes from each decoder-column gradient its component along d_i.
/// No-op for architectures without the unit-norm constraint.
void project_decoder_gradients(const SaeParams& params, GradientSet& grads);

/// Rescales every decoder column to unit norm. Zero-norm columns are redrawn
/// from `rng`; the return value counts them so the caller can warn.
std::size_t renormalize_decoder(SaeParams& params, RngStream& rng);

/// Re-initialises dead features: decoder column a random unit vector, encoder
/// row 0.2 times that column, encoder-side biases zero.
void resample_dead(SaeParams& params, const std::vector<bool>& dead_mask, RngStream& rng);

/// Zeroes Adam moments belonging to the masked features.
void reset_optimizer_rows(OptimState& state, const SaeParams& params,
                          const std::vector<bool>& mask);

}  // namespace jumpsae
