#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "jumpsae/activations.hpp"
#include "jumpsae/sae_model.hpp"

namespace jumpsae {

enum class LossKind {
  L1,             // ReLU SAE: recon + lambda ||f||_1
  RiL1,           // ReLU SAE: recon + lambda sum_i f_i ||d_i||
  L0,             // JumpReLU: recon + lambda ||f||_0, thresholds trained by STE
  TargetL0,       // JumpReLU: recon + lambda (||f||_0 / target - 1)^2
  TopKAuxK,       // TopK: recon + AuxK dead-feature reconstruction
  GatedOriginal,  // Gated: recon + lambda ||relu(pi_gate)||_1 + frozen-decoder aux
  GatedRiL1,      // Gated, RI-L1 penalty on the gate path, decoder unfrozen in aux
};

std::string_view to_string(LossKind k) noexcept;
LossKind parse_loss_kind(std::string_view name);
/// The architecture a loss kind trains.
Arch arch_for(LossKind k) noexcept;
LossKind default_loss_for(Arch a) noexcept;

inline constexpr std::size_t kDefaultAuxK = 512;
/// AuxK coefficient. Not stated alongside the AuxK reference; taken from the
/// TopK SAE convention.
inline constexpr double kDefaultAuxAlpha = 1.0 / 32.0;

struct LossSpec {
  LossKind kind = LossKind::L0;
  double lambda = 0.0;
  double l0_target = 0.0;  // TargetL0 only
  std::size_t k_aux = kDefaultAuxK;
  double aux_alpha = kDefaultAuxAlpha;
  Bandwidth bandwidth{kDefaultBandwidth};
  KernelKind kernel = KernelKind::Rectangle;
  bool use_pre_enc_bias = kDefaultPreEncoderBias;
};

/// Throws std::invalid_argument if `spec` does not fit `params`.
void check_compatible(const SaeParams& params, const LossSpec& spec);

/// State that lives outside the parameters but changes the loss.
struct LossContext {
  /// Features considered dead (TopK AuxK). Empty means none.
  std::vector<bool> dead_mask;
  /// Frozen decoder copy for the GatedOriginal auxiliary term. When null the
  /// current decoder values are used, still without gradient.
  const SaeParams* frozen_decoder = nullptr;
};

struct LossTerms {
  double total = 0.0;
  double recon = 0.0;
  double sparsity = 0.0;
  double aux = 0.0;
};

struct LossAndGradient {
  LossTerms terms;
  GradientSet grads;
  ForwardTrace trace;
};

/// Batch-mean loss terms.
LossTerms loss(const SaeParams& params, const ActivationBatch& batch, const LossSpec& spec,
               const LossContext& ctx = {});

/// Batch-mean gradients. Smooth paths are exact; log_theta receives the
/// straight-through pseudo-gradient chained through theta = exp(log_theta).
GradientSet backward(const SaeParams& params, const ActivationBatch& batch, const LossSpec& spec,
                     const LossContext& ctx = {});

/// One forward pass, loss terms and gradients together.
LossAndGradient loss_and_grad(const SaeParams& params, const ActivationBatch& batch,
                              const LossSpec& spec, const LossContext& ctx = {});

/// AuxK: alpha * mean ||e - e_hat||^2 where e = x - x_hat is the (detached)
/// main residual and e_hat is the decoder applied to the top `k_aux`
/// pre-activations among dead features. Zero when nothing is dead or alpha = 0.
double aux_k_loss(const SaeParams& params, const ActivationBatch& batch,
                  const std::vector<bool>& dead_mask, std::size_t k_aux = kDefaultAuxK,
                  double alpha = kDefaultAuxAlpha,
                  bool use_pre_enc_bias = kDefaultPreEncoderBias);

}  // namespace jumpsae
