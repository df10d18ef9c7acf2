#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jumpsae/tensor.hpp"

namespace jumpsae {

/// SAE architecture. The numeric values are the checkpoint tag byte.
enum class Arch : std::uint8_t { Relu = 0, JumpRelu = 1, Gated = 2, GatedRiL1 = 3, TopK = 4 };

std::string_view to_string(Arch a) noexcept;
Arch parse_arch(std::string_view name);
bool is_gated(Arch a) noexcept;
/// Every architecture except GatedRiL1 keeps decoder columns at unit norm.
bool uses_unit_norm_decoder(Arch a) noexcept;

/// N input vectors in R^n, already divided by `norm_scale`.
struct ActivationBatch {
  Matrix x;
  double norm_scale = 1.0;

  std::size_t size() const noexcept { return x.rows(); }
  std::size_t dim() const noexcept { return x.cols(); }
};

/// The tensors shared by parameters and their gradients. Tensors an
/// architecture does not use are left empty.
struct ParamTensors {
  Matrix w_enc;      // M x n
  Vector b_enc;      // M (non-gated)
  Matrix w_dec;      // n x M, column i is the dictionary direction d_i
  Vector b_dec;      // n
  Vector log_theta;  // M (JumpRelu)
  Vector r_mag;      // M (gated)
  Vector b_gate;     // M (gated)
  Vector b_mag;      // M (gated)

  /// Visits every non-empty tensor in checkpoint order.
  template <class F>
  void for_each(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit_impl(*this, f);
  }

  std::size_t parameter_count() const;

  friend bool operator==(const ParamTensors&, const ParamTensors&) = default;

private:
  template <class Self, class F>
  static void visit_impl(Self& self, F& f) {
    auto emit = [&](std::string_view name, auto& t) {
      if (!t.empty()) {
        if constexpr (requires { t.data(); t.rows(); }) {
          f(name, t.data());
        } else {
          f(name, std::span(t));
        }
      }
    };
    emit("w_enc", self.w_enc);
    emit("b_enc", self.b_enc);
    emit("w_dec", self.w_dec);
    emit("b_dec", self.b_dec);
    emit("log_theta", self.log_theta);
    emit("r_mag", self.r_mag);
    emit("b_gate", self.b_gate);
    emit("b_mag", self.b_mag);
  }
};

struct SaeParams : ParamTensors {
  Arch arch = Arch::Relu;
  std::size_t k = 0;  // TopK only

  std::size_t input_dim() const noexcept { return w_enc.cols(); }
  std::size_t width() const noexcept { return w_enc.rows(); }

  /// exp(log_theta); JumpRelu only.
  Vector thresholds() const;
  /// W_mag = diag(exp(r_mag)) W_enc, derived on demand and never stored.
  Matrix magnitude_encoder() const;
  /// ||d_i||_2 for every decoder column.
  Vector decoder_norms() const;

  friend bool operator==(const SaeParams&, const SaeParams&) = default;
};

/// Zero-valued parameters with the tensor shapes `arch` requires.
SaeParams make_params(Arch arch, std::size_t input_dim, std::size_t width, std::size_t k = 0);

struct GradientSet : ParamTensors {
  static GradientSet zeros_like(const SaeParams& p);
};

/// Everything the backward pass needs from a forward evaluation.
struct ForwardTrace {
  Matrix encoder_input;    // x, or x - b_dec with the pre-encoder bias
  Matrix pre_activations;  // pi (pi_gate for gated architectures)
  Matrix pre_mag;          // pi_mag, gated only
  Matrix features;         // f
  Matrix reconstruction;   // x_hat
};

inline constexpr bool kDefaultPreEncoderBias = true;

ForwardTrace forward(const SaeParams& params, const ActivationBatch& batch,
                     bool use_pre_enc_bias = kDefaultPreEncoderBias);

/// Count of strictly positive feature magnitudes, per example.
std::vector<std::size_t> l0_of(const ForwardTrace& trace);

/// Throws if shapes are inconsistent with `params.arch`.
void validate(const SaeParams& params);

// Checkpoint format: "SAE1", arch tag (u8), n, M, K (u64 LE), then every
// non-empty tensor in ParamTensors order as row-major f64 LE.
std::vector<std::uint8_t> encode_checkpoint(const SaeParams& params);
SaeParams decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::string& path, const SaeParams& params);
SaeParams load_checkpoint(const std::string& path);

}  // namespace jumpsae
