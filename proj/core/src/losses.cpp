#include "jumpsae/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace jumpsae {

std::string_view to_string(LossKind k) noexcept {
  switch (k) {
    case LossKind::L1: return "l1";
    case LossKind::RiL1: return "ril1";
    case LossKind::L0: return "l0";
    case LossKind::TargetL0: return "target_l0";
    case LossKind::TopKAuxK: return "topk_auxk";
    case LossKind::GatedOriginal: return "gated_original";
    case LossKind::GatedRiL1: return "gated_ril1";
  }
  return "unknown";
}

LossKind parse_loss_kind(std::string_view name) {
  for (auto k : {LossKind::L1, LossKind::RiL1, LossKind::L0, LossKind::TargetL0,
                 LossKind::TopKAuxK, LossKind::GatedOriginal, LossKind::GatedRiL1}) {
    if (name == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown loss '" + std::string(name) + "'");
}

Arch arch_for(LossKind k) noexcept {
  switch (k) {
    case LossKind::L1:
    case LossKind::RiL1: return Arch::Relu;
    case LossKind::L0:
    case LossKind::TargetL0: return Arch::JumpRelu;
    case LossKind::TopKAuxK: return Arch::TopK;
    case LossKind::GatedOriginal: return Arch::Gated;
    case LossKind::GatedRiL1: return Arch::GatedRiL1;
  }
  return Arch::Relu;
}

LossKind default_loss_for(Arch a) noexcept {
  switch (a) {
    case Arch::Relu: return LossKind::L1;
    case Arch::JumpRelu: return LossKind::L0;
    case Arch::TopK: return LossKind::TopKAuxK;
    case Arch::Gated: return LossKind::GatedOriginal;
    case Arch::GatedRiL1: return LossKind::GatedRiL1;
  }
  return LossKind::L1;
}

void check_compatible(const SaeParams& params, const LossSpec& spec) {
  validate(params);
  if (arch_for(spec.kind) != params.arch) {
    throw std::invalid_argument("loss '" + std::string(to_string(spec.kind)) +
                                "' does not apply to architecture '" +
                                std::string(to_string(params.arch)) + "'");
  }
  if (!(spec.lambda >= 0.0) || !std::isfinite(spec.lambda)) {
    throw std::invalid_argument("lambda must be finite and >= 0");
  }
  if (spec.kind == LossKind::TargetL0 && !(spec.l0_target > 0.0)) {
    throw std::invalid_argument("target_l0 loss requires l0_target > 0");
  }
  if (spec.kind == LossKind::TopKAuxK && (spec.k_aux < 1 || !(spec.aux_alpha >= 0.0))) {
    throw std::invalid_argument("topk_auxk loss requires k_aux >= 1 and aux_alpha >= 0");
  }
}

namespace {

// Adds the AuxK term (and, when `grads` is set, its gradient into d_pre and
// grad_w_dec_t) for every example. `residual` is the detached main residual.
double accumulate_aux_k(const ForwardTrace& trace, const Matrix& w_dec_t, const Matrix& residual,
                        const std::vector<bool>& dead_mask, std::size_t k_aux, double alpha,
                        Matrix* d_pre, Matrix* grad_w_dec_t) {
  std::vector<std::size_t> dead;
  for (std::size_t i = 0; i < dead_mask.size(); ++i)
    if (dead_mask[i]) dead.push_back(i);
  if (dead.empty() || alpha == 0.0) return 0.0;

  const std::size_t rows = trace.pre_activations.rows();
  const std::size_t n = residual.cols();
  const std::size_t take = std::min(k_aux, dead.size());
  const double inv = 1.0 / static_cast<double>(rows);
  Vector candidates(dead.size());
  Vector aux_residual(n);
  double total = 0.0;
  for (std::size_t s = 0; s < rows; ++s) {
    auto pre = trace.pre_activations.row(s);
    for (std::size_t j = 0; j < dead.size(); ++j) candidates[j] = pre[dead[j]];
    const auto picked = topk_select(candidates, take);
    auto e = residual.row(s);
    std::copy(e.begin(), e.end(), aux_residual.begin());
    for (std::size_t j : picked) {
      const double coef = pre[dead[j]];
      auto d = w_dec_t.row(dead[j]);
      for (std::size_t c = 0; c < n; ++c) aux_residual[c] -= coef * d[c];
    }
    total += squared_norm(aux_residual);
    if (d_pre != nullptr) {
      // d(aux)/d(e_hat) = -2 alpha / N * (e - e_hat)
      for (double& v : aux_residual) v *= -2.0 * alpha * inv;
      for (std::size_t j : picked) {
        const std::size_t i = dead[j];
        (*d_pre)(s, i) += dot(w_dec_t.row(i), aux_residual);
        auto gd = grad_w_dec_t->row(i);
        const double coef = pre[i];
        for (std::size_t c = 0; c < n; ++c) gd[c] += coef * aux_residual[c];
      }
    }
  }
  return alpha * inv * total;
}

LossAndGradient evaluate(const SaeParams& params, const ActivationBatch& batch,
                         const LossSpec& spec, const LossContext& ctx, bool want_grads) {
  check_compatible(params, spec);
  if (batch.size() == 0) throw std::invalid_argument("loss: empty batch");

  LossAndGradient out;
  out.trace = forward(params, batch, spec.use_pre_enc_bias);
  const ForwardTrace& t = out.trace;

  const std::size_t rows = batch.size();
  const std::size_t n = params.input_dim();
  const std::size_t m = params.width();
  const double inv = 1.0 / static_cast<double>(rows);
  const double lambda = spec.lambda;
  const Matrix w_dec_t = params.w_dec.transposed();  // row i = d_i

  // Residual e = x - x_hat and its gradient G_x = dL/dx_hat = -2 e / N.
  Matrix residual(rows, n);
  Matrix grad_xhat(rows, n);
  double recon = 0.0;
  for (std::size_t s = 0; s < rows; ++s) {
    auto x = batch.x.row(s);
    auto xh = t.reconstruction.row(s);
    auto e = residual.row(s);
    auto g = grad_xhat.row(s);
    for (std::size_t c = 0; c < n; ++c) {
      e[c] = x[c] - xh[c];
      g[c] = -2.0 * inv * e[c];
    }
    recon += squared_norm(e);
  }
  recon *= inv;

  GradientSet grads;
  Matrix grad_w_dec_t;  // M x n, transposed for contiguous d_i access
  Matrix d_pre;         // dL/d(pi) or dL/d(pi_gate)
  Matrix d_mag;         // dL/d(pi_mag), gated only
  if (want_grads) {
    grads = GradientSet::zeros_like(params);
    grad_w_dec_t = Matrix(m, n);
    d_pre = Matrix(rows, m);
    for (std::size_t s = 0; s < rows; ++s) {
      auto g = grad_xhat.row(s);
      for (std::size_t c = 0; c < n; ++c) grads.b_dec[c] += g[c];
    }
    // dL/dW_dec from the main reconstruction: sum_s G_x[s] f[s]^T.
    for (std::size_t s = 0; s < rows; ++s) {
      auto f = t.features.row(s);
      auto g = grad_xhat.row(s);
      for (std::size_t i = 0; i < m; ++i) {
        if (f[i] == 0.0) continue;
        auto gd = grad_w_dec_t.row(i);
        for (std::size_t c = 0; c < n; ++c) gd[c] += f[i] * g[c];
      }
    }
  }
  // dL/df_i for example s.
  auto grad_f = [&](std::size_t s, std::size_t i) { return dot(w_dec_t.row(i), grad_xhat.row(s)); };

  double sparsity = 0.0;
  double aux = 0.0;

  switch (params.arch) {
    case Arch::Relu: {
      const bool ri = spec.kind == LossKind::RiL1;
      const Vector norms = ri ? params.decoder_norms() : Vector(m, 1.0);
      Vector feature_mass(m, 0.0);
      for (std::size_t s = 0; s < rows; ++s) {
        auto f = t.features.row(s);
        for (std::size_t i = 0; i < m; ++i) {
          if (f[i] == 0.0) continue;
          sparsity += f[i] * norms[i];
          if (want_grads) {
            d_pre(s, i) = grad_f(s, i) + lambda * inv * norms[i];
            feature_mass[i] += f[i];
          }
        }
      }
      sparsity *= lambda * inv;
      if (want_grads && ri) {
        for (std::size_t i = 0; i < m; ++i) {
          if (feature_mass[i] == 0.0 || norms[i] == 0.0) continue;
          const double scale = lambda * inv * feature_mass[i] / norms[i];
          auto d = w_dec_t.row(i);
          auto gd = grad_w_dec_t.row(i);
          for (std::size_t c = 0; c < n; ++c) gd[c] += scale * d[c];
        }
      }
      break;
    }

    case Arch::JumpRelu: {
      const Vector theta = params.thresholds();
      const double eps = spec.bandwidth.value();
      const bool target = spec.kind == LossKind::TargetL0;
      const std::vector<std::size_t> l0 = l0_of(t);
      Vector grad_theta(m, 0.0);
      for (std::size_t s = 0; s < rows; ++s) {
        const double count = static_cast<double>(l0[s]);
        // d(sparsity_s)/d(L0_s), before the 1/N batch mean.
        double sparsity_slope;
        if (target) {
          const double ratio = count / spec.l0_target - 1.0;
          sparsity += ratio * ratio;
          sparsity_slope = lambda * 2.0 * ratio / spec.l0_target;
        } else {
          sparsity += count;
          sparsity_slope = lambda;
        }
        if (!want_grads) continue;
        auto pre = t.pre_activations.row(s);
        for (std::size_t i = 0; i < m; ++i) {
          // ReLU before the threshold: negative pre-activations cannot reach
          // the kernel window.
          const double z = pre[i] > 0.0 ? pre[i] : 0.0;
          const bool active = z > theta[i];
          const double kern = kernel_eval(spec.kernel, (z - theta[i]) / eps);
          if (!active && kern == 0.0) continue;
          if (active) d_pre(s, i) = grad_f(s, i);
          if (kern != 0.0) {
            // Per-example importance 2 theta d_i . e against the sparsity
            // slope; the 1/(N eps) factor is applied once below.
            const double importance = 2.0 * theta[i] * dot(w_dec_t.row(i), residual.row(s));
            grad_theta[i] += (importance - sparsity_slope) * kern;
          }
        }
      }
      sparsity *= lambda * inv;
      if (want_grads) {
        for (std::size_t i = 0; i < m; ++i) {
          grads.log_theta[i] = grad_theta[i] / (static_cast<double>(rows) * eps) * theta[i];
        }
      }
      break;
    }

    case Arch::TopK: {
      if (want_grads) {
        for (std::size_t s = 0; s < rows; ++s) {
          auto f = t.features.row(s);
          for (std::size_t i = 0; i < m; ++i)
            if (f[i] != 0.0) d_pre(s, i) = grad_f(s, i);
        }
      }
      if (!ctx.dead_mask.empty()) {
        if (ctx.dead_mask.size() != m) throw std::invalid_argument("dead_mask length != width");
        aux = accumulate_aux_k(t, w_dec_t, residual, ctx.dead_mask, spec.k_aux, spec.aux_alpha,
                               want_grads ? &d_pre : nullptr,
                               want_grads ? &grad_w_dec_t : nullptr);
      }
      break;
    }

    case Arch::Gated:
    case Arch::GatedRiL1: {
      const bool ri = spec.kind == LossKind::GatedRiL1;
      const Vector norms = ri ? params.decoder_norms() : Vector(m, 1.0);
      const SaeParams& frozen = ctx.frozen_decoder != nullptr ? *ctx.frozen_decoder : params;
      if (frozen.w_dec.rows() != n || frozen.w_dec.cols() != m) {
        throw std::invalid_argument("frozen decoder shape mismatch");
      }
      const Matrix aux_dec_t = ri ? w_dec_t : frozen.w_dec.transposed();
      const Vector& aux_b_dec = ri ? params.b_dec : frozen.b_dec;
      if (want_grads) d_mag = Matrix(rows, m);

      Vector gate_mass(m, 0.0);
      Vector aux_residual(n);
      for (std::size_t s = 0; s < rows; ++s) {
        auto gate = t.pre_activations.row(s);
        auto mag = t.pre_mag.row(s);
        auto x = batch.x.row(s);
        // Aux reconstruction from relu(pi_gate).
        for (std::size_t c = 0; c < n; ++c) aux_residual[c] = x[c] - aux_b_dec[c];
        for (std::size_t i = 0; i < m; ++i) {
          if (gate[i] <= 0.0) continue;
          sparsity += gate[i] * norms[i];
          auto d = aux_dec_t.row(i);
          for (std::size_t c = 0; c < n; ++c) aux_residual[c] -= gate[i] * d[c];
        }
        aux += squared_norm(aux_residual);
        if (!want_grads) continue;

        for (double& v : aux_residual) v *= -2.0 * inv;  // now dAux/d(x_hat_aux)
        if (ri) {
          for (std::size_t c = 0; c < n; ++c) grads.b_dec[c] += aux_residual[c];
        }
        for (std::size_t i = 0; i < m; ++i) {
          if (gate[i] > 0.0 && mag[i] > 0.0) d_mag(s, i) = grad_f(s, i);
          if (gate[i] <= 0.0) continue;
          d_pre(s, i) = lambda * inv * norms[i] + dot(aux_dec_t.row(i), aux_residual);
          gate_mass[i] += gate[i];
          if (ri) {
            auto gd = grad_w_dec_t.row(i);
            for (std::size_t c = 0; c < n; ++c) gd[c] += gate[i] * aux_residual[c];
          }
        }
      }
      sparsity *= lambda * inv;
      aux *= inv;
      if (want_grads && ri) {
        for (std::size_t i = 0; i < m; ++i) {
          if (gate_mass[i] == 0.0 || norms[i] == 0.0) continue;
          const double scale = lambda * inv * gate_mass[i] / norms[i];
          auto d = w_dec_t.row(i);
          auto gd = grad_w_dec_t.row(i);
          for (std::size_t c = 0; c < n; ++c) gd[c] += scale * d[c];
        }
      }
      break;
    }
  }

  out.terms = {recon + sparsity + aux, recon, sparsity, aux};
  if (!want_grads) return out;

  // Back through the encoder. d_proj = dL/d(W_enc x_in) per example.
  Matrix d_proj;
  if (is_gated(params.arch)) {
    d_proj = Matrix(rows, m);
    Vector mag_scale(m);
    for (std::size_t i = 0; i < m; ++i) mag_scale[i] = std::exp(params.r_mag[i]);
    for (std::size_t s = 0; s < rows; ++s) {
      auto dg = d_pre.row(s);
      auto dm = d_mag.row(s);
      auto mag = t.pre_mag.row(s);
      auto dp = d_proj.row(s);
      for (std::size_t i = 0; i < m; ++i) {
        grads.b_gate[i] += dg[i];
        grads.b_mag[i] += dm[i];
        if (dm[i] != 0.0) {
          // pi_mag = exp(r) * proj + b_mag, so exp(r) * proj = pi_mag - b_mag.
          grads.r_mag[i] += dm[i] * (mag[i] - params.b_mag[i]);
        }
        dp[i] = dg[i] + mag_scale[i] * dm[i];
      }
    }
  } else {
    d_proj = std::move(d_pre);
    for (std::size_t s = 0; s < rows; ++s) {
      auto dp = d_proj.row(s);
      for (std::size_t i = 0; i < m; ++i) grads.b_enc[i] += dp[i];
    }
  }

  grads.w_enc = matmul(d_proj.transposed(), t.encoder_input);
  if (spec.use_pre_enc_bias) {
    // x_in = x - b_dec: dL/db_dec -= W_enc^T sum_s d_proj[s].
    Vector proj_sum(m, 0.0);
    for (std::size_t s = 0; s < rows; ++s) {
      auto dp = d_proj.row(s);
      for (std::size_t i = 0; i < m; ++i) proj_sum[i] += dp[i];
    }
    for (std::size_t i = 0; i < m; ++i) {
      if (proj_sum[i] == 0.0) continue;
      auto w = params.w_enc.row(i);
      for (std::size_t c = 0; c < n; ++c) grads.b_dec[c] -= proj_sum[i] * w[c];
    }
  }
  grads.w_dec = grad_w_dec_t.transposed();

  grads.for_each([](std::string_view name, std::span<const double> g) {
    for (double v : g) {
      if (!std::isfinite(v)) {
        throw std::runtime_error("non-finite gradient in parameter '" + std::string(name) + "'");
      }
    }
  });
  out.grads = std::move(grads);
  return out;
}

}  // namespace

LossTerms loss(const SaeParams& params, const ActivationBatch& batch, const LossSpec& spec,
               const LossContext& ctx) {
  return evaluate(params, batch, spec, ctx, false).terms;
}

GradientSet backward(const SaeParams& params, const ActivationBatch& batch, const LossSpec& spec,
                     const LossContext& ctx) {
  return evaluate(params, batch, spec, ctx, true).grads;
}

LossAndGradient loss_and_grad(const SaeParams& params, const ActivationBatch& batch,
                              const LossSpec& spec, const LossContext& ctx) {
  return evaluate(params, batch, spec, ctx, true);
}

double aux_k_loss(const SaeParams& params, const ActivationBatch& batch,
                  const std::vector<bool>& dead_mask, std::size_t k_aux, double alpha,
                  bool use_pre_enc_bias) {
  if (params.arch != Arch::TopK) throw std::invalid_argument("aux_k_loss: TopK SAE required");
  if (k_aux < 1) throw std::invalid_argument("aux_k_loss: k_aux must be >= 1");
  if (dead_mask.empty()) return 0.0;
  if (dead_mask.size() != params.width()) {
    throw std::invalid_argument("aux_k_loss: dead_mask length != width");
  }
  const ForwardTrace t = forward(params, batch, use_pre_enc_bias);
  Matrix residual = batch.x;
  for (std::size_t s = 0; s < residual.rows(); ++s) {
    auto e = residual.row(s);
    auto xh = t.reconstruction.row(s);
    for (std::size_t c = 0; c < e.size(); ++c) e[c] -= xh[c];
  }
  return accumulate_aux_k(t, params.w_dec.transposed(), residual, dead_mask, k_aux, alpha,
                          nullptr, nullptr);
}

}  // namespace jumpsae
