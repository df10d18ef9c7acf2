#include "jumpsae/sae_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "jumpsae/activations.hpp"

namespace jumpsae {

std::string_view to_string(Arch a) noexcept {
  switch (a) {
    case Arch::Relu: return "relu";
    case Arch::JumpRelu: return "jumprelu";
    case Arch::Gated: return "gated";
    case Arch::GatedRiL1: return "gated_ril1";
    case Arch::TopK: return "topk";
  }
  return "unknown";
}

Arch parse_arch(std::string_view name) {
  for (auto a : {Arch::Relu, Arch::JumpRelu, Arch::Gated, Arch::GatedRiL1, Arch::TopK}) {
    if (name == to_string(a)) return a;
  }
  throw std::invalid_argument("unknown architecture '" + std::string(name) + "'");
}

bool is_gated(Arch a) noexcept { return a == Arch::Gated || a == Arch::GatedRiL1; }
bool uses_unit_norm_decoder(Arch a) noexcept { return a != Arch::GatedRiL1; }

std::size_t ParamTensors::parameter_count() const {
  std::size_t n = 0;
  for_each([&](std::string_view, std::span<const double> t) { n += t.size(); });
  return n;
}

Vector SaeParams::thresholds() const {
  Vector t(log_theta.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::exp(log_theta[i]);
  return t;
}

Matrix SaeParams::magnitude_encoder() const {
  if (!is_gated(arch)) throw std::logic_error("magnitude_encoder: not a gated SAE");
  Matrix w = w_enc;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double scale = std::exp(r_mag[i]);
    for (double& v : w.row(i)) v *= scale;
  }
  return w;
}

Vector SaeParams::decoder_norms() const {
  Vector norms(w_dec.cols(), 0.0);
  for (std::size_t r = 0; r < w_dec.rows(); ++r) {
    auto row = w_dec.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) norms[c] += row[c] * row[c];
  }
  for (double& v : norms) v = std::sqrt(v);
  return norms;
}

SaeParams make_params(Arch arch, std::size_t input_dim, std::size_t width, std::size_t k) {
  if (input_dim == 0 || width == 0) throw std::invalid_argument("make_params: zero dimension");
  if (arch == Arch::TopK && (k < 1 || k > width)) {
    throw std::invalid_argument("make_params: TopK requires 1 <= k <= width, got k=" +
                                std::to_string(k));
  }
  SaeParams p;
  p.arch = arch;
  p.k = arch == Arch::TopK ? k : 0;
  p.w_enc = Matrix(width, input_dim);
  p.w_dec = Matrix(input_dim, width);
  p.b_dec.assign(input_dim, 0.0);
  if (is_gated(arch)) {
    p.r_mag.assign(width, 0.0);
    p.b_gate.assign(width, 0.0);
    p.b_mag.assign(width, 0.0);
  } else {
    p.b_enc.assign(width, 0.0);
  }
  if (arch == Arch::JumpRelu) p.log_theta.assign(width, std::log(0.001));
  return p;
}

GradientSet GradientSet::zeros_like(const SaeParams& p) {
  GradientSet g;
  g.w_enc = Matrix(p.w_enc.rows(), p.w_enc.cols());
  g.w_dec = Matrix(p.w_dec.rows(), p.w_dec.cols());
  g.b_enc.assign(p.b_enc.size(), 0.0);
  g.b_dec.assign(p.b_dec.size(), 0.0);
  g.log_theta.assign(p.log_theta.size(), 0.0);
  g.r_mag.assign(p.r_mag.size(), 0.0);
  g.b_gate.assign(p.b_gate.size(), 0.0);
  g.b_mag.assign(p.b_mag.size(), 0.0);
  return g;
}

void validate(const SaeParams& p) {
  const std::size_t n = p.input_dim();
  const std::size_t m = p.width();
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("invalid " + std::string(to_string(p.arch)) + " params: " + what);
  };
  if (n == 0 || m == 0) fail("zero dimension");
  if (p.w_dec.rows() != n || p.w_dec.cols() != m) fail("w_dec shape " + p.w_dec.shape_string());
  if (p.b_dec.size() != n) fail("b_dec length");
  const bool gated = is_gated(p.arch);
  if (p.b_enc.size() != (gated ? 0 : m)) fail("b_enc length");
  if (p.log_theta.size() != (p.arch == Arch::JumpRelu ? m : 0)) fail("log_theta length");
  for (const Vector* v : {&p.r_mag, &p.b_gate, &p.b_mag}) {
    if (v->size() != (gated ? m : 0)) fail("gated vector length");
  }
  if (p.arch == Arch::TopK && (p.k < 1 || p.k > m)) fail("k out of range");
  if (p.arch != Arch::TopK && p.k != 0) fail("k set on non-TopK architecture");
}

ForwardTrace forward(const SaeParams& params, const ActivationBatch& batch, bool use_pre_enc_bias) {
  const std::size_t n = params.input_dim();
  const std::size_t m = params.width();
  if (batch.dim() != n) {
    throw std::invalid_argument("forward: batch dimension " + std::to_string(batch.dim()) +
                                " does not match SAE input dimension " + std::to_string(n));
  }
  if (!batch.x.all_finite()) throw std::invalid_argument("forward: non-finite input");

  ForwardTrace t;
  t.encoder_input = batch.x;
  if (use_pre_enc_bias) {
    for (std::size_t s = 0; s < batch.size(); ++s) {
      auto row = t.encoder_input.row(s);
      for (std::size_t j = 0; j < n; ++j) row[j] -= params.b_dec[j];
    }
  }

  const Matrix w_enc_t = params.w_enc.transposed();
  Matrix projected = matmul(t.encoder_input, w_enc_t);
  const std::size_t rows = batch.size();
  t.features = Matrix(rows, m);

  switch (params.arch) {
    case Arch::Relu: {
      add_row_bias(projected, params.b_enc);
      for (std::size_t s = 0; s < rows; ++s) {
        auto pre = projected.row(s);
        auto f = t.features.row(s);
        for (std::size_t i = 0; i < m; ++i) f[i] = pre[i] > 0.0 ? pre[i] : 0.0;
      }
      t.pre_activations = std::move(projected);
      break;
    }
    case Arch::JumpRelu: {
      add_row_bias(projected, params.b_enc);
      const Vector theta = params.thresholds();
      for (std::size_t s = 0; s < rows; ++s) {
        auto pre = projected.row(s);
        auto f = t.features.row(s);
        // jumprelu(relu(pi)); the inner ReLU only matters for the backward pass.
        for (std::size_t i = 0; i < m; ++i) f[i] = pre[i] > theta[i] ? pre[i] : 0.0;
      }
      t.pre_activations = std::move(projected);
      break;
    }
    case Arch::TopK: {
      add_row_bias(projected, params.b_enc);
      for (std::size_t s = 0; s < rows; ++s) {
        auto pre = projected.row(s);
        auto f = t.features.row(s);
        for (std::size_t i : topk_select(pre, params.k)) f[i] = pre[i];
      }
      t.pre_activations = std::move(projected);
      break;
    }
    case Arch::Gated:
    case Arch::GatedRiL1: {
      t.pre_mag = Matrix(rows, m);
      Vector mag_scale(m);
      for (std::size_t i = 0; i < m; ++i) mag_scale[i] = std::exp(params.r_mag[i]);
      for (std::size_t s = 0; s < rows; ++s) {
        auto proj = projected.row(s);
        auto mag = t.pre_mag.row(s);
        auto f = t.features.row(s);
        for (std::size_t i = 0; i < m; ++i) {
          mag[i] = mag_scale[i] * proj[i] + params.b_mag[i];
          proj[i] += params.b_gate[i];
          f[i] = (proj[i] > 0.0 && mag[i] > 0.0) ? mag[i] : 0.0;
        }
      }
      t.pre_activations = std::move(projected);
      break;
    }
  }

  t.reconstruction = matmul(t.features, params.w_dec.transposed());
  add_row_bias(t.reconstruction, params.b_dec);
  return t;
}

std::vector<std::size_t> l0_of(const ForwardTrace& trace) {
  std::vector<std::size_t> counts(trace.features.rows(), 0);
  for (std::size_t s = 0; s < counts.size(); ++s) {
    for (double v : trace.features.row(s)) counts[s] += v > 0.0 ? 1 : 0;
  }
  return counts;
}

}  // namespace jumpsae
