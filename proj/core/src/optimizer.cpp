#include "jumpsae/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace jumpsae {

OptimState OptimState::zeros_like(const SaeParams& p) {
  OptimState s;
  s.m = GradientSet::zeros_like(p);
  s.v = GradientSet::zeros_like(p);
  return s;
}

void adam_step(SaeParams& params, OptimState& state, const GradientSet& grads, double lr,
               const AdamConfig& cfg) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double m_corr = 1.0 - std::pow(cfg.beta1, t);
  const double v_corr = 1.0 - std::pow(cfg.beta2, t);

  // Collect spans in declaration order; all four bundles share shapes.
  std::vector<std::span<double>> p_spans;
  std::vector<std::string_view> names;
  params.for_each([&](std::string_view name, std::span<double> s) {
    p_spans.push_back(s);
    names.push_back(name);
  });
  std::vector<std::span<const double>> g_spans;
  grads.for_each([&](std::string_view, std::span<const double> s) { g_spans.push_back(s); });
  std::vector<std::span<double>> m_spans;
  state.m.for_each([&](std::string_view, std::span<double> s) { m_spans.push_back(s); });
  std::vector<std::span<double>> v_spans;
  state.v.for_each([&](std::string_view, std::span<double> s) { v_spans.push_back(s); });
  if (g_spans.size() != p_spans.size() || m_spans.size() != p_spans.size() ||
      v_spans.size() != p_spans.size()) {
    throw std::invalid_argument("adam_step: gradient/state layout does not match parameters");
  }

  for (std::size_t k = 0; k < p_spans.size(); ++k) {
    auto p = p_spans[k];
    auto g = g_spans[k];
    auto m = m_spans[k];
    auto v = v_spans[k];
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
      throw std::invalid_argument("adam_step: shape mismatch for " + std::string(names[k]));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double update = -lr * (m[i] / m_corr) / (std::sqrt(v[i] / v_corr) + cfg.epsilon);
      if (!std::isfinite(update)) {
        throw std::runtime_error("adam_step: non-finite update for parameter '" +
                                 std::string(names[k]) + "'");
      }
      p[i] += update;
    }
  }
}

double lr_at(const Schedule& schedule, std::size_t t) {
  const std::size_t w = schedule.lr_warmup_steps;
  if (w == 0 || t >= w) return schedule.base_lr;
  const double frac = static_cast<double>(t) / static_cast<double>(w);
  return schedule.base_lr * (0.1 + 0.9 * (1.0 - std::cos(std::numbers::pi * frac)) / 2.0);
}

double lambda_at(const Schedule& schedule, double lambda_final, std::size_t t) {
  const std::size_t w = schedule.lambda_warmup_steps;
  if (w == 0 || t >= w) return lambda_final;
  return lambda_final * static_cast<double>(t) / static_cast<double>(w);
}

void project_decoder_gradients(const SaeParams& params, GradientSet& grads) {
  if (!uses_unit_norm_decoder(params.arch)) return;
  const std::size_t n = params.w_dec.rows();
  for (std::size_t i = 0; i < params.w_dec.cols(); ++i) {
    double gd = 0.0;
    double dd = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      gd += grads.w_dec(r, i) * params.w_dec(r, i);
      dd += params.w_dec(r, i) * params.w_dec(r, i);
    }
    if (dd == 0.0) continue;
    const double coef = gd / dd;
    for (std::size_t r = 0; r < n; ++r) grads.w_dec(r, i) -= coef * params.w_dec(r, i);
  }
}

namespace {

Vector random_unit_vector(RngStream& rng, std::size_t n) {
  Vector v(n);
  double norm2 = 0.0;
  while (norm2 == 0.0) {
    for (double& x : v) x = rng.normal();
    norm2 = squared_norm(v);
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
  return v;
}

}  // namespace

std::size_t renormalize_decoder(SaeParams& params, RngStream& rng) {
  if (!uses_unit_norm_decoder(params.arch)) return 0;
  const std::size_t n = params.w_dec.rows();
  std::size_t redrawn = 0;
  const Vector norms = params.decoder_norms();
  for (std::size_t i = 0; i < params.w_dec.cols(); ++i) {
    if (norms[i] == 0.0) {
      params.w_dec.set_column(i, random_unit_vector(rng, n));
      ++redrawn;
      continue;
    }
    for (std::size_t r = 0; r < n; ++r) params.w_dec(r, i) /= norms[i];
  }
  return redrawn;
}

void resample_dead(SaeParams& params, const std::vector<bool>& dead_mask, RngStream& rng) {
  if (dead_mask.size() != params.width()) {
    throw std::invalid_argument("resample_dead: mask length != width");
  }
  const std::size_t n = params.input_dim();
  for (std::size_t i = 0; i < dead_mask.size(); ++i) {
    if (!dead_mask[i]) continue;
    const Vector d = random_unit_vector(rng, n);
    params.w_dec.set_column(i, d);
    auto row = params.w_enc.row(i);
    for (std::size_t c = 0; c < n; ++c) row[c] = 0.2 * d[c];
    if (!params.b_enc.empty()) params.b_enc[i] = 0.0;
    if (!params.b_gate.empty()) {
      params.b_gate[i] = 0.0;
      params.b_mag[i] = 0.0;
      params.r_mag[i] = 0.0;
    }
  }
}

void reset_optimizer_rows(OptimState& state, const SaeParams& params,
                          const std::vector<bool>& mask) {
  const std::size_t n = params.input_dim();
  for (ParamTensors* t : {&state.m, &state.v}) {
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) continue;
      for (double& x : t->w_enc.row(i)) x = 0.0;
      for (std::size_t r = 0; r < n; ++r) t->w_dec(r, i) = 0.0;
      for (Vector* v : {&t->b_enc, &t->log_theta, &t->r_mag, &t->b_gate, &t->b_mag}) {
        if (!v->empty()) (*v)[i] = 0.0;
      }
    }
  }
}

}  // namespace jumpsae
