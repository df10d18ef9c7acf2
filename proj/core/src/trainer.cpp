#include "jumpsae/trainer.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

namespace jumpsae {

void check_config(const TrainConfig& cfg) {
  if (arch_for(cfg.loss.kind) != cfg.arch) {
    throw std::invalid_argument("loss '" + std::string(to_string(cfg.loss.kind)) +
                                "' does not train architecture '" +
                                std::string(to_string(cfg.arch)) + "'");
  }
  if (cfg.width == 0) throw std::invalid_argument("width must be >= 1");
  if (cfg.arch == Arch::TopK && (cfg.k < 1 || cfg.k > cfg.width)) {
    throw std::invalid_argument("k must lie in [1, width] for topk");
  }
  if (cfg.schedule.batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (!(cfg.schedule.base_lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (!(cfg.theta_init > 0.0)) throw std::invalid_argument("theta_init must be > 0");
  if (cfg.resample && cfg.resample_every == 0) {
    throw std::invalid_argument("resample_every must be >= 1");
  }
  if (cfg.dead_window == 0) throw std::invalid_argument("dead_window must be >= 1");
}

nlohmann::json to_json(const MetricsRecord& r) {
  return nlohmann::json{{"step", r.step},
                        {"lr", r.lr},
                        {"lambda", r.lambda},
                        {"loss_total", r.loss_total},
                        {"loss_recon", r.loss_recon},
                        {"loss_sparsity", r.loss_sparsity},
                        {"mean_l0", r.mean_l0},
                        {"fvu", r.fvu},
                        {"dead_frac", r.dead_frac}};
}

std::string metrics_log_text(const std::vector<MetricsRecord>& log) {
  std::ostringstream out;
  for (const auto& r : log) out << to_json(r).dump() << '\n';
  return out.str();
}

SaeParams initialize(const TrainConfig& cfg, std::size_t input_dim) {
  check_config(cfg);
  SaeParams p = make_params(cfg.arch, input_dim, cfg.width, cfg.arch == Arch::TopK ? cfg.k : 0);
  RngStream rng(cfg.seed, StreamId::Init);
  const double norm = cfg.arch == Arch::GatedRiL1 ? cfg.gated_ril1_decoder_norm : 1.0;
  p.w_dec = gaussian(rng, input_dim, cfg.width);
  const Vector norms = p.decoder_norms();
  for (std::size_t r = 0; r < input_dim; ++r)
    for (std::size_t i = 0; i < cfg.width; ++i) p.w_dec(r, i) *= norm / norms[i];
  p.w_enc = p.w_dec.transposed();
  if (cfg.arch == Arch::JumpRelu) p.log_theta.assign(cfg.width, std::log(cfg.theta_init));
  return p;
}

namespace {

MetricsRecord eval_record(const SaeParams& params, const ActivationBatch& eval_set,
                          bool pre_enc_bias) {
  EvalOptions opts;
  opts.use_pre_enc_bias = pre_enc_bias;
  const EvalReport rep = evaluate(params, eval_set, opts);
  MetricsRecord r;
  r.mean_l0 = rep.mean_l0;
  r.fvu = rep.fvu;
  r.dead_frac = rep.dead_frac;
  return r;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, BatchSource& data, const ActivationBatch& eval_set) {
  check_config(cfg);
  TrainResult result;
  SaeParams params = initialize(cfg, data.dim());
  OptimState opt = OptimState::zeros_like(params);
  RngStream constraint_rng(cfg.seed, StreamId::Resample);
  RngStream resample_rng = constraint_rng.substream(1);

  const std::size_t m = cfg.width;
  // Step index at which each feature last fired.
  std::vector<std::size_t> last_fired(m, 0);
  auto dead_mask_at = [&](std::size_t t) {
    std::vector<bool> mask(m, false);
    for (std::size_t i = 0; i < m; ++i) mask[i] = t - last_fired[i] >= cfg.dead_window;
    return mask;
  };

  LossSpec spec = cfg.loss;
  double acc_total = 0.0, acc_recon = 0.0, acc_sparsity = 0.0;
  std::size_t acc_count = 0;

  for (std::size_t t = 0; t < cfg.steps; ++t) {
    const ActivationBatch batch = data.next(cfg.schedule.batch_size);
    const double lr = lr_at(cfg.schedule, t);
    spec.lambda =
        cfg.arch == Arch::TopK ? cfg.loss.lambda : lambda_at(cfg.schedule, cfg.loss.lambda, t);

    LossContext ctx;
    if (cfg.arch == Arch::TopK) ctx.dead_mask = dead_mask_at(t);

    LossAndGradient lg;
    try {
      lg = loss_and_grad(params, batch, spec, ctx);
    } catch (const std::runtime_error& e) {
      throw TrainingDiverged(std::string("step ") + std::to_string(t) + ": " + e.what(), params, t);
    }
    if (!std::isfinite(lg.terms.total)) {
      throw TrainingDiverged("step " + std::to_string(t) + ": loss is not finite", params, t);
    }

    for (std::size_t s = 0; s < batch.size(); ++s) {
      auto f = lg.trace.features.row(s);
      for (std::size_t i = 0; i < m; ++i)
        if (f[i] > 0.0) last_fired[i] = t + 1;
    }
    acc_total += lg.terms.total;
    acc_recon += lg.terms.recon;
    acc_sparsity += lg.terms.sparsity;
    ++acc_count;

    project_decoder_gradients(params, lg.grads);
    SaeParams before = params;
    try {
      adam_step(params, opt, lg.grads, lr, cfg.adam);
    } catch (const std::runtime_error& e) {
      throw TrainingDiverged(std::string("step ") + std::to_string(t) + ": " + e.what(),
                             std::move(before), t);
    }
    const std::size_t redrawn = renormalize_decoder(params, constraint_rng);
    if (redrawn > 0) {
      result.decoder_redraws += redrawn;
      std::cerr << "warning: step " << t << ": re-drew " << redrawn
                << " zero-norm decoder column(s)\n";
    }

    const std::size_t done = t + 1;
    if (cfg.resample && done % cfg.resample_every == 0) {
      const auto mask = dead_mask_at(done);
      std::size_t n_dead = 0;
      for (bool b : mask) n_dead += b ? 1 : 0;
      if (n_dead > 0) {
        resample_dead(params, mask, resample_rng);
        reset_optimizer_rows(opt, params, mask);
        for (std::size_t i = 0; i < m; ++i)
          if (mask[i]) last_fired[i] = done;
        result.resampled_features += n_dead;
      }
    }

    const bool log_now = done == cfg.steps || (cfg.eval_every > 0 && done % cfg.eval_every == 0);
    if (log_now) {
      MetricsRecord r = eval_record(params, eval_set, cfg.loss.use_pre_enc_bias);
      r.step = done;
      r.lr = lr;
      r.lambda = spec.lambda;
      r.loss_total = acc_total / static_cast<double>(acc_count);
      r.loss_recon = acc_recon / static_cast<double>(acc_count);
      r.loss_sparsity = acc_sparsity / static_cast<double>(acc_count);
      result.log.push_back(r);
      acc_total = acc_recon = acc_sparsity = 0.0;
      acc_count = 0;
    }
  }

  result.params = std::move(params);
  return result;
}

}  // namespace jumpsae
