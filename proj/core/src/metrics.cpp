#include "jumpsae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace jumpsae {

EvalAccumulator::EvalAccumulator(const SaeParams& params, EvalOptions options)
    : params_(params), options_(std::move(options)), x_sum_(params.input_dim(), 0.0),
      fire_counts_(params.width(), 0) {
  validate(params_);
  if (!options_.probe.empty()) {
    if (options_.probe.size() != params_.input_dim()) {
      throw std::invalid_argument("probe length != SAE input dimension");
    }
    attribution_.assign(params_.width(), 0.0);
    for (std::size_t r = 0; r < params_.w_dec.rows(); ++r) {
      auto row = params_.w_dec.row(r);
      for (std::size_t i = 0; i < row.size(); ++i) attribution_[i] += row[i] * options_.probe[r];
    }
  }
}

void EvalAccumulator::add(const ActivationBatch& batch) {
  const ForwardTrace t = forward(params_, batch, options_.use_pre_enc_bias);
  const std::size_t m = params_.width();
  for (std::size_t s = 0; s < batch.size(); ++s) {
    auto x = batch.x.row(s);
    auto xh = t.reconstruction.row(s);
    auto f = t.features.row(s);
    for (std::size_t c = 0; c < x.size(); ++c) {
      const double e = x[c] - xh[c];
      residual_sq_sum_ += e * e;
      x_sq_sum_ += x[c] * x[c];
      x_sum_[c] += x[c];
    }
    for (std::size_t i = 0; i < m; ++i) {
      if (f[i] > 0.0) {
        ++fire_counts_[i];
        l0_sum_ += 1.0;
      }
    }
    if (!attribution_.empty()) {
      if (auto r = effective_sparsity(f, attribution_)) {
        r_l0_sum_ += *r;
        ++r_l0_count_;
      }
    }
  }
  count_ += batch.size();
}

EvalReport EvalAccumulator::finish() const {
  if (count_ == 0) throw std::invalid_argument("evaluate: empty eval set");
  const double n_ex = static_cast<double>(count_);
  EvalReport r;
  r.eval_size = count_;
  r.mean_l0 = l0_sum_ / n_ex;
  const double mean_sq_dev = x_sq_sum_ / n_ex - squared_norm(x_sum_) / (n_ex * n_ex);
  if (!(mean_sq_dev > 0.0)) throw std::invalid_argument("fvu: zero-variance eval set");
  r.fvu = (residual_sq_sum_ / n_ex) / mean_sq_dev;
  FrequencyStats fs = frequency_stats(fire_counts_, count_);
  r.freq = std::move(fs.freq);
  r.dead_frac = fs.dead_frac;
  r.high_freq_frac_10pct = fs.high_freq_frac_10pct;
  r.high_freq_frac_1pct = fs.high_freq_frac_1pct;
  if (r_l0_count_ > 0) r.r_l0_mean = r_l0_sum_ / static_cast<double>(r_l0_count_);
  if (options_.dictionary) r.recovery = dictionary_recovery(params_.w_dec, *options_.dictionary);
  return r;
}

EvalReport evaluate(const SaeParams& params, const ActivationBatch& eval_set,
                    const EvalOptions& options) {
  EvalAccumulator acc(params, options);
  acc.add(eval_set);
  return acc.finish();
}

EvalReport evaluate(const SaeParams& params, BatchSource& source, std::size_t total,
                    std::size_t chunk, const EvalOptions& options) {
  if (chunk == 0) throw std::invalid_argument("evaluate: chunk must be >= 1");
  EvalAccumulator acc(params, options);
  for (std::size_t done = 0; done < total;) {
    const std::size_t take = std::min(chunk, total - done);
    acc.add(source.next(take));
    done += take;
  }
  return acc.finish();
}

double fvu(const Matrix& x, const Matrix& reconstruction) {
  if (x.rows() == 0) throw std::invalid_argument("fvu: empty eval set");
  if (x.rows() != reconstruction.rows() || x.cols() != reconstruction.cols()) {
    throw std::invalid_argument("fvu: shape mismatch");
  }
  const std::size_t rows = x.rows();
  Vector mean(x.cols(), 0.0);
  for (std::size_t s = 0; s < rows; ++s)
    for (std::size_t c = 0; c < x.cols(); ++c) mean[c] += x(s, c);
  for (double& v : mean) v /= static_cast<double>(rows);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t s = 0; s < rows; ++s) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double e = x(s, c) - reconstruction(s, c);
      const double d = x(s, c) - mean[c];
      num += e * e;
      den += d * d;
    }
  }
  if (!(den > 0.0)) throw std::invalid_argument("fvu: zero-variance eval set");
  return num / den;
}

double fvu(const SaeParams& params, const ActivationBatch& eval_set, bool use_pre_enc_bias) {
  return fvu(eval_set.x, forward(params, eval_set, use_pre_enc_bias).reconstruction);
}

FrequencyStats frequency_stats(std::span<const std::size_t> fire_counts, std::size_t eval_size) {
  if (eval_size == 0) throw std::invalid_argument("frequency_stats: empty eval set");
  FrequencyStats fs;
  fs.freq.resize(fire_counts.size());
  std::size_t dead = 0, hf10 = 0, hf1 = 0;
  for (std::size_t i = 0; i < fire_counts.size(); ++i) {
    const double f = static_cast<double>(fire_counts[i]) / static_cast<double>(eval_size);
    fs.freq[i] = f;
    if (fire_counts[i] == 0) ++dead;
    if (f > kHighFrequency10pct) ++hf10;
    if (f > kHighFrequency1pct) ++hf1;
  }
  const double m = static_cast<double>(std::max<std::size_t>(fire_counts.size(), 1));
  fs.dead_frac = static_cast<double>(dead) / m;
  fs.high_freq_frac_10pct = static_cast<double>(hf10) / m;
  fs.high_freq_frac_1pct = static_cast<double>(hf1) / m;
  return fs;
}

FrequencyStats frequency_stats(const SaeParams& params, const ActivationBatch& eval_set,
                               bool use_pre_enc_bias) {
  const ForwardTrace t = forward(params, eval_set, use_pre_enc_bias);
  std::vector<std::size_t> counts(params.width(), 0);
  for (std::size_t s = 0; s < eval_set.size(); ++s) {
    auto f = t.features.row(s);
    for (std::size_t i = 0; i < f.size(); ++i) counts[i] += f[i] > 0.0 ? 1 : 0;
  }
  return frequency_stats(counts, eval_set.size());
}

std::optional<double> effective_sparsity(std::span<const double> features,
                                         std::span<const double> attribution) {
  if (features.size() != attribution.size()) {
    throw std::invalid_argument("effective_sparsity: length mismatch");
  }
  double total = 0.0;
  std::size_t active = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double y = std::abs(features[i] * attribution[i]);
    if (y > 0.0) {
      total += y;
      ++active;
    }
  }
  if (active == 0) return std::nullopt;
  double entropy = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double y = std::abs(features[i] * attribution[i]);
    if (y > 0.0) {
      const double p = y / total;
      entropy -= p * std::log(p);
    }
  }
  return std::exp(entropy) / static_cast<double>(active);
}

double dictionary_recovery(const Matrix& learned_dec, const Matrix& gt_dictionary) {
  if (learned_dec.rows() != gt_dictionary.rows()) {
    throw std::invalid_argument("dictionary_recovery: dimension mismatch");
  }
  const Matrix learned_t = learned_dec.transposed();
  const Matrix gt_t = gt_dictionary.transposed();
  Vector learned_norm(learned_t.rows());
  for (std::size_t j = 0; j < learned_t.rows(); ++j) learned_norm[j] = std::sqrt(squared_norm(learned_t.row(j)));
  double sum = 0.0;
  for (std::size_t i = 0; i < gt_t.rows(); ++i) {
    const double gnorm = std::sqrt(squared_norm(gt_t.row(i)));
    double best = 0.0;
    for (std::size_t j = 0; j < learned_t.rows(); ++j) {
      if (learned_norm[j] == 0.0 || gnorm == 0.0) continue;
      best = std::max(best, std::abs(dot(gt_t.row(i), learned_t.row(j))) / (gnorm * learned_norm[j]));
    }
    sum += best;
  }
  return sum / static_cast<double>(gt_t.rows());
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["eval_size"] = r.eval_size;
  j["mean_l0"] = r.mean_l0;
  j["fvu"] = r.fvu;
  j["dead_frac"] = r.dead_frac;
  j["dead_definition"] = "zero activations over eval set";
  j["high_freq_frac_10pct"] = r.high_freq_frac_10pct;
  j["high_freq_frac_1pct"] = r.high_freq_frac_1pct;
  j["r_l0_mean"] = r.r_l0_mean ? nlohmann::json(*r.r_l0_mean) : nlohmann::json(nullptr);
  j["r_l0_attribution"] = "synthetic linear probe gradient";
  j["recovery"] = r.recovery ? nlohmann::json(*r.recovery) : nlohmann::json(nullptr);
  j["freq"] = r.freq;
  return j;
}

}  // namespace jumpsae
