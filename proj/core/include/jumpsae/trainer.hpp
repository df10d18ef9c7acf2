#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jumpsae/datagen.hpp"
#include "jumpsae/losses.hpp"
#include "jumpsae/metrics.hpp"
#include "jumpsae/optimizer.hpp"
#include "jumpsae/sae_model.hpp"

namespace jumpsae {

inline constexpr double kDefaultThresholdInit = 0.001;
inline constexpr double kGatedRiL1DecoderInitNorm = 0.1;

struct TrainConfig {
  Arch arch = Arch::JumpRelu;
  LossSpec loss;
  std::size_t width = 256;
  std::size_t k = 0;  // TopK only
  std::size_t steps = 1000;
  Schedule schedule;
  AdamConfig adam;
  double theta_init = kDefaultThresholdInit;
  double gated_ril1_decoder_norm = kGatedRiL1DecoderInitNorm;
  bool resample = false;
  std::size_t resample_every = 2000;
  /// A feature that has not fired for this many consecutive training batches
  /// counts as dead (AuxK and resampling).
  std::size_t dead_window = 1000;
  /// Metrics-log cadence in steps; the final step is always logged.
  std::size_t eval_every = 500;
  std::uint64_t seed = 0;
};

void check_config(const TrainConfig& cfg);

/// One line of the JSON-lines metrics log.
struct MetricsRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double lambda = 0.0;
  double loss_total = 0.0;
  double loss_recon = 0.0;
  double loss_sparsity = 0.0;
  double mean_l0 = 0.0;
  double fvu = 0.0;
  double dead_frac = 0.0;
};

nlohmann::json to_json(const MetricsRecord& r);
/// Serialises records as JSON lines.
std::string metrics_log_text(const std::vector<MetricsRecord>& log);

struct TrainResult {
  SaeParams params;
  std::vector<MetricsRecord> log;
  std::size_t decoder_redraws = 0;
  std::size_t resampled_features = 0;
};

/// Thrown when the loss or an update becomes non-finite. Holds the parameters
/// from the last step that completed cleanly.
class TrainingDiverged : public std::runtime_error {
public:
  TrainingDiverged(const std::string& what, SaeParams last_good, std::size_t step)
      : std::runtime_error(what), last_good_(std::move(last_good)), step_(step) {}
  const SaeParams& last_good() const noexcept { return last_good_; }
  std::size_t step() const noexcept { return step_; }

private:
  SaeParams last_good_;
  std::size_t step_;
};

/// Initial parameters: random unit decoder columns (norm 0.1 for GatedRiL1),
/// encoder equal to the decoder transpose, zero biases, thresholds at
/// theta_init.
SaeParams initialize(const TrainConfig& cfg, std::size_t input_dim);

/// Runs the training loop. `eval_set` feeds the periodic metrics records.
TrainResult train(const TrainConfig& cfg, BatchSource& data, const ActivationBatch& eval_set);

}  // namespace jumpsae
