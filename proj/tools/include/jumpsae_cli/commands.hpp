#pragma once

#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "jumpsae/datagen.hpp"
#include "jumpsae/metrics.hpp"
#include "jumpsae/trainer.hpp"
#include "jumpsae_cli/config.hpp"

namespace jumpsae::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitVerifyFailed = 3;

/// Data for one run: either the synthetic task named by the config, or an
/// ACT1 file (`data_in`) normalised by its own leading rows.
class Dataset {
public:
  explicit Dataset(const RunConfig& cfg);

  std::size_t dim() const noexcept { return dim_; }
  const NormStats& norm() const noexcept { return norm_; }
  const std::optional<GroundTruth>& ground_truth() const noexcept { return gt_; }

  std::unique_ptr<BatchSource> training_stream() const;
  /// Small fixed set behind the metrics log.
  ActivationBatch log_eval_set() const;
  /// Streams `final_eval_size` examples (synthetic) or every row (file).
  EvalReport final_eval(const SaeParams& params) const;

private:
  const RunConfig& cfg_;
  std::uint64_t seed_;
  std::size_t dim_ = 0;
  NormStats norm_;
  std::optional<GroundTruth> gt_;
  std::optional<Matrix> rows_;
};

struct SweepRow {
  std::string arch;
  double axis_value = 0.0;
  EvalReport report;
};

/// One training run per value of the sweep axis, in order.
std::vector<SweepRow> run_sweep(const RunConfig& cfg, std::ostream* progress = nullptr);
std::string sweep_csv_header();
std::string sweep_csv_rows(const std::vector<SweepRow>& rows);

int cmd_datagen(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg);
int cmd_eval(const RunConfig& cfg);
int cmd_sweep(const RunConfig& cfg);
int cmd_verify(const RunConfig& cfg);

}  // namespace jumpsae::cli
