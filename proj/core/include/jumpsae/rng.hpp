#pragma once

#include <cstdint>
#include <optional>

#include "jumpsae/tensor.hpp"

namespace jumpsae {

/// Named substreams so data generation, initialisation, resampling and
/// evaluation draw from independent sequences that never interleave.
enum class StreamId : std::uint64_t {
  TrainData = 1,
  Init = 2,
  Resample = 3,
  EvalData = 4,
  Calibration = 5,
  GroundTruth = 6,
  Probe = 7,
  Verify = 8,
};

/// Counter-based generator: output n is a pure function of
/// (seed, stream id, n), so streams are reproducible on every platform and can
/// be re-positioned without replaying earlier draws.
class RngStream {
public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);
  RngStream(std::uint64_t seed, StreamId stream)
      : RngStream(seed, static_cast<std::uint64_t>(stream)) {}

  std::uint64_t next_u64() noexcept;
  /// Uniform on the open interval (0, 1).
  double uniform() noexcept;
  /// Standard normal (Box-Muller, both outputs used).
  double normal() noexcept;
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }

  /// Derives an independent child stream, e.g. one per sweep point.
  RngStream substream(std::uint64_t index) const;

private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::optional<double> spare_normal_;
};

/// rows x cols matrix of i.i.d. standard normals drawn from `rng`.
Matrix gaussian(RngStream& rng, std::size_t rows, std::size_t cols);

}  // namespace jumpsae
