#pragma once

#include <cstddef>
#include <string>

#include <nlohmann/json.hpp>

#include "jumpsae/rng.hpp"
#include "jumpsae/sae_model.hpp"

namespace jumpsae {

/// Known generative model for synthetic activations: x = G a + noise with
/// a_i = Bernoulli(p_i) * max(0, mean + std * normal).
struct GroundTruth {
  Matrix dictionary;  // n x M*, unit-norm columns
  Vector p_active;    // per feature, in (0, 1)
  double magnitude_mean = 1.0;
  double magnitude_std = 0.5;
  double noise_std = 0.01;

  std::size_t input_dim() const noexcept { return dictionary.rows(); }
  std::size_t num_features() const noexcept { return dictionary.cols(); }
  double expected_l0() const noexcept;
};

/// Random unit-norm dictionary with uniform activation probability chosen so
/// that E[L0] = expected_l0.
GroundTruth make_ground_truth(std::size_t input_dim, std::size_t num_features, double expected_l0,
                              double noise_std, RngStream& rng);

void check_ground_truth(const GroundTruth& gt);

struct SyntheticBatch {
  ActivationBatch batch;  // unnormalised (norm_scale = 1)
  Matrix coefficients;    // N x M*
};

SyntheticBatch generate(const GroundTruth& gt, std::size_t count, RngStream& rng);

/// Dataset normalisation to unit mean squared L2 norm.
struct NormStats {
  double scale = 1.0;

  Matrix apply(const Matrix& x) const;
  void apply_in_place(ActivationBatch& batch) const;
};

NormStats fit_normalizer(const ActivationBatch& calibration);

/// Supplies training or evaluation batches in a fixed order.
class BatchSource {
public:
  virtual ~BatchSource() = default;
  virtual ActivationBatch next(std::size_t count) = 0;
  virtual std::size_t dim() const = 0;
};

/// Fresh samples from a ground truth, normalised with a fixed scale.
class SyntheticSource final : public BatchSource {
public:
  SyntheticSource(GroundTruth gt, RngStream rng, NormStats norm);
  ActivationBatch next(std::size_t count) override;
  std::size_t dim() const override { return gt_.input_dim(); }

private:
  GroundTruth gt_;
  RngStream rng_;
  NormStats norm_;
};

/// Cycles through the rows of a fixed matrix in order.
class MatrixSource final : public BatchSource {
public:
  MatrixSource(Matrix data, NormStats norm);
  ActivationBatch next(std::size_t count) override;
  std::size_t dim() const override { return data_.cols(); }
  std::size_t rows() const noexcept { return data_.rows(); }

private:
  Matrix data_;
  NormStats norm_;
  std::size_t cursor_ = 0;
};

// ACT1 activation file: "ACT1", n, N (u64 LE), then N x n row-major f64 LE.
void save_activations(const std::string& path, const Matrix& x);
Matrix load_activations(const std::string& path);

nlohmann::json to_json(const GroundTruth& gt);
GroundTruth ground_truth_from_json(const nlohmann::json& j);

}  // namespace jumpsae
