#include "jumpsae/datagen.hpp"

#include <cmath>
#include <stdexcept>

#include "binary_io.hpp"

namespace jumpsae {

double GroundTruth::expected_l0() const noexcept {
  double s = 0.0;
  for (double p : p_active) s += p;
  return s;
}

void check_ground_truth(const GroundTruth& gt) {
  if (gt.dictionary.empty()) throw std::invalid_argument("ground truth: empty dictionary");
  if (gt.p_active.size() != gt.num_features()) {
    throw std::invalid_argument("ground truth: p_active length != number of features");
  }
  for (double p : gt.p_active) {
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("ground truth: p_active outside [0,1)");
  }
  if (!(gt.noise_std >= 0.0)) throw std::invalid_argument("ground truth: negative noise_std");
}

GroundTruth make_ground_truth(std::size_t input_dim, std::size_t num_features, double expected_l0,
                              double noise_std, RngStream& rng) {
  if (!(expected_l0 > 0.0) || expected_l0 >= static_cast<double>(num_features)) {
    throw std::invalid_argument("make_ground_truth: expected_l0 must lie in (0, M*)");
  }
  GroundTruth gt;
  gt.dictionary = gaussian(rng, input_dim, num_features);
  for (std::size_t c = 0; c < num_features; ++c) {
    double norm2 = 0.0;
    for (std::size_t r = 0; r < input_dim; ++r) norm2 += gt.dictionary(r, c) * gt.dictionary(r, c);
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t r = 0; r < input_dim; ++r) gt.dictionary(r, c) *= inv;
  }
  gt.p_active.assign(num_features, expected_l0 / static_cast<double>(num_features));
  gt.noise_std = noise_std;
  return gt;
}

SyntheticBatch generate(const GroundTruth& gt, std::size_t count, RngStream& rng) {
  const std::size_t n = gt.input_dim();
  const std::size_t m = gt.num_features();
  const Matrix dict_t = gt.dictionary.transposed();  // row i = g_i
  SyntheticBatch out;
  out.batch.x = Matrix(count, n);
  out.coefficients = Matrix(count, m);
  for (std::size_t s = 0; s < count; ++s) {
    auto a = out.coefficients.row(s);
    auto x = out.batch.x.row(s);
    for (std::size_t i = 0; i < m; ++i) {
      if (rng.uniform() >= gt.p_active[i]) continue;
      const double mag = std::max(0.0, gt.magnitude_mean + gt.magnitude_std * rng.normal());
      a[i] = mag;
      if (mag == 0.0) continue;
      auto g = dict_t.row(i);
      for (std::size_t c = 0; c < n; ++c) x[c] += mag * g[c];
    }
    if (gt.noise_std > 0.0) {
      for (std::size_t c = 0; c < n; ++c) x[c] += gt.noise_std * rng.normal();
    }
  }
  return out;
}

Matrix NormStats::apply(const Matrix& x) const {
  Matrix out = x;
  const double inv = 1.0 / scale;
  for (double& v : out.data()) v *= inv;
  return out;
}

void NormStats::apply_in_place(ActivationBatch& batch) const {
  const double inv = 1.0 / scale;
  for (double& v : batch.x.data()) v *= inv;
  batch.norm_scale = scale;
}

NormStats fit_normalizer(const ActivationBatch& calibration) {
  if (calibration.size() == 0) throw std::invalid_argument("fit_normalizer: empty calibration set");
  double total = 0.0;
  for (std::size_t s = 0; s < calibration.size(); ++s) total += squared_norm(calibration.x.row(s));
  const double mean_sq = total / static_cast<double>(calibration.size());
  if (!(mean_sq > 0.0)) throw std::invalid_argument("fit_normalizer: all-zero calibration set");
  return NormStats{std::sqrt(mean_sq)};
}

SyntheticSource::SyntheticSource(GroundTruth gt, RngStream rng, NormStats norm)
    : gt_(std::move(gt)), rng_(std::move(rng)), norm_(norm) {
  check_ground_truth(gt_);
}

ActivationBatch SyntheticSource::next(std::size_t count) {
  ActivationBatch b = generate(gt_, count, rng_).batch;
  norm_.apply_in_place(b);
  return b;
}

MatrixSource::MatrixSource(Matrix data, NormStats norm) : data_(std::move(data)), norm_(norm) {
  if (data_.rows() == 0) throw std::invalid_argument("MatrixSource: no rows");
}

ActivationBatch MatrixSource::next(std::size_t count) {
  ActivationBatch b;
  b.x = Matrix(count, data_.cols());
  for (std::size_t s = 0; s < count; ++s) {
    auto src = data_.row(cursor_);
    std::copy(src.begin(), src.end(), b.x.row(s).begin());
    cursor_ = (cursor_ + 1) % data_.rows();
  }
  norm_.apply_in_place(b);
  return b;
}

void save_activations(const std::string& path, const Matrix& x) {
  detail::ByteWriter w;
  w.magic("ACT1");
  w.u64(x.cols());
  w.u64(x.rows());
  w.f64s(x.data());
  detail::write_file(path, w.take());
}

Matrix load_activations(const std::string& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes, "activation file '" + path + "'");
  r.expect_magic("ACT1");
  const auto n = r.u64();
  const auto count = r.u64();
  if (n == 0 || count == 0) throw std::runtime_error("activation file: zero dimension");
  if (r.remaining() != n * count * 8) {
    throw std::runtime_error("activation file: payload size does not match header");
  }
  std::vector<double> data(n * count);
  r.f64s(data);
  return Matrix(count, n, std::move(data));  // validates finiteness
}

nlohmann::json to_json(const GroundTruth& gt) {
  nlohmann::json j;
  j["n"] = gt.input_dim();
  j["num_features"] = gt.num_features();
  j["magnitude_mean"] = gt.magnitude_mean;
  j["magnitude_std"] = gt.magnitude_std;
  j["noise_std"] = gt.noise_std;
  j["p_active"] = gt.p_active;
  j["dictionary"] = std::vector<double>(gt.dictionary.data().begin(), gt.dictionary.data().end());
  return j;
}

GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  GroundTruth gt;
  const auto n = j.at("n").get<std::size_t>();
  const auto m = j.at("num_features").get<std::size_t>();
  gt.magnitude_mean = j.at("magnitude_mean").get<double>();
  gt.magnitude_std = j.at("magnitude_std").get<double>();
  gt.noise_std = j.at("noise_std").get<double>();
  gt.p_active = j.at("p_active").get<Vector>();
  gt.dictionary = Matrix(n, m, j.at("dictionary").get<std::vector<double>>());
  check_ground_truth(gt);
  return gt;
}

}  // namespace jumpsae
