#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jumpsae/activations.hpp"
#include "jumpsae/rng.hpp"
#include "jumpsae/sae_model.hpp"

namespace jumpsae {

/// One-feature JumpReLU SAE on scalar inputs x ~ N(0, 1), so the
/// pre-activation pi = w_enc x + b_enc is Gaussian and its density is known.
/// The toy runs without the pre-encoder bias.
struct ToyProblem {
  double w_enc = 1.0;
  double b_enc = 0.0;
  double decoder = 1.0;
  double b_dec = 0.0;
  double theta = 1.0;
  double lambda = 0.1;
};

/// Density of pi at z.
double pre_activation_density(const ToyProblem& toy, double z);

/// Closed-form derivative of the expected loss with respect to theta,
/// (E[I | pi = theta] - lambda) p(theta), using H(0) = 1/2 at the boundary.
double analytic_grad(const ToyProblem& toy);

/// Composite Simpson over [a, b]; `intervals` is rounded up to even.
double simpson(const std::function<double(double)>& f, double a, double b, std::size_t intervals);

/// Expected toy loss at threshold `theta`, integrated over x in [-8, 8] with
/// the grid split at the discontinuity pi(x) = theta.
double expected_loss(const ToyProblem& toy, double theta, std::size_t intervals = 1u << 20);

/// Central difference of expected_loss around toy.theta.
double fd_expected_grad(const ToyProblem& toy, double delta, std::size_t intervals = 1u << 20);

/// The toy as a 1x1 JumpReLU SAE.
SaeParams toy_params(const ToyProblem& toy);

std::vector<double> draw_toy_inputs(std::size_t count, RngStream& rng);

/// Batch-mean theta pseudo-gradient from the training backward pass on the
/// given inputs (log-theta gradient divided by theta).
double mc_ste_grad(const ToyProblem& toy, std::span<const double> xs, double eps, KernelKind kernel);
double mc_ste_grad(const ToyProblem& toy, std::size_t count, double eps, KernelKind kernel,
                   RngStream& rng);

struct KdeEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// (1 / N eps) sum (I(x) - lambda) K((pi(x) - theta) / eps), coded directly
/// from the estimator rather than through the backward pass.
KdeEstimate kde_estimate(const ToyProblem& toy, std::span<const double> xs, double eps,
                         KernelKind kernel);

/// Exact expectation of kde_estimate over x ~ N(0, 1), by quadrature.
double expected_kde_estimate(const ToyProblem& toy, double eps, KernelKind kernel);

/// The same estimator for a general JumpReLU SAE and batch, per feature.
Vector kde_threshold_gradient(const SaeParams& params, const ActivationBatch& batch,
                              double lambda, double eps, KernelKind kernel, bool use_pre_enc_bias);

/// |a - b| / max(|a|, |b|), zero when both are zero.
double relative_error(double a, double b) noexcept;

struct IdentityCheck {
  std::size_t instances = 0;
  std::size_t features_compared = 0;
  std::size_t nonzero_features = 0;
  double max_relative_error = 0.0;
};

/// Compares backward's threshold gradient with kde_threshold_gradient on
/// random instances (n <= 8, M <= 16, N <= 64).
IdentityCheck check_ste_kde_identity(std::uint64_t seed, std::size_t instances);

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double tolerance = 0.0;
  nlohmann::json detail = nlohmann::json::object();
};

struct VerifyOptions {
  std::uint64_t seed = 1234;
  std::size_t large_n = 1'000'000;
  std::size_t variance_replicates = 200;
};

/// Runs every gradient-estimator check and returns one result per check.
std::vector<CheckResult> run_verification(const VerifyOptions& options = {});

nlohmann::json to_json(const std::vector<CheckResult>& results);

}  // namespace jumpsae
