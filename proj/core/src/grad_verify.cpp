#include "jumpsae/grad_verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "jumpsae/losses.hpp"

namespace jumpsae {
namespace {

constexpr double kLower = -8.0;
constexpr double kUpper = 8.0;

double std_normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double toy_pre(const ToyProblem& toy, double x) { return toy.w_enc * x + toy.b_enc; }

// Integrates f over [a, b], splitting at every breakpoint inside the range
// and spending `per_piece` Simpson intervals on each smooth piece.
double integrate_piecewise(const std::function<double(double)>& f, double a, double b,
                           std::vector<double> breaks, std::size_t per_piece) {
  breaks.push_back(a);
  breaks.push_back(b);
  std::sort(breaks.begin(), breaks.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double lo = std::max(a, breaks[i]);
    const double hi = std::min(b, breaks[i + 1]);
    if (hi > lo) total += simpson(f, lo, hi, per_piece);
  }
  return total;
}

// Solution of pi(x) = z, if the encoder weight is non-zero.
std::vector<double> preimage(const ToyProblem& toy, std::initializer_list<double> zs) {
  std::vector<double> xs;
  if (toy.w_enc == 0.0) return xs;
  for (double z : zs) xs.push_back((z - toy.b_enc) / toy.w_enc);
  return xs;
}

}  // namespace

double pre_activation_density(const ToyProblem& toy, double z) {
  if (toy.w_enc == 0.0) return 0.0;  // point mass at b_enc, no density elsewhere
  const double x = (z - toy.b_enc) / toy.w_enc;
  return std_normal_pdf(x) / std::abs(toy.w_enc);
}

double analytic_grad(const ToyProblem& toy) {
  if (toy.w_enc == 0.0) return 0.0;
  const double x_star = (toy.theta - toy.b_enc) / toy.w_enc;
  // I at pi = theta with the boundary feature counted at half weight.
  const double i_boundary =
      2.0 * toy.theta * toy.decoder * (x_star - toy.b_dec - 0.5 * toy.theta * toy.decoder);
  return (i_boundary - toy.lambda) * pre_activation_density(toy, toy.theta);
}

double simpson(const std::function<double(double)>& f, double a, double b, std::size_t intervals) {
  if (intervals < 2) intervals = 2;
  if (intervals % 2 != 0) ++intervals;
  const double h = (b - a) / static_cast<double>(intervals);
  double odd = 0.0;
  double even = 0.0;
  for (std::size_t i = 1; i < intervals; ++i) {
    const double v = f(a + h * static_cast<double>(i));
    (i % 2 == 1 ? odd : even) += v;
  }
  return h / 3.0 * (f(a) + f(b) + 4.0 * odd + 2.0 * even);
}

double expected_loss(const ToyProblem& toy, double theta, std::size_t intervals) {
  if (!(theta > 0.0)) throw std::invalid_argument("expected_loss: theta must be positive");
  auto integrand = [&](double x) {
    const double pre = toy_pre(toy, x);
    const bool active = pre > theta;
    const double xhat = toy.decoder * (active ? pre : 0.0) + toy.b_dec;
    const double e = x - xhat;
    return (e * e + toy.lambda * (active ? 1.0 : 0.0)) * std_normal_pdf(x);
  };
  const auto breaks = preimage(toy, {theta});
  const std::size_t pieces = breaks.size() + 1;
  const double value = integrate_piecewise(integrand, kLower, kUpper, breaks, intervals / pieces);
  if (!std::isfinite(value)) throw std::runtime_error("expected_loss: quadrature did not converge");
  return value;
}

double fd_expected_grad(const ToyProblem& toy, double delta, std::size_t intervals) {
  if (!(delta > 0.0) || !(toy.theta - delta > 0.0)) {
    throw std::invalid_argument("fd_expected_grad: need 0 < delta < theta");
  }
  return (expected_loss(toy, toy.theta + delta, intervals) -
          expected_loss(toy, toy.theta - delta, intervals)) /
         (2.0 * delta);
}

SaeParams toy_params(const ToyProblem& toy) {
  if (!(toy.theta > 0.0)) throw std::invalid_argument("toy: theta must be positive");
  SaeParams p = make_params(Arch::JumpRelu, 1, 1);
  p.w_enc(0, 0) = toy.w_enc;
  p.b_enc[0] = toy.b_enc;
  p.w_dec(0, 0) = toy.decoder;
  p.b_dec[0] = toy.b_dec;
  p.log_theta[0] = std::log(toy.theta);
  return p;
}

std::vector<double> draw_toy_inputs(std::size_t count, RngStream& rng) {
  std::vector<double> xs(count);
  for (double& x : xs) x = rng.normal();
  return xs;
}

double mc_ste_grad(const ToyProblem& toy, std::span<const double> xs, double eps, KernelKind kernel) {
  if (xs.empty()) throw std::invalid_argument("mc_ste_grad: need at least one sample");
  const SaeParams params = toy_params(toy);
  ActivationBatch batch{Matrix(xs.size(), 1, std::vector<double>(xs.begin(), xs.end()))};
  LossSpec spec;
  spec.kind = LossKind::L0;
  spec.lambda = toy.lambda;
  spec.bandwidth = Bandwidth(eps);
  spec.kernel = kernel;
  spec.use_pre_enc_bias = false;
  const GradientSet g = backward(params, batch, spec);
  return g.log_theta[0] / params.thresholds()[0];
}

double mc_ste_grad(const ToyProblem& toy, std::size_t count, double eps, KernelKind kernel,
                   RngStream& rng) {
  const auto xs = draw_toy_inputs(count, rng);
  return mc_ste_grad(toy, xs, eps, kernel);
}

KdeEstimate kde_estimate(const ToyProblem& toy, std::span<const double> xs, double eps,
                         KernelKind kernel) {
  if (xs.empty()) throw std::invalid_argument("kde_estimate: need at least one sample");
  const double n = static_cast<double>(xs.size());
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double x : xs) {
    const double pre = std::max(0.0, toy_pre(toy, x));
    const double f = pre > toy.theta ? pre : 0.0;
    const double xhat = toy.decoder * f + toy.b_dec;
    const double importance = 2.0 * toy.theta * toy.decoder * (x - xhat);
    const double term = (importance - toy.lambda) * kernel_eval(kernel, (pre - toy.theta) / eps) / eps;
    sum += term;
    sum_sq += term * term;
  }
  const double mean = sum / n;
  const double var = xs.size() > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) : 0.0;
  return {mean, std::sqrt(var / n)};
}

double expected_kde_estimate(const ToyProblem& toy, double eps, KernelKind kernel) {
  auto integrand = [&](double x) {
    const double pre = std::max(0.0, toy_pre(toy, x));
    const double f = pre > toy.theta ? pre : 0.0;
    const double importance = 2.0 * toy.theta * toy.decoder * (x - toy.decoder * f - toy.b_dec);
    return (importance - toy.lambda) * kernel_eval(kernel, (pre - toy.theta) / eps) / eps *
           std_normal_pdf(x);
  };
  const double r = kernel_support_radius(kernel);
  std::vector<double> breaks;
  if (std::isfinite(r)) {
    breaks = preimage(toy, {toy.theta, 0.0, toy.theta - r * eps, toy.theta + r * eps});
  } else {
    breaks = preimage(toy, {toy.theta, 0.0});
  }
  return integrate_piecewise(integrand, kLower, kUpper, breaks, 1u << 14);
}

Vector kde_threshold_gradient(const SaeParams& params, const ActivationBatch& batch,
                              double lambda, double eps, KernelKind kernel, bool use_pre_enc_bias) {
  if (params.arch != Arch::JumpRelu) throw std::invalid_argument("JumpReLU SAE required");
  const std::size_t n = params.input_dim();
  const std::size_t m = params.width();
  const std::size_t rows = batch.size();
  Vector theta(m);
  for (std::size_t i = 0; i < m; ++i) theta[i] = std::exp(params.log_theta[i]);

  Vector out(m, 0.0);
  Vector xin(n), pre(m), xhat(n);
  for (std::size_t a = 0; a < rows; ++a) {
    for (std::size_t c = 0; c < n; ++c) {
      xin[c] = batch.x(a, c) - (use_pre_enc_bias ? params.b_dec[c] : 0.0);
    }
    for (std::size_t i = 0; i < m; ++i) {
      // Weighted sum first, bias last, the same rounding order as the model.
      double z = 0.0;
      for (std::size_t c = 0; c < n; ++c) z += params.w_enc(i, c) * xin[c];
      pre[i] = std::max(0.0, z + params.b_enc[i]);
    }
    for (std::size_t c = 0; c < n; ++c) {
      double v = 0.0;
      for (std::size_t j = 0; j < m; ++j)
        if (pre[j] > theta[j]) v += params.w_dec(c, j) * pre[j];
      xhat[c] = v + params.b_dec[c];
    }
    for (std::size_t i = 0; i < m; ++i) {
      double proj = 0.0;
      for (std::size_t c = 0; c < n; ++c) proj += params.w_dec(c, i) * (batch.x(a, c) - xhat[c]);
      const double importance = 2.0 * theta[i] * proj;
      out[i] += (importance - lambda) * kernel_eval(kernel, (pre[i] - theta[i]) / eps);
    }
  }
  for (double& v : out) v /= static_cast<double>(rows) * eps;
  return out;
}

double relative_error(double a, double b) noexcept {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

IdentityCheck check_ste_kde_identity(std::uint64_t seed, std::size_t instances) {
  RngStream rng = RngStream(seed, StreamId::Verify).substream(17);
  constexpr KernelKind kKernels[] = {KernelKind::Rectangle, KernelKind::Triangular,
                                     KernelKind::Gaussian, KernelKind::Epanechnikov};
  IdentityCheck out;
  for (std::size_t inst = 0; inst < instances; ++inst) {
    const std::size_t n = 1 + rng.below(8);
    const std::size_t m = 1 + rng.below(16);
    const std::size_t rows = 1 + rng.below(64);
    SaeParams p = make_params(Arch::JumpRelu, n, m);
    p.w_enc = gaussian(rng, m, n);
    p.w_dec = gaussian(rng, n, m);
    for (double& v : p.b_enc) v = 0.3 * rng.normal();
    for (double& v : p.b_dec) v = 0.1 * rng.normal();
    for (double& v : p.log_theta) v = std::log(0.05 + 0.95 * rng.uniform());
    ActivationBatch batch{gaussian(rng, rows, n)};

    LossSpec spec;
    spec.kind = LossKind::L0;
    spec.lambda = rng.uniform();
    spec.bandwidth = Bandwidth(0.05 + 0.95 * rng.uniform());
    spec.kernel = kKernels[rng.below(4)];
    spec.use_pre_enc_bias = rng.uniform() < 0.5;

    const GradientSet g = backward(p, batch, spec);
    const Vector expected = kde_threshold_gradient(p, batch, spec.lambda, spec.bandwidth.value(),
                                                   spec.kernel, spec.use_pre_enc_bias);
    const Vector theta = p.thresholds();
    for (std::size_t i = 0; i < m; ++i) {
      const double ste = g.log_theta[i] / theta[i];
      out.max_relative_error = std::max(out.max_relative_error, relative_error(ste, expected[i]));
      ++out.features_compared;
      if (expected[i] != 0.0) ++out.nonzero_features;
    }
    ++out.instances;
  }
  return out;
}

namespace {

constexpr KernelKind kAllKernels[] = {KernelKind::Rectangle, KernelKind::Triangular,
                                      KernelKind::Gaussian, KernelKind::Epanechnikov};

CheckResult make_check(std::string name, bool passed, double measured, double tolerance) {
  CheckResult c;
  c.name = std::move(name);
  c.passed = passed;
  c.measured = measured;
  c.tolerance = tolerance;
  return c;
}

}  // namespace

std::vector<CheckResult> run_verification(const VerifyOptions& options) {
  std::vector<CheckResult> results;
  const ToyProblem toy;
  const RngStream base(options.seed, StreamId::Verify);
  const double analytic = analytic_grad(toy);

  // Exact identity on the toy and on random multi-feature instances.
  {
    RngStream rng = base.substream(1);
    const auto xs = draw_toy_inputs(10'000, rng);
    double worst = 0.0;
    for (KernelKind k : kAllKernels) {
      worst = std::max(worst, relative_error(mc_ste_grad(toy, xs, 0.05, k),
                                             kde_estimate(toy, xs, 0.05, k).value));
    }
    results.push_back(make_check("ste_kde_identity_toy", worst <= 1e-12, worst, 1e-12));
  }
  {
    const IdentityCheck ic = check_ste_kde_identity(options.seed, 100);
    CheckResult c = make_check("ste_kde_identity_random", ic.max_relative_error <= 1e-12,
                               ic.max_relative_error, 1e-12);
    c.detail = {{"instances", ic.instances},
                {"features_compared", ic.features_compared},
                {"nonzero_features", ic.nonzero_features}};
    results.push_back(std::move(c));
  }

  // Analytic derivative against finite differences of the integrated loss.
  {
    const double fd = fd_expected_grad(toy, 1e-4);
    CheckResult c = make_check("analytic_vs_finite_difference", std::abs(fd - analytic) <= 1e-4,
                               std::abs(fd - analytic), 1e-4);
    c.detail = {{"analytic", analytic}, {"finite_difference", fd}};
    results.push_back(std::move(c));
  }
  {
    ToyProblem root = toy;
    root.lambda = 2.0 * root.theta * root.decoder * (root.theta - 0.5 * root.theta * root.decoder);
    const double g = analytic_grad(root);
    results.push_back(make_check("analytic_root_at_balanced_lambda", std::abs(g) <= 1e-15,
                                 std::abs(g), 1e-15));
  }

  // Monte-Carlo STE gradient against the analytic value, every kernel.
  {
    RngStream rng = base.substream(2);
    const auto xs = draw_toy_inputs(options.large_n, rng);
    for (KernelKind k : kAllKernels) {
      const double mc = mc_ste_grad(toy, xs, 0.05, k);
      const double rel = std::abs(mc - analytic) / std::abs(analytic);
      CheckResult c = make_check("mc_consistency_" + std::string(to_string(k)), rel <= 0.05, rel, 0.05);
      c.detail = {{"mc", mc}, {"analytic", analytic}, {"n", xs.size()}, {"eps", 0.05}};
      results.push_back(std::move(c));
    }
    ToyProblem lambda_only = toy;
    lambda_only.decoder = 0.0;
    const double mc = mc_ste_grad(lambda_only, xs, 0.05, KernelKind::Rectangle);
    const double expected = -toy.lambda * std_normal_pdf(1.0);
    const double rel = std::abs(mc - expected) / std::abs(expected);
    CheckResult c = make_check("mc_lambda_only_density", rel <= 0.05, rel, 0.05);
    c.detail = {{"mc", mc}, {"expected", expected}};
    results.push_back(std::move(c));
  }

  // Consistency grid: at fixed eps the error stays inside |bias| + 4 se and
  // that envelope shrinks as N grows.
  {
    const double grid_eps[] = {0.2, 0.05, 0.02};
    std::vector<std::size_t> grid_n = {10'000, 100'000};
    if (options.large_n > 100'000) grid_n.push_back(options.large_n);
    bool ok = true;
    double worst_ratio = 0.0;
    nlohmann::json detail = nlohmann::json::array();
    for (std::size_t ei = 0; ei < std::size(grid_eps); ++ei) {
      const double eps = grid_eps[ei];
      const double bias = std::abs(expected_kde_estimate(toy, eps, KernelKind::Rectangle) - analytic);
      double prev_env = std::numeric_limits<double>::infinity();
      for (std::size_t ni = 0; ni < grid_n.size(); ++ni) {
        RngStream rng = base.substream(100 + 10 * ei + ni);
        const auto xs = draw_toy_inputs(grid_n[ni], rng);
        const double mc = mc_ste_grad(toy, xs, eps, KernelKind::Rectangle);
        const double se = kde_estimate(toy, xs, eps, KernelKind::Rectangle).std_error;
        const double err = std::abs(mc - analytic);
        const double env = bias + 4.0 * se;
        ok = ok && err <= env && env < prev_env;
        worst_ratio = std::max(worst_ratio, err / env);
        prev_env = env;
        detail.push_back({{"eps", eps}, {"n", grid_n[ni]}, {"error", err}, {"envelope", env}});
      }
    }
    CheckResult c = make_check("consistency_grid", ok, worst_ratio, 1.0);
    c.detail = detail;
    results.push_back(std::move(c));
  }

  // Bandwidth trades variance for bias.
  {
    const double eps_grid[] = {0.02, 0.05, 0.2};
    std::vector<double> variances;
    for (std::size_t ei = 0; ei < std::size(eps_grid); ++ei) {
      RngStream rng = base.substream(200 + ei);
      double sum = 0.0, sum_sq = 0.0;
      const double r = static_cast<double>(options.variance_replicates);
      for (std::size_t rep = 0; rep < options.variance_replicates; ++rep) {
        const auto xs = draw_toy_inputs(10'000, rng);
        const double v = mc_ste_grad(toy, xs, eps_grid[ei], KernelKind::Rectangle);
        sum += v;
        sum_sq += v * v;
      }
      variances.push_back((sum_sq - sum * sum / r) / (r - 1.0));
    }
    const bool ok = variances[0] > variances[1] && variances[1] > variances[2];
    CheckResult c = make_check("variance_decreases_with_eps", ok, variances[2] / variances[0], 1.0);
    c.detail = {{"eps", {0.02, 0.05, 0.2}}, {"variance", variances}, {"n", 10'000},
                {"replicates", options.variance_replicates}};
    results.push_back(std::move(c));
  }
  {
    const double eps_grid[] = {0.02, 0.05, 0.1, 0.2, 0.5};
    std::vector<double> biases;
    bool monotone = true;
    bool mc_agrees = true;
    double worst_z = 0.0;
    RngStream rng = base.substream(300);
    const auto xs = draw_toy_inputs(options.large_n, rng);
    for (double eps : eps_grid) {
      const double mean = expected_kde_estimate(toy, eps, KernelKind::Rectangle);
      const double bias = std::abs(mean - analytic);
      if (!biases.empty() && !(bias > biases.back())) monotone = false;
      biases.push_back(bias);
      const KdeEstimate est = kde_estimate(toy, xs, eps, KernelKind::Rectangle);
      const double z = std::abs(est.value - mean) / est.std_error;
      worst_z = std::max(worst_z, z);
      mc_agrees = mc_agrees && z <= 4.0;
    }
    CheckResult c = make_check("bias_increases_with_eps", monotone && mc_agrees, worst_z, 4.0);
    c.detail = {{"eps", {0.02, 0.05, 0.1, 0.2, 0.5}}, {"bias", biases}, {"monotone", monotone},
                {"max_mc_z_score", worst_z}};
    results.push_back(std::move(c));
  }

  return results;
}

nlohmann::json to_json(const std::vector<CheckResult>& results) {
  nlohmann::json checks = nlohmann::json::array();
  bool all = true;
  for (const auto& r : results) {
    all = all && r.passed;
    checks.push_back({{"name", r.name},
                      {"passed", r.passed},
                      {"measured", r.measured},
                      {"tolerance", r.tolerance},
                      {"detail", r.detail}});
  }
  return {{"all_passed", all}, {"checks", checks}};
}

}  // namespace jumpsae
