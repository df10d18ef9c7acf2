#include "jumpsae/activations.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace jumpsae {

std::string_view to_string(KernelKind k) noexcept {
  switch (k) {
    case KernelKind::Rectangle: return "rectangle";
    case KernelKind::Triangular: return "triangular";
    case KernelKind::Gaussian: return "gaussian";
    case KernelKind::Epanechnikov: return "epanechnikov";
  }
  return "unknown";
}

KernelKind parse_kernel(std::string_view name) {
  for (auto k : {KernelKind::Rectangle, KernelKind::Triangular, KernelKind::Gaussian,
                 KernelKind::Epanechnikov}) {
    if (name == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown kernel '" + std::string(name) + "'");
}

Bandwidth::Bandwidth(double epsilon) : epsilon_(epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("bandwidth must be positive and finite, got " +
                                std::to_string(epsilon));
  }
}

double jumprelu(double z, double threshold) {
  if (!(threshold > 0.0)) {
    throw std::invalid_argument("jumprelu: threshold must be positive, got " +
                                std::to_string(threshold));
  }
  return z > threshold ? z : 0.0;
}

double kernel_eval(KernelKind k, double z) noexcept {
  switch (k) {
    case KernelKind::Rectangle:
      return (z > -0.5 && z < 0.5) ? 1.0 : 0.0;
    case KernelKind::Triangular:
      return std::max(0.0, 1.0 - std::abs(z));
    case KernelKind::Gaussian:
      return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    case KernelKind::Epanechnikov:
      return std::abs(z) <= 1.0 ? 0.75 * (1.0 - z * z) : 0.0;
  }
  return 0.0;
}

double kernel_support_radius(KernelKind k) noexcept {
  switch (k) {
    case KernelKind::Rectangle: return 0.5;
    case KernelKind::Triangular:
    case KernelKind::Epanechnikov: return 1.0;
    case KernelKind::Gaussian: return std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

double pseudo_grad_jumprelu_theta(double z, double threshold, Bandwidth eps, KernelKind k) {
  const double e = eps.value();
  return -(threshold / e) * kernel_eval(k, (z - threshold) / e);
}

double pseudo_grad_step_theta(double z, double threshold, Bandwidth eps, KernelKind k) {
  const double e = eps.value();
  return -(1.0 / e) * kernel_eval(k, (z - threshold) / e);
}

std::vector<std::size_t> topk_select(std::span<const double> values, std::size_t count) {
  if (count < 1 || count > values.size()) {
    throw std::invalid_argument("topk_select: K=" + std::to_string(count) +
                                " out of range [1, " + std::to_string(values.size()) + "]");
  }
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto larger = [&](std::size_t a, std::size_t b) {
    return values[a] > values[b] || (values[a] == values[b] && a < b);
  };
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count - 1), idx.end(),
                   larger);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace jumpsae
