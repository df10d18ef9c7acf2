#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace jumpsae {

enum class KernelKind { Rectangle, Triangular, Gaussian, Epanechnikov };

std::string_view to_string(KernelKind k) noexcept;
KernelKind parse_kernel(std::string_view name);

/// KDE bandwidth. Always strictly positive.
class Bandwidth {
public:
  explicit Bandwidth(double epsilon);
  double value() const noexcept { return epsilon_; }

private:
  double epsilon_;
};

inline constexpr double kDefaultBandwidth = 0.001;

/// z if z > threshold, else 0. Threshold must be positive.
double jumprelu(double z, double threshold);

/// Forward step used for L0 counts: 1 if z > threshold else 0.
inline double step(double z, double threshold) noexcept { return z > threshold ? 1.0 : 0.0; }

double kernel_eval(KernelKind k, double z) noexcept;

/// Half-width of the kernel's support in units of the bandwidth; infinite for
/// the Gaussian.
double kernel_support_radius(KernelKind k) noexcept;

/// Pseudo-derivative of jumprelu_theta(z) with respect to theta:
/// -(theta / eps) K((z - theta) / eps).
double pseudo_grad_jumprelu_theta(double z, double threshold, Bandwidth eps, KernelKind k);

/// Pseudo-derivative of H(z - theta) with respect to theta:
/// -(1 / eps) K((z - theta) / eps).
double pseudo_grad_step_theta(double z, double threshold, Bandwidth eps, KernelKind k);

/// Indices of the `count` largest values, ties broken towards the lower index.
/// Returned in ascending index order.
std::vector<std::size_t> topk_select(std::span<const double> values, std::size_t count);

}  // namespace jumpsae
