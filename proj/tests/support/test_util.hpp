#pragma once

#include <cmath>

#include "jumpsae/rng.hpp"
#include "jumpsae/sae_model.hpp"

namespace jumpsae::testing {

// Random parameters with every tensor of `arch` filled, thresholds in
// [0.05, 0.5].
inline SaeParams random_params(Arch arch, std::size_t n, std::size_t m, RngStream& rng,
                               std::size_t k = 2) {
  SaeParams p = make_params(arch, n, m, k);
  p.w_enc = gaussian(rng, m, n);
  p.w_dec = gaussian(rng, n, m);
  for (auto* v : {&p.b_enc, &p.b_dec, &p.r_mag, &p.b_gate, &p.b_mag}) {
    for (double& x : *v) x = 0.3 * rng.normal();
  }
  for (double& x : p.log_theta) x = std::log(0.05 + 0.45 * rng.uniform());
  return p;
}

inline double standard_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
}

}  // namespace jumpsae::testing
