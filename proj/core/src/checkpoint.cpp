#include <cmath>
#include <stdexcept>

#include "binary_io.hpp"
#include "jumpsae/sae_model.hpp"

namespace jumpsae {

std::vector<std::uint8_t> encode_checkpoint(const SaeParams& params) {
  validate(params);
  detail::ByteWriter w;
  w.magic("SAE1");
  w.u8(static_cast<std::uint8_t>(params.arch));
  w.u64(params.input_dim());
  w.u64(params.width());
  w.u64(params.k);
  params.for_each([&](std::string_view, std::span<const double> t) { w.f64s(t); });
  return w.take();
}

SaeParams decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  r.expect_magic("SAE1");
  const std::uint8_t tag = r.u8();
  if (tag > static_cast<std::uint8_t>(Arch::TopK)) {
    throw std::runtime_error("checkpoint: unknown architecture tag " + std::to_string(tag));
  }
  const auto n = r.u64();
  const auto m = r.u64();
  const auto k = r.u64();
  if (n == 0 || m == 0 || n > (1u << 24) || m > (1u << 24)) {
    throw std::runtime_error("checkpoint: implausible dimensions");
  }
  SaeParams p = make_params(static_cast<Arch>(tag), n, m, k);
  p.for_each([&](std::string_view name, std::span<double> t) {
    r.f64s(t);
    for (double v : t) {
      if (!std::isfinite(v)) {
        throw std::runtime_error("checkpoint: non-finite value in " + std::string(name));
      }
    }
  });
  if (r.remaining() != 0) throw std::runtime_error("checkpoint: trailing bytes");
  return p;
}

void save_checkpoint(const std::string& path, const SaeParams& params) {
  detail::write_file(path, encode_checkpoint(params));
}

SaeParams load_checkpoint(const std::string& path) {
  return decode_checkpoint(detail::read_file(path));
}

}  // namespace jumpsae
