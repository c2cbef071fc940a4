#include "scott/numerics/hash.hpp"

#include <bit>
#include <cstring>

namespace scott::numerics {

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t basis) {
  return fnv1a(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(text.data()),
                                              text.size()),
               basis);
}

namespace {

std::uint64_t mix_u64(std::uint64_t h, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  return fnv1a(std::span<const unsigned char>(b, 8), h);
}

}  // namespace

std::uint64_t fingerprint(const MlpParams& params) {
  std::uint64_t h = fnv1a(to_string(params.activation()));
  for (std::size_t s : params.layer_sizes()) h = mix_u64(h, s);
  for (double v : params.values()) h = mix_u64(h, std::bit_cast<std::uint64_t>(v));
  return h;
}

}  // namespace scott::numerics
