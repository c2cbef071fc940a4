#include "scott/numerics/rng.hpp"

#include <cmath>
#include <numbers>

#include "scott/error.hpp"

namespace scott::numerics {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), key_(mix64(seed ^ mix64(stream_id + kGolden))) {}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t c = counter_++;
  return mix64(mix64(key_ + c * kGolden) ^ (key_ >> 17));
}

double RngStream::uniform() {
  // 53 random mantissa bits, shifted off zero by half an ulp.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_index(std::uint64_t bound) {
  if (bound == 0) throw ContractError("uniform_index: bound must be positive");
  // Multiply-shift; bias is below 2^-64 * bound, irrelevant at our sizes.
  const unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) * bound;
  return static_cast<std::uint64_t>(wide >> 64);
}

double RngStream::gaussian() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void RngStream::fill_gaussian(std::span<double> out) {
  for (double& x : out) x = gaussian();
}

Eigen::MatrixXd RngStream::gaussian_matrix(Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  fill_gaussian(std::span<double>(m.data(), static_cast<std::size_t>(m.size())));
  return m;
}

RngStream RngStream::substream(std::uint64_t id) const {
  return RngStream(seed_, mix64(stream_id_ * kGolden + mix64(id + 1)));
}

std::vector<double> gauss_draw(RngStream& rng, std::size_t n) {
  if (n == 0) throw ContractError("gauss_draw: n must be at least 1");
  std::vector<double> out(n);
  rng.fill_gaussian(out);
  return out;
}

}  // namespace scott::numerics
