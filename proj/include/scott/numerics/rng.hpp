#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace scott::numerics {

/// Counter-based random stream.
///
/// Every draw is a pure function of (seed, stream_id, counter), so a stream
/// can be reconstructed anywhere from those three integers and two streams
/// never share state. `uniform()` consumes one counter value and
/// `gaussian()` consumes exactly two (Box-Muller, cosine branch only), which
/// makes batched and one-at-a-time draws produce identical sequences.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Uniform integer in [0, bound). One counter value.
  std::uint64_t uniform_index(std::uint64_t bound);
  double gaussian();

  void fill_gaussian(std::span<double> out);
  /// d x n matrix of standard normals, filled column by column.
  Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols);

  /// Independent child stream keyed by `id`. Does not advance this stream.
  RngStream substream(std::uint64_t id) const;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t counter_ = 0;
  std::uint64_t key_;
};

/// n standard normal draws from `rng`.
std::vector<double> gauss_draw(RngStream& rng, std::size_t n);

}  // namespace scott::numerics
