#include "scott/sampling_metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scott/error.hpp"

namespace scott::metrics {

double w1_1d_sorted(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ContractError("w1_1d: empty sample set");
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(a.begin(), a.end(), finite) || !std::all_of(b.begin(), b.end(), finite))
    throw NumericError("w1_1d: non-finite sample");
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
  }
  // Sweep the merged support, integrating |F_a - F_b| between breakpoints.
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double total = 0.0;
  double prev = std::min(a[0], b[0]);
  while (i < a.size() || j < b.size()) {
    const double x = (j == b.size() || (i < a.size() && a[i] <= b[j])) ? a[i] : b[j];
    total += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (x - prev);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    prev = x;
  }
  return total;
}

double w1_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ContractError("w1_1d: empty sample set");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  return w1_1d_sorted(sa, sb);
}

double sliced_w1(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, std::size_t projections,
                 numerics::RngStream& rng) {
  if (a.rows() != b.rows()) throw ContractError("sliced_w1: dimension mismatch");
  if (a.cols() == 0 || b.cols() == 0) throw ContractError("sliced_w1: empty sample set");
  if (projections == 0) throw ContractError("sliced_w1: need at least one projection");
  double total = 0.0;
  for (std::size_t p = 0; p < projections; ++p) {
    Eigen::VectorXd dir = rng.gaussian_matrix(a.rows(), 1).col(0);
    dir /= dir.norm();
    const Eigen::VectorXd pa = a.transpose() * dir;
    const Eigen::VectorXd pb = b.transpose() * dir;
    total += w1_1d(std::span<const double>(pa.data(), static_cast<std::size_t>(pa.size())),
                   std::span<const double>(pb.data(), static_cast<std::size_t>(pb.size())));
  }
  return total / static_cast<double>(projections);
}

double sample_w1(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, numerics::RngStream& rng) {
  if (a.rows() != b.rows()) throw ContractError("sample_w1: dimension mismatch");
  if (a.rows() == 1)
    return w1_1d(std::span<const double>(a.data(), static_cast<std::size_t>(a.cols())),
                 std::span<const double>(b.data(), static_cast<std::size_t>(b.cols())));
  return sliced_w1(a, b, 64, rng);
}

namespace {

void check_coverage_args(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, std::size_t k) {
  if (real.rows() != fake.rows()) throw ContractError("coverage: dimension mismatch");
  if (k == 0) throw ContractError("coverage: k must be >= 1");
  if (k >= static_cast<std::size_t>(real.cols()))
    throw ContractError("coverage: k = " + std::to_string(k) + " needs more than k real points (got " +
                        std::to_string(real.cols()) + ")");
  if (fake.cols() == 0) throw ContractError("coverage: empty fake set");
}

double coverage_1d(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, std::size_t k) {
  const auto n = static_cast<std::size_t>(real.cols());
  std::vector<double> r(real.data(), real.data() + n);
  std::vector<double> f(fake.data(), fake.data() + fake.cols());
  std::sort(r.begin(), r.end());
  std::sort(f.begin(), f.end());
  std::size_t covered = 0;
  for (std::size_t i = 0; i < n; ++i) {
    // k-th nearest other point: merge outward from i on both sides.
    std::size_t lo = i, hi = i;
    double radius = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double dl = lo > 0 ? r[i] - r[lo - 1] : std::numeric_limits<double>::infinity();
      const double dh = hi + 1 < n ? r[hi + 1] - r[i] : std::numeric_limits<double>::infinity();
      if (dl <= dh) {
        radius = dl;
        --lo;
      } else {
        radius = dh;
        ++hi;
      }
    }
    const auto it = std::lower_bound(f.begin(), f.end(), r[i]);
    double best = std::numeric_limits<double>::infinity();
    if (it != f.end()) best = *it - r[i];
    if (it != f.begin()) best = std::min(best, r[i] - *std::prev(it));
    if (best <= radius) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(n);
}

}  // namespace

double coverage_brute_force(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake,
                            std::size_t k) {
  check_coverage_args(real, fake, k);
  const Eigen::Index n = real.cols();
  std::size_t covered = 0;
  std::vector<double> d;
  for (Eigen::Index i = 0; i < n; ++i) {
    d.clear();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) d.push_back((real.col(i) - real.col(j)).norm());
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
    const double radius = d[k - 1];
    for (Eigen::Index j = 0; j < fake.cols(); ++j) {
      if ((real.col(i) - fake.col(j)).norm() <= radius) {
        ++covered;
        break;
      }
    }
  }
  return static_cast<double>(covered) / static_cast<double>(n);
}

double coverage(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, std::size_t k) {
  check_coverage_args(real, fake, k);
  if (real.rows() == 1) return coverage_1d(real, fake, k);
  return coverage_brute_force(real, fake, k);
}

ModeWeights mode_weights(const Eigen::MatrixXd& samples, const diffusion::MixtureSpec& spec) {
  if (samples.cols() == 0) throw ContractError("mode_weights: empty sample set");
  if (static_cast<std::size_t>(samples.rows()) != spec.dim())
    throw ContractError("mode_weights: dimension mismatch");
  const std::size_t K = spec.size();
  double max_std = 0.0, min_sep = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < K; ++a) {
    max_std = std::max(max_std, spec.component(a).std);
    for (std::size_t b = a + 1; b < K; ++b)
      min_sep = std::min(min_sep, (spec.component(a).mean - spec.component(b).mean).norm());
  }
  if (K > 1 && !(min_sep > 4.0 * max_std))
    throw DomainError("mode_weights: components overlap (min mean distance " + std::to_string(min_sep) +
                      " <= 4 x max std " + std::to_string(max_std) + "), assignment undefined");
  ModeWeights out;
  out.fractions.assign(K, 0.0);
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < K; ++c) {
      const double d = (samples.col(j) - spec.component(c).mean).squaredNorm();
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
    out.fractions[best] += 1.0;
  }
  for (std::size_t c = 0; c < K; ++c) {
    out.fractions[c] /= static_cast<double>(samples.cols());
    out.max_error = std::max(out.max_error, std::abs(out.fractions[c] - spec.component(c).weight));
  }
  return out;
}

}  // namespace scott::metrics
