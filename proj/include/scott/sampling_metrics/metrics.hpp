#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "scott/diffusion/mixture.hpp"
#include "scott/numerics/rng.hpp"

namespace scott::metrics {

/// Wasserstein-1 distance between two 1-D empirical measures. For equal
/// sizes this is the mean absolute difference of the sorted samples; for
/// unequal sizes the integral of |F_a - F_b| is evaluated exactly.
double w1_1d(std::span<const double> a, std::span<const double> b);

/// Same, for inputs already sorted ascending (no copy, no sort).
double w1_1d_sorted(std::span<const double> a, std::span<const double> b);

/// Sliced W1: mean of 1-D W1 over `projections` random unit directions.
double sliced_w1(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, std::size_t projections,
                 numerics::RngStream& rng);

/// W1 between two d x n sample sets: exact 1-D W1 when d == 1, sliced W1
/// with 64 projections otherwise.
double sample_w1(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, numerics::RngStream& rng);

/// Fraction of real points whose k-NN ball (k-th nearest other real point,
/// closed ball) contains at least one fake point. Columns are points.
double coverage(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, std::size_t k);

/// Straightforward O(n^2) evaluation of the same quantity, kept for
/// cross-checking the fast paths.
double coverage_brute_force(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake,
                            std::size_t k);

struct ModeWeights {
  std::vector<double> fractions;
  double max_error = 0.0;
};

/// Nearest-mean assignment of samples to mixture components.
ModeWeights mode_weights(const Eigen::MatrixXd& samples, const diffusion::MixtureSpec& spec);

}  // namespace scott::metrics
