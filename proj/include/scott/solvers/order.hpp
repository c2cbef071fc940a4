#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "scott/diffusion/mixture.hpp"
#include "scott/solvers/solvers.hpp"

namespace scott::solvers {

/// 1-D mixture data under a schedule: analytic eps, exact marginals at T and
/// at tau.
struct AnalyticProblem {
  diffusion::MixtureSpec data;
  Schedule schedule;

  EpsFn eps() const;
  /// n stratified quantiles of the marginal at T (as a 1 x n matrix).
  Eigen::MatrixXd initial(std::size_t n) const;
  /// n stratified quantiles of the marginal at tau, ascending.
  std::vector<double> reference(std::size_t n) const;
  /// n random draws from the marginal at tau.
  Eigen::MatrixXd exact_endpoint(std::size_t n, RngStream& rng) const;
};

struct OrderEstimate {
  std::vector<std::size_t> step_counts;
  std::vector<double> errors;
  double fitted_order = 0.0;
  double fit_residual = 0.0;   // rms of the log-log fit residuals
  double mc_floor = 0.0;       // W1 of an exact sample of the same size
  bool floor_limited = false;  // smallest error within 2x of the floor
  bool monotone = false;       // errors strictly decrease with step count
};

/// Least-squares fit of log error against log step count.
OrderEstimate fit_order(std::span<const std::size_t> step_counts, std::span<const double> errors,
                        double mc_floor);

/// Endpoint samples (1 x n) produced with the given number of steps.
using EndpointSampler =
    std::function<Eigen::MatrixXd(std::size_t steps, std::size_t n, RngStream& rng)>;

OrderEstimate estimate_order(const EndpointSampler& sampler, std::span<const double> reference,
                             double mc_floor, std::span<const std::size_t> step_counts,
                             RngStream& rng);

/// Solver endpoint error at each step count (uniform grid-snapped sequences),
/// measured as W1 against the exact marginal at tau.
OrderEstimate estimate_order(const AnalyticProblem& problem, const SolverConfig& config,
                             std::span<const std::size_t> step_counts, std::size_t n_traj,
                             RngStream& rng);

}  // namespace scott::solvers
