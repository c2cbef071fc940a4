#include "scott/solvers/order.hpp"

#include <algorithm>
#include <cmath>

#include "scott/error.hpp"
#include "scott/sampling_metrics/metrics.hpp"

namespace scott::solvers {

EpsFn AnalyticProblem::eps() const { return diffusion::analytic_eps_fn(data, schedule); }

Eigen::MatrixXd AnalyticProblem::initial(std::size_t n) const {
  const auto q = diffusion::mixture_quantiles(
      diffusion::diffused_marginal(data, schedule.T(), schedule), n);
  Eigen::MatrixXd z(1, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) z(0, static_cast<Eigen::Index>(i)) = q[i];
  return z;
}

std::vector<double> AnalyticProblem::reference(std::size_t n) const {
  return diffusion::mixture_quantiles(diffusion::diffused_marginal(data, schedule.tau(), schedule),
                                      n);
}

Eigen::MatrixXd AnalyticProblem::exact_endpoint(std::size_t n, RngStream& rng) const {
  return diffusion::sample_mixture(diffusion::diffused_marginal(data, schedule.tau(), schedule), n,
                                   rng)
      .x;
}

OrderEstimate fit_order(std::span<const std::size_t> step_counts, std::span<const double> errors,
                        double mc_floor) {
  if (step_counts.size() != errors.size()) throw ContractError("fit_order: length mismatch");
  if (step_counts.size() < 2) throw ContractError("fit_order: need at least two points");
  OrderEstimate out;
  out.step_counts.assign(step_counts.begin(), step_counts.end());
  out.errors.assign(errors.begin(), errors.end());
  out.mc_floor = mc_floor;
  const auto n = static_cast<double>(errors.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!(errors[i] > 0.0) || !std::isfinite(errors[i]))
      throw NumericError("fit_order: error at " + std::to_string(step_counts[i]) +
                         " steps is not a positive finite number");
    const double x = std::log(static_cast<double>(step_counts[i]));
    const double y = std::log(errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = n * sxx - sx * sx;
  if (den <= 0.0) throw ContractError("fit_order: step counts must not all be equal");
  const double slope = (n * sxy - sx * sy) / den;
  const double icpt = (sy - slope * sx) / n;
  double ss = 0.0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    const double r = std::log(errors[i]) - (icpt + slope * std::log(static_cast<double>(step_counts[i])));
    ss += r * r;
  }
  out.fitted_order = -slope;
  out.fit_residual = std::sqrt(ss / n);
  out.floor_limited = *std::min_element(errors.begin(), errors.end()) <= 2.0 * mc_floor;
  out.monotone = true;
  for (std::size_t i = 1; i < errors.size(); ++i)
    if (step_counts[i] > step_counts[i - 1] ? !(errors[i] < errors[i - 1]) : !(errors[i] > errors[i - 1]))
      out.monotone = false;
  return out;
}

namespace {

void check_counts(std::span<const std::size_t> counts) {
  if (counts.size() < 3) throw ConfigError("estimate_order: need at least 3 step counts");
  for (std::size_t c : counts)
    if (c < 4) throw ConfigError("estimate_order: step counts must be >= 4");
}

}  // namespace

OrderEstimate estimate_order(const EndpointSampler& sampler, std::span<const double> reference,
                             double mc_floor, std::span<const std::size_t> step_counts,
                             RngStream& rng) {
  check_counts(step_counts);
  if (reference.empty()) throw ContractError("estimate_order: empty reference");
  std::vector<double> ref(reference.begin(), reference.end());
  std::sort(ref.begin(), ref.end());
  std::vector<double> errors;
  for (std::size_t c : step_counts) {
    RngStream r = rng.substream(c);
    const Eigen::MatrixXd x = sampler(c, ref.size(), r);
    if (x.rows() != 1) throw ContractError("estimate_order: endpoint samples must be 1-D");
    std::vector<double> v(x.data(), x.data() + x.cols());
    std::sort(v.begin(), v.end());
    errors.push_back(metrics::w1_1d_sorted(v, ref));
  }
  return fit_order(step_counts, errors, mc_floor);
}

OrderEstimate estimate_order(const AnalyticProblem& problem, const SolverConfig& config,
                             std::span<const std::size_t> step_counts, std::size_t n_traj,
                             RngStream& rng) {
  config.validate();
  if (problem.data.dim() != 1) throw ContractError("estimate_order: 1-D problems only");
  if (n_traj == 0) throw ContractError("estimate_order: n_traj must be >= 1");
  const std::vector<double> ref = problem.reference(n_traj);
  RngStream floor_rng = rng.substream(0);
  const Eigen::MatrixXd exact = problem.exact_endpoint(n_traj, floor_rng);
  const double floor = metrics::w1_1d(std::span<const double>(exact.data(), n_traj), ref);
  const EpsFn eps = problem.eps();
  const Eigen::MatrixXd z_T = problem.initial(n_traj);
  EndpointSampler sampler = [&](std::size_t steps, std::size_t, RngStream& r) {
    const auto seq = uniform_sequence(problem.schedule, steps);
    return solve_trajectory(eps, z_T, seq, config, problem.schedule, r);
  };
  return estimate_order(sampler, ref, floor, step_counts, rng);
}

}  // namespace scott::solvers
