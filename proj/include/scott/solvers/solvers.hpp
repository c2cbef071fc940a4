#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scott/diffusion/schedule.hpp"
#include "scott/diffusion/score_model.hpp"
#include "scott/numerics/rng.hpp"

namespace scott::solvers {

using diffusion::EpsFn;
using diffusion::Schedule;
using numerics::RngStream;

enum class SolverFamily { pf_euler, ddim, dpm_sde1 };

std::string to_string(SolverFamily f);
SolverFamily solver_family_from_string(const std::string& name);

/// Which sigma multiplies the injected noise of the first-order DPM-SDE step.
/// `source` uses sigma at the step's start time, `target` at its end time.
enum class DpmNoiseScale { source, target };

std::string to_string(DpmNoiseScale s);
DpmNoiseScale dpm_noise_scale_from_string(const std::string& name);

struct SolverConfig {
  SolverFamily family = SolverFamily::ddim;
  double eta = 0.0;            // ddim noise coefficient
  std::size_t substeps = 1;    // h, sub-intervals per solve
  double dpm_drift_factor = 2.0;
  DpmNoiseScale dpm_noise_scale = DpmNoiseScale::target;

  void validate() const;
  bool stochastic() const;
};

/// Injected-noise scale for a DDIM step from alpha_bar_from (start, noisier)
/// to alpha_bar_to (end), and the coefficient sqrt(1 - alpha_bar_to - sigma^2)
/// of the predicted-noise direction.
struct SigmaEta {
  double sigma = 0.0;
  double direction = 0.0;
};

SigmaEta sigma_eta(double eta, double alpha_bar_from, double alpha_bar_to);
SigmaEta sigma_eta(double eta, std::size_t from, std::size_t to, const Schedule& schedule);

// All step functions take grid indices per column. A span of length one is
// broadcast to every column. Columns whose start and end coincide pass
// through unchanged and consume no noise of their own; a noise matrix for the
// whole batch is drawn (column by column) whenever at least one column
// injects noise.

Eigen::MatrixXd ddim_step(const EpsFn& eps, const Eigen::MatrixXd& z,
                          std::span<const std::size_t> from, std::span<const std::size_t> to,
                          double eta, const Schedule& schedule, RngStream& rng,
                          std::span<const int> labels = {});

Eigen::MatrixXd ddim_step(const EpsFn& eps, const Eigen::MatrixXd& z, std::size_t from,
                          std::size_t to, double eta, const Schedule& schedule, RngStream& rng,
                          std::span<const int> labels = {});

/// First-order DPM-SDE step in the log-SNR variable lambda:
///   z' = sqrt(a_to / a_from) z - k sigma_to (e^h - 1) eps + s sqrt(e^{2h} - 1) xi
/// with h = lambda_to - lambda_from, k the drift factor and s the noise scale
/// selected by the config.
Eigen::MatrixXd dpm_sde1_step(const EpsFn& eps, const Eigen::MatrixXd& z,
                              std::span<const std::size_t> from, std::span<const std::size_t> to,
                              const Schedule& schedule, RngStream& rng,
                              const SolverConfig& config = {}, std::span<const int> labels = {});

Eigen::MatrixXd dpm_sde1_step(const EpsFn& eps, const Eigen::MatrixXd& z, std::size_t from,
                              std::size_t to, const Schedule& schedule, RngStream& rng,
                              const SolverConfig& config = {}, std::span<const int> labels = {});

/// Explicit Euler on the probability-flow ODE
///   dz/dt = f_t z + g_t^2 / (2 sigma_t) eps(z, t).
Eigen::MatrixXd pf_euler_step(const EpsFn& eps, const Eigen::MatrixXd& z,
                              std::span<const std::size_t> from, std::span<const std::size_t> to,
                              const Schedule& schedule, std::span<const int> labels = {});

Eigen::MatrixXd pf_euler_step(const EpsFn& eps, const Eigen::MatrixXd& z, std::size_t from,
                              std::size_t to, const Schedule& schedule,
                              std::span<const int> labels = {});

/// One step of the configured family.
Eigen::MatrixXd solver_step(const EpsFn& eps, const Eigen::MatrixXd& z,
                            std::span<const std::size_t> from, std::span<const std::size_t> to,
                            const SolverConfig& config, const Schedule& schedule, RngStream& rng,
                            std::span<const int> labels = {});

/// Grid indices splitting [to, from] into `substeps` pieces: the nearest
/// grid point to each point of the uniform partition, starting at `from`
/// and ending at `to`.
std::vector<std::size_t> substep_indices(std::size_t from, std::size_t to, std::size_t substeps);

/// Teacher solve from `from` to `to` with `config.substeps` sub-steps.
Eigen::MatrixXd multi_step_solve(const EpsFn& eps, const Eigen::MatrixXd& z,
                                 std::span<const std::size_t> from, std::span<const std::size_t> to,
                                 const SolverConfig& config, const Schedule& schedule,
                                 RngStream& rng, std::span<const int> labels = {});

Eigen::MatrixXd multi_step_solve(const EpsFn& eps, const Eigen::MatrixXd& z, std::size_t from,
                                 std::size_t to, const SolverConfig& config,
                                 const Schedule& schedule, RngStream& rng,
                                 std::span<const int> labels = {});

/// Chains multi-step solves along `sequence`, a strictly decreasing list of
/// grid indices that starts at T and ends at tau (two entries = one step).
Eigen::MatrixXd solve_trajectory(const EpsFn& eps, const Eigen::MatrixXd& z_T,
                                 std::span<const std::size_t> sequence, const SolverConfig& config,
                                 const Schedule& schedule, RngStream& rng,
                                 std::span<const int> labels = {});

/// steps + 1 grid indices from T down to tau, nearest to a uniform partition.
std::vector<std::size_t> uniform_sequence(const Schedule& schedule, std::size_t steps);

/// Ground-truth consistency map: deterministic DDIM (eta = 0) from time t to
/// tau with `fine_steps` uniform sub-steps, evaluated on the continuous
/// schedule curve. `t` holds one time per column or one shared time.
Eigen::MatrixXd consistency_oracle(const EpsFn& eps, const Eigen::MatrixXd& z,
                                   std::span<const double> t, std::size_t fine_steps,
                                   const Schedule& schedule, std::span<const int> labels = {});

}  // namespace scott::solvers
