#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "scott/diffusion/schedule.hpp"
#include "scott/numerics/rng.hpp"

namespace scott::diffusion {

struct MixtureComponent {
  Eigen::VectorXd mean;
  double std = 1.0;  // isotropic
  double weight = 1.0;
};

/// Isotropic Gaussian mixture. Weights are validated to sum to one.
class MixtureSpec {
 public:
  MixtureSpec() = default;
  explicit MixtureSpec(std::vector<MixtureComponent> components);

  /// The 1-D three-mode benchmark: means -1.5, 0, 1.5, std 0.2, equal weights.
  static MixtureSpec three_mode();
  /// Single isotropic Gaussian in `dim` dimensions.
  static MixtureSpec gaussian(Eigen::VectorXd mean, double std);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return components_.size(); }
  const std::vector<MixtureComponent>& components() const noexcept { return components_; }
  const MixtureComponent& component(std::size_t i) const { return components_.at(i); }

 private:
  std::vector<MixtureComponent> components_;
  std::size_t dim_ = 0;
};

struct LabeledSamples {
  Eigen::MatrixXd x;        // dim x n
  std::vector<int> labels;  // component index of each column
};

/// n draws. For each sample the component is picked with one uniform, then
/// `dim` standard normals are drawn.
LabeledSamples sample_mixture(const MixtureSpec& spec, std::size_t n, numerics::RngStream& rng);

/// Closed-form noise-prediction oracle, -sigma_t * grad log p_t(z), for the
/// diffused mixture. `t` holds one time per column (or a single time for all).
/// A non-negative label restricts the marginal to that component (the exact
/// class-conditional oracle); -1 means the full mixture.
Eigen::MatrixXd analytic_eps(const MixtureSpec& spec, const Eigen::MatrixXd& z,
                             std::span<const double> t, const Schedule& schedule,
                             std::span<const int> labels = {});

/// log p_t(z) of the diffused mixture, one value per column.
Eigen::VectorXd log_marginal_density(const MixtureSpec& spec, const Eigen::MatrixXd& z,
                                     double t, const Schedule& schedule);

/// Exact marginal at time t: each component becomes
/// N(sqrt(a) mu, (a s^2 + 1 - a) I).
MixtureSpec diffused_marginal(const MixtureSpec& spec, double t, const Schedule& schedule);

/// 1-D only: the n stratified quantiles F^{-1}((i + 1/2) / n) of the
/// mixture, found by bisection on the CDF. A noise-free reference sample.
std::vector<double> mixture_quantiles(const MixtureSpec& spec, std::size_t n);

/// Mixture CDF (1-D).
double mixture_cdf(const MixtureSpec& spec, double x);

}  // namespace scott::diffusion
