#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace scott::diffusion {

enum class ScheduleKind { cosine, linear_beta, custom };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

struct ScheduleParams {
  ScheduleKind kind = ScheduleKind::cosine;
  std::size_t grid_size = 64;
  double tau = 0.002;
  double T = 1.0;
  // cosine: the angle range is truncated so that alpha_bar(T) hits this value
  double alpha_bar_min = 1e-4;
  double cosine_offset = 0.008;
  // linear-beta: beta(t) = beta_min + (beta_max - beta_min) t / T
  double beta_min = 0.1;
  double beta_max = 20.0;
};

/// Variance-preserving noise schedule on a uniform time grid.
///
/// Grid point i sits at t_i = tau + (T - tau) i / (N - 1), so index 0 is the
/// boundary time and index N - 1 is T. With a = alpha_bar(t) and
/// sigma^2 = 1 - a:
///   lambda = log(sqrt(a) / sigma)
///   f      = d log sqrt(a) / dt
///   g^2    = d sigma^2 / dt - 2 f sigma^2   (= -2 f for VP schedules)
/// The closed-form alpha_bar is kept so that off-grid evaluations (the
/// fine-grid consistency oracle) use the same curve.
class Schedule {
 public:
  using Curve = std::function<double(double)>;

  static Schedule make(const ScheduleParams& params);
  static Schedule make(ScheduleKind kind, std::size_t grid_size, double tau, double T);

  /// Schedule from a user-supplied curve. `dlog_alpha_bar_dt` must be the
  /// exact derivative of log alpha_bar. Used for synthetic test problems.
  static Schedule from_curve(std::string name, Curve alpha_bar, Curve dlog_alpha_bar_dt,
                             std::size_t grid_size, double tau, double T);

  const ScheduleParams& params() const noexcept { return params_; }
  const std::string& name() const noexcept { return name_; }
  std::size_t size() const noexcept { return times_.size(); }
  std::size_t last() const noexcept { return times_.size() - 1; }
  double tau() const noexcept { return params_.tau; }
  double T() const noexcept { return params_.T; }

  double time(std::size_t i) const { return times_.at(i); }
  double alpha_bar(std::size_t i) const { return alpha_bar_.at(i); }
  double sigma(std::size_t i) const { return sigma_.at(i); }
  double lambda(std::size_t i) const { return lambda_.at(i); }
  double drift_f(std::size_t i) const { return f_.at(i); }
  double diffusion_g2(std::size_t i) const { return g2_.at(i); }

  /// Grid index of `t`; DomainError if t is not a grid point.
  std::size_t index_of(double t) const;
  /// Nearest grid index to an arbitrary time in [tau, T].
  std::size_t nearest_index(double t) const;

  double alpha_bar_at(double t) const { return alpha_bar_fn_(t); }
  double sigma_at(double t) const;

 private:
  Schedule() = default;
  void build();

  ScheduleParams params_;
  std::string name_;
  Curve alpha_bar_fn_;
  Curve dlog_alpha_bar_fn_;
  std::vector<double> times_, alpha_bar_, sigma_, lambda_, f_, g2_;
};

}  // namespace scott::diffusion
