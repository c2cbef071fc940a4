#include "scott/diffusion/schedule.hpp"

#include <cmath>
#include <numbers>

#include "scott/error.hpp"

namespace scott::diffusion {

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::cosine:
      return "cosine";
    case ScheduleKind::linear_beta:
      return "linear-beta";
    case ScheduleKind::custom:
      return "custom";
  }
  return "unknown";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "cosine") return ScheduleKind::cosine;
  if (name == "linear-beta") return ScheduleKind::linear_beta;
  throw ConfigError("unknown schedule kind '" + name + "' (expected cosine or linear-beta)");
}

namespace {

void check_range(std::size_t grid_size, double tau, double T) {
  if (grid_size < 8) throw ConfigError("schedule grid needs at least 8 points");
  if (!(tau > 0.0) || !(tau < T) || !std::isfinite(T)) {
    throw ConfigError("schedule requires 0 < tau < T");
  }
}

}  // namespace

Schedule Schedule::make(ScheduleKind kind, std::size_t grid_size, double tau, double T) {
  ScheduleParams p;
  p.kind = kind;
  p.grid_size = grid_size;
  p.tau = tau;
  p.T = T;
  return make(p);
}

Schedule Schedule::make(const ScheduleParams& p) {
  check_range(p.grid_size, p.tau, p.T);
  Schedule s;
  s.params_ = p;
  s.name_ = to_string(p.kind);
  const double T = p.T;
  switch (p.kind) {
    case ScheduleKind::cosine: {
      if (!(p.alpha_bar_min > 0.0 && p.alpha_bar_min < 0.5) || !(p.cosine_offset > 0.0)) {
        throw ConfigError("cosine schedule needs 0 < alpha_bar_min < 0.5 and offset > 0");
      }
      // alpha_bar(t) = cos^2(phi(t)) / cos^2(phi(0)), phi linear in t. The end
      // angle is solved so that alpha_bar(T) = alpha_bar_min exactly.
      const double so = p.cosine_offset;
      const double phi0 = so / (1.0 + so) * std::numbers::pi / 2.0;
      const double c0 = std::cos(phi0);
      const double phi_end = std::acos(std::sqrt(p.alpha_bar_min) * c0);
      const double rate = (phi_end - phi0) / T;
      s.alpha_bar_fn_ = [=](double t) {
        const double c = std::cos(phi0 + rate * t) / c0;
        return c * c;
      };
      s.dlog_alpha_bar_fn_ = [=](double t) { return -2.0 * rate * std::tan(phi0 + rate * t); };
      break;
    }
    case ScheduleKind::linear_beta: {
      if (!(p.beta_min > 0.0) || !(p.beta_max > p.beta_min)) {
        throw ConfigError("linear-beta schedule needs 0 < beta_min < beta_max");
      }
      const double b0 = p.beta_min;
      const double b1 = p.beta_max;
      s.alpha_bar_fn_ = [=](double t) {
        const double u = t / T;
        return std::exp(-T * (b0 * u + 0.5 * (b1 - b0) * u * u));
      };
      s.dlog_alpha_bar_fn_ = [=](double t) { return -(b0 + (b1 - b0) * t / T); };
      break;
    }
    case ScheduleKind::custom:
      throw ConfigError("custom schedules are built with Schedule::from_curve");
  }
  s.build();
  if (s.alpha_bar_.back() > 5e-3) {
    throw ConfigError("schedule terminal alpha_bar " + std::to_string(s.alpha_bar_.back()) +
                      " exceeds 5e-3");
  }
  return s;
}

Schedule Schedule::from_curve(std::string name, Curve alpha_bar, Curve dlog_alpha_bar_dt,
                              std::size_t grid_size, double tau, double T) {
  check_range(grid_size, tau, T);
  Schedule s;
  s.params_.kind = ScheduleKind::custom;
  s.params_.grid_size = grid_size;
  s.params_.tau = tau;
  s.params_.T = T;
  s.name_ = std::move(name);
  s.alpha_bar_fn_ = std::move(alpha_bar);
  s.dlog_alpha_bar_fn_ = std::move(dlog_alpha_bar_dt);
  s.build();
  return s;
}

void Schedule::build() {
  const std::size_t n = params_.grid_size;
  times_.resize(n);
  alpha_bar_.resize(n);
  sigma_.resize(n);
  lambda_.resize(n);
  f_.resize(n);
  g2_.resize(n);
  const double span = params_.T - params_.tau;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = (i + 1 == n) ? params_.T
                                  : params_.tau + span * static_cast<double>(i) /
                                                      static_cast<double>(n - 1);
    const double a = alpha_bar_fn_(t);
    if (!(a > 0.0 && a < 1.0)) {
      throw ConfigError("schedule alpha_bar must lie in (0, 1), got " + std::to_string(a) +
                        " at t=" + std::to_string(t));
    }
    if (i > 0 && !(a < alpha_bar_[i - 1])) {
      throw ConfigError("schedule alpha_bar is not strictly decreasing at t=" + std::to_string(t));
    }
    const double sigma2 = 1.0 - a;
    const double f = 0.5 * dlog_alpha_bar_fn_(t);
    times_[i] = t;
    alpha_bar_[i] = a;
    sigma_[i] = std::sqrt(sigma2);
    lambda_[i] = 0.5 * std::log(a / sigma2);
    f_[i] = f;
    // d sigma^2/dt = -a * dlog(a)/dt = -2 f a
    g2_[i] = -2.0 * f * a - 2.0 * f * sigma2;
    if (g2_[i] < 0.0) throw ConfigError("schedule has negative g^2 at t=" + std::to_string(t));
  }
}

std::size_t Schedule::nearest_index(double t) const {
  if (!(t >= params_.tau - 1e-12 && t <= params_.T + 1e-12)) {
    throw DomainError("time " + std::to_string(t) + " outside [tau, T]");
  }
  const double u = (t - params_.tau) / (params_.T - params_.tau) * static_cast<double>(size() - 1);
  const auto i = static_cast<std::size_t>(std::llround(u));
  return std::min(i, last());
}

std::size_t Schedule::index_of(double t) const {
  const std::size_t i = nearest_index(t);
  if (std::abs(times_[i] - t) > 1e-12 * std::max(1.0, params_.T)) {
    throw DomainError("time " + std::to_string(t) + " is not on the schedule grid");
  }
  return i;
}

double Schedule::sigma_at(double t) const { return std::sqrt(1.0 - alpha_bar_fn_(t)); }

}  // namespace scott::diffusion
