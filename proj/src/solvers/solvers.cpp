#include "scott/solvers/solvers.hpp"

#include <cmath>

#include "scott/error.hpp"

namespace scott::solvers {

namespace {

struct Pairs {
  std::vector<std::size_t> from, to;
};

Pairs expand(std::span<const std::size_t> from, std::span<const std::size_t> to, Eigen::Index cols,
             const Schedule& schedule) {
  const auto n = static_cast<std::size_t>(cols);
  auto widen = [&](std::span<const std::size_t> s, const char* what) {
    if (s.size() == 1) return std::vector<std::size_t>(n, s[0]);
    if (s.size() != n)
      throw ContractError(std::string("solver step: ") + what + " has " + std::to_string(s.size()) +
                          " entries for " + std::to_string(n) + " columns");
    return std::vector<std::size_t>(s.begin(), s.end());
  };
  Pairs p{widen(from, "from"), widen(to, "to")};
  for (std::size_t j = 0; j < n; ++j) {
    if (p.from[j] >= schedule.size() || p.to[j] >= schedule.size())
      throw DomainError("solver step: grid index out of range");
    if (p.to[j] > p.from[j])
      throw DomainError("solver step: target time " + std::to_string(schedule.time(p.to[j])) +
                        " is later than start time " + std::to_string(schedule.time(p.from[j])));
  }
  return p;
}

std::vector<double> times_of(const std::vector<std::size_t>& idx, const Schedule& schedule) {
  std::vector<double> t(idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) t[j] = schedule.time(idx[j]);
  return t;
}

Eigen::MatrixXd eval_eps(const EpsFn& eps, const Eigen::MatrixXd& z, const std::vector<double>& t,
                         std::span<const int> labels) {
  Eigen::MatrixXd e = eps(z, t, labels);
  if (e.rows() != z.rows() || e.cols() != z.cols())
    throw ContractError("eps function returned a matrix of the wrong shape");
  if (!e.allFinite()) throw NumericError("eps function returned non-finite values");
  return e;
}

void check_finite(const Eigen::MatrixXd& z, const char* who) {
  if (!z.allFinite()) throw NumericError(std::string(who) + ": non-finite state");
}

}  // namespace

std::string to_string(SolverFamily f) {
  switch (f) {
    case SolverFamily::pf_euler: return "pf-euler";
    case SolverFamily::ddim: return "ddim";
    case SolverFamily::dpm_sde1: return "dpm-sde1";
  }
  return "?";
}

SolverFamily solver_family_from_string(const std::string& name) {
  if (name == "pf-euler") return SolverFamily::pf_euler;
  if (name == "ddim") return SolverFamily::ddim;
  if (name == "dpm-sde1") return SolverFamily::dpm_sde1;
  throw ConfigError("unknown solver family '" + name + "' (expected pf-euler, ddim, dpm-sde1)");
}

std::string to_string(DpmNoiseScale s) { return s == DpmNoiseScale::source ? "source" : "target"; }

DpmNoiseScale dpm_noise_scale_from_string(const std::string& name) {
  if (name == "source") return DpmNoiseScale::source;
  if (name == "target") return DpmNoiseScale::target;
  throw ConfigError("unknown dpm noise scale '" + name + "' (expected source or target)");
}

void SolverConfig::validate() const {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("solver.eta must be finite and >= 0");
  if (substeps == 0) throw ConfigError("solver.substeps must be >= 1");
  if (!std::isfinite(dpm_drift_factor)) throw ConfigError("solver.dpm_drift_factor must be finite");
}

bool SolverConfig::stochastic() const {
  switch (family) {
    case SolverFamily::pf_euler: return false;
    case SolverFamily::ddim: return eta > 0.0;
    case SolverFamily::dpm_sde1: return true;
  }
  return false;
}

SigmaEta sigma_eta(double eta, double alpha_bar_from, double alpha_bar_to) {
  if (!(alpha_bar_from > 0.0 && alpha_bar_from < 1.0 && alpha_bar_to > 0.0 && alpha_bar_to < 1.0))
    throw DomainError("sigma_eta: alpha_bar must lie in (0, 1)");
  if (alpha_bar_to < alpha_bar_from)
    throw DomainError("sigma_eta: target alpha_bar is below the start alpha_bar");
  if (eta < 0.0) throw ConfigError("sigma_eta: eta must be >= 0");
  SigmaEta out;
  out.sigma = eta * std::sqrt((1.0 - alpha_bar_to) / (1.0 - alpha_bar_from)) *
              std::sqrt(1.0 - alpha_bar_from / alpha_bar_to);
  const double dir2 = 1.0 - alpha_bar_to - out.sigma * out.sigma;
  if (dir2 < 0.0)
    throw NumericError("sigma_eta: eta = " + std::to_string(eta) +
                       " injects more variance than the target time allows");
  out.direction = std::sqrt(dir2);
  return out;
}

SigmaEta sigma_eta(double eta, std::size_t from, std::size_t to, const Schedule& schedule) {
  return sigma_eta(eta, schedule.alpha_bar(from), schedule.alpha_bar(to));
}

Eigen::MatrixXd ddim_step(const EpsFn& eps, const Eigen::MatrixXd& z,
                          std::span<const std::size_t> from, std::span<const std::size_t> to,
                          double eta, const Schedule& schedule, RngStream& rng,
                          std::span<const int> labels) {
  const Pairs p = expand(from, to, z.cols(), schedule);
  const Eigen::MatrixXd e = eval_eps(eps, z, times_of(p.from, schedule), labels);
  const Eigen::Index n = z.cols();
  std::vector<SigmaEta> coef(static_cast<std::size_t>(n));
  bool noisy = false;
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto u = static_cast<std::size_t>(j);
    if (p.from[u] == p.to[u]) continue;
    coef[u] = sigma_eta(eta, p.from[u], p.to[u], schedule);
    noisy = noisy || coef[u].sigma > 0.0;
  }
  Eigen::MatrixXd xi;
  if (noisy) xi = rng.gaussian_matrix(z.rows(), n);
  Eigen::MatrixXd out = z;
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto u = static_cast<std::size_t>(j);
    if (p.from[u] == p.to[u]) continue;
    const double an = schedule.alpha_bar(p.from[u]);
    const double am = schedule.alpha_bar(p.to[u]);
    const Eigen::VectorXd x0 = (z.col(j) - std::sqrt(1.0 - an) * e.col(j)) / std::sqrt(an);
    out.col(j) = std::sqrt(am) * x0 + coef[u].direction * e.col(j);
    if (coef[u].sigma > 0.0) out.col(j) += coef[u].sigma * xi.col(j);
  }
  check_finite(out, "ddim_step");
  return out;
}

Eigen::MatrixXd ddim_step(const EpsFn& eps, const Eigen::MatrixXd& z, std::size_t from,
                          std::size_t to, double eta, const Schedule& schedule, RngStream& rng,
                          std::span<const int> labels) {
  return ddim_step(eps, z, std::span<const std::size_t>(&from, 1),
                   std::span<const std::size_t>(&to, 1), eta, schedule, rng, labels);
}

Eigen::MatrixXd dpm_sde1_step(const EpsFn& eps, const Eigen::MatrixXd& z,
                              std::span<const std::size_t> from, std::span<const std::size_t> to,
                              const Schedule& schedule, RngStream& rng, const SolverConfig& config,
                              std::span<const int> labels) {
  const Pairs p = expand(from, to, z.cols(), schedule);
  const Eigen::MatrixXd e = eval_eps(eps, z, times_of(p.from, schedule), labels);
  const Eigen::Index n = z.cols();
  bool moving = false;
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto u = static_cast<std::size_t>(j);
    if (p.from[u] == p.to[u]) continue;
    if (!(schedule.lambda(p.to[u]) > schedule.lambda(p.from[u])))
      throw DomainError("dpm_sde1_step: log-SNR must increase along the step");
    moving = true;
  }
  Eigen::MatrixXd xi;
  if (moving) xi = rng.gaussian_matrix(z.rows(), n);
  Eigen::MatrixXd out = z;
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto u = static_cast<std::size_t>(j);
    const std::size_t a = p.from[u], b = p.to[u];
    if (a == b) continue;
    const double h = schedule.lambda(b) - schedule.lambda(a);
    const double scale = std::sqrt(schedule.alpha_bar(b) / schedule.alpha_bar(a));
    const double drift = config.dpm_drift_factor * schedule.sigma(b) * std::expm1(h);
    const double s =
        config.dpm_noise_scale == DpmNoiseScale::source ? schedule.sigma(a) : schedule.sigma(b);
    out.col(j) = scale * z.col(j) - drift * e.col(j) + s * std::sqrt(std::expm1(2.0 * h)) * xi.col(j);
  }
  check_finite(out, "dpm_sde1_step");
  return out;
}

Eigen::MatrixXd dpm_sde1_step(const EpsFn& eps, const Eigen::MatrixXd& z, std::size_t from,
                              std::size_t to, const Schedule& schedule, RngStream& rng,
                              const SolverConfig& config, std::span<const int> labels) {
  return dpm_sde1_step(eps, z, std::span<const std::size_t>(&from, 1),
                       std::span<const std::size_t>(&to, 1), schedule, rng, config, labels);
}

Eigen::MatrixXd pf_euler_step(const EpsFn& eps, const Eigen::MatrixXd& z,
                              std::span<const std::size_t> from, std::span<const std::size_t> to,
                              const Schedule& schedule, std::span<const int> labels) {
  const Pairs p = expand(from, to, z.cols(), schedule);
  const Eigen::MatrixXd e = eval_eps(eps, z, times_of(p.from, schedule), labels);
  Eigen::MatrixXd out = z;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const auto u = static_cast<std::size_t>(j);
    const std::size_t a = p.from[u], b = p.to[u];
    if (a == b) continue;
    const double dt = schedule.time(b) - schedule.time(a);
    const double k = schedule.diffusion_g2(a) / (2.0 * schedule.sigma(a));
    out.col(j) = z.col(j) + dt * (schedule.drift_f(a) * z.col(j) + k * e.col(j));
  }
  check_finite(out, "pf_euler_step");
  return out;
}

Eigen::MatrixXd pf_euler_step(const EpsFn& eps, const Eigen::MatrixXd& z, std::size_t from,
                              std::size_t to, const Schedule& schedule,
                              std::span<const int> labels) {
  return pf_euler_step(eps, z, std::span<const std::size_t>(&from, 1),
                       std::span<const std::size_t>(&to, 1), schedule, labels);
}

Eigen::MatrixXd solver_step(const EpsFn& eps, const Eigen::MatrixXd& z,
                            std::span<const std::size_t> from, std::span<const std::size_t> to,
                            const SolverConfig& config, const Schedule& schedule, RngStream& rng,
                            std::span<const int> labels) {
  switch (config.family) {
    case SolverFamily::pf_euler: return pf_euler_step(eps, z, from, to, schedule, labels);
    case SolverFamily::ddim: return ddim_step(eps, z, from, to, config.eta, schedule, rng, labels);
    case SolverFamily::dpm_sde1:
      return dpm_sde1_step(eps, z, from, to, schedule, rng, config, labels);
  }
  throw ConfigError("unknown solver family");
}

std::vector<std::size_t> substep_indices(std::size_t from, std::size_t to, std::size_t substeps) {
  if (substeps == 0) throw ConfigError("substeps must be >= 1");
  if (to > from) throw DomainError("substep_indices: target index after start index");
  std::vector<std::size_t> idx(substeps + 1);
  const double span = static_cast<double>(from - to);
  for (std::size_t j = 0; j <= substeps; ++j) {
    const double x = static_cast<double>(from) - span * static_cast<double>(j) / static_cast<double>(substeps);
    idx[j] = static_cast<std::size_t>(std::llround(x));
  }
  idx.front() = from;
  idx.back() = to;
  return idx;
}

Eigen::MatrixXd multi_step_solve(const EpsFn& eps, const Eigen::MatrixXd& z,
                                 std::span<const std::size_t> from, std::span<const std::size_t> to,
                                 const SolverConfig& config, const Schedule& schedule,
                                 RngStream& rng, std::span<const int> labels) {
  config.validate();
  const Pairs p = expand(from, to, z.cols(), schedule);
  const std::size_t n = p.from.size();
  const std::size_t h = config.substeps;
  std::vector<std::vector<std::size_t>> parts(n);
  for (std::size_t j = 0; j < n; ++j) parts[j] = substep_indices(p.from[j], p.to[j], h);
  Eigen::MatrixXd cur = z;
  std::vector<std::size_t> a(n), b(n);
  for (std::size_t k = 0; k < h; ++k) {
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      a[j] = parts[j][k];
      b[j] = parts[j][k + 1];
      any = any || a[j] != b[j];
    }
    if (!any) continue;
    cur = solver_step(eps, cur, a, b, config, schedule, rng, labels);
  }
  return cur;
}

Eigen::MatrixXd multi_step_solve(const EpsFn& eps, const Eigen::MatrixXd& z, std::size_t from,
                                 std::size_t to, const SolverConfig& config,
                                 const Schedule& schedule, RngStream& rng,
                                 std::span<const int> labels) {
  return multi_step_solve(eps, z, std::span<const std::size_t>(&from, 1),
                          std::span<const std::size_t>(&to, 1), config, schedule, rng, labels);
}

Eigen::MatrixXd solve_trajectory(const EpsFn& eps, const Eigen::MatrixXd& z_T,
                                 std::span<const std::size_t> sequence, const SolverConfig& config,
                                 const Schedule& schedule, RngStream& rng,
                                 std::span<const int> labels) {
  if (sequence.size() < 2)
    throw ConfigError("solve_trajectory: the time sequence needs at least a start and an end");
  if (sequence.front() != schedule.last() || sequence.back() != 0)
    throw ConfigError("solve_trajectory: the time sequence must run from T to tau");
  for (std::size_t i = 1; i < sequence.size(); ++i)
    if (sequence[i] >= sequence[i - 1])
      throw ConfigError("solve_trajectory: the time sequence must be strictly decreasing");
  Eigen::MatrixXd cur = z_T;
  for (std::size_t i = 1; i < sequence.size(); ++i)
    cur = multi_step_solve(eps, cur, sequence[i - 1], sequence[i], config, schedule, rng, labels);
  return cur;
}

std::vector<std::size_t> uniform_sequence(const Schedule& schedule, std::size_t steps) {
  if (steps == 0) throw ConfigError("uniform_sequence: steps must be >= 1");
  if (steps > schedule.last())
    throw ConfigError("uniform_sequence: more steps than grid intervals");
  return substep_indices(schedule.last(), 0, steps);
}

Eigen::MatrixXd consistency_oracle(const EpsFn& eps, const Eigen::MatrixXd& z,
                                   std::span<const double> t, std::size_t fine_steps,
                                   const Schedule& schedule, std::span<const int> labels) {
  if (fine_steps == 0) throw ConfigError("consistency_oracle: fine_steps must be >= 1");
  const auto n = static_cast<std::size_t>(z.cols());
  if (t.size() != 1 && t.size() != n)
    throw ContractError("consistency_oracle: need one time per column or a single shared time");
  const double tau = schedule.tau();
  std::vector<double> start(n);
  for (std::size_t j = 0; j < n; ++j) {
    start[j] = t.size() == 1 ? t[0] : t[j];
    if (start[j] < tau) throw DomainError("consistency_oracle: time before tau");
    if (start[j] > schedule.T() * (1.0 + 1e-12)) throw DomainError("consistency_oracle: time after T");
  }
  Eigen::MatrixXd cur = z;
  std::vector<double> tn(n), tm(n);
  for (std::size_t k = 0; k < fine_steps; ++k) {
    const double fk = static_cast<double>(k), K = static_cast<double>(fine_steps);
    for (std::size_t j = 0; j < n; ++j) {
      const double span = start[j] - tau;
      tn[j] = tau + span * (1.0 - fk / K);
      tm[j] = k + 1 == fine_steps ? tau : tau + span * (1.0 - (fk + 1.0) / K);
    }
    const Eigen::MatrixXd e = eval_eps(eps, cur, tn, labels);
    for (std::size_t j = 0; j < n; ++j) {
      if (start[j] == tau) continue;
      const auto c = static_cast<Eigen::Index>(j);
      const double an = schedule.alpha_bar_at(tn[j]);
      const double am = schedule.alpha_bar_at(tm[j]);
      const Eigen::VectorXd x0 = (cur.col(c) - std::sqrt(1.0 - an) * e.col(c)) / std::sqrt(an);
      cur.col(c) = std::sqrt(am) * x0 + std::sqrt(1.0 - am) * e.col(c);
    }
  }
  check_finite(cur, "consistency_oracle");
  return cur;
}

}  // namespace scott::solvers
