#include "scott/diffusion/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "scott/error.hpp"

namespace scott::diffusion {

MixtureSpec::MixtureSpec(std::vector<MixtureComponent> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw ConfigError("mixture needs at least one component");
  dim_ = static_cast<std::size_t>(components_.front().mean.size());
  if (dim_ == 0) throw ConfigError("mixture dimension must be positive");
  double total = 0.0;
  for (const auto& c : components_) {
    if (static_cast<std::size_t>(c.mean.size()) != dim_) {
      throw ConfigError("mixture component means have different dimensions");
    }
    if (!(c.std > 0.0) || !std::isfinite(c.std)) throw ConfigError("mixture std must be positive");
    if (!(c.weight > 0.0)) throw ConfigError("mixture weights must be positive");
    if (!c.mean.allFinite()) throw ConfigError("mixture means must be finite");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("mixture weights sum to " + std::to_string(total) + ", expected 1");
  }
}

MixtureSpec MixtureSpec::three_mode() {
  std::vector<MixtureComponent> c;
  for (double m : {-1.5, 0.0, 1.5}) {
    c.push_back({Eigen::VectorXd::Constant(1, m), 0.2, 1.0 / 3.0});
  }
  return MixtureSpec(std::move(c));
}

MixtureSpec MixtureSpec::gaussian(Eigen::VectorXd mean, double std) {
  return MixtureSpec({MixtureComponent{std::move(mean), std, 1.0}});
}

LabeledSamples sample_mixture(const MixtureSpec& spec, std::size_t n, numerics::RngStream& rng) {
  if (n == 0) throw ContractError("sample_mixture: n must be at least 1");
  const auto d = static_cast<Eigen::Index>(spec.dim());
  LabeledSamples out{Eigen::MatrixXd(d, static_cast<Eigen::Index>(n)), std::vector<int>(n)};
  for (std::size_t j = 0; j < n; ++j) {
    const double u = rng.uniform();
    std::size_t k = 0;
    double acc = spec.component(0).weight;
    while (u >= acc && k + 1 < spec.size()) acc += spec.component(++k).weight;
    const auto& comp = spec.component(k);
    for (Eigen::Index r = 0; r < d; ++r) {
      out.x(r, static_cast<Eigen::Index>(j)) = comp.mean(r) + comp.std * rng.gaussian();
    }
    out.labels[j] = static_cast<int>(k);
  }
  return out;
}

MixtureSpec diffused_marginal(const MixtureSpec& spec, double t, const Schedule& schedule) {
  const double a = schedule.alpha_bar_at(t);
  const double root = std::sqrt(a);
  std::vector<MixtureComponent> comps;
  for (const auto& c : spec.components()) {
    comps.push_back({root * c.mean, std::sqrt(a * c.std * c.std + (1.0 - a)), c.weight});
  }
  return MixtureSpec(std::move(comps));
}

namespace {

// Per-component log N(z; root*mu, v I) + log w, for one column.
void component_log_terms(const MixtureSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& z,
                         double a, std::vector<double>& logs, std::vector<double>& vars) {
  const double root = std::sqrt(a);
  const double d = static_cast<double>(spec.dim());
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const auto& c = spec.component(k);
    const double v = a * c.std * c.std + (1.0 - a);
    const double sq = (z - root * c.mean).squaredNorm();
    vars[k] = v;
    logs[k] = std::log(c.weight) - 0.5 * sq / v - 0.5 * d * std::log(2.0 * std::numbers::pi * v);
  }
}

}  // namespace

Eigen::MatrixXd analytic_eps(const MixtureSpec& spec, const Eigen::MatrixXd& z,
                             std::span<const double> t, const Schedule& schedule,
                             std::span<const int> labels) {
  const Eigen::Index n = z.cols();
  if (static_cast<std::size_t>(z.rows()) != spec.dim()) {
    throw ContractError("analytic_eps: z has the wrong dimension");
  }
  if (t.size() != 1 && t.size() != static_cast<std::size_t>(n)) {
    throw ContractError("analytic_eps: need one time or one time per column");
  }
  if (!labels.empty() && labels.size() != static_cast<std::size_t>(n)) {
    throw ContractError("analytic_eps: need one label per column");
  }
  Eigen::MatrixXd eps(z.rows(), n);
  std::vector<double> logs(spec.size()), vars(spec.size());
  double cached_t = std::numeric_limits<double>::quiet_NaN();
  double a = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double tj = t.size() == 1 ? t[0] : t[static_cast<std::size_t>(j)];
    if (tj != cached_t) {
      cached_t = tj;
      a = schedule.alpha_bar_at(tj);
    }
    const double root = std::sqrt(a);
    const double sigma = std::sqrt(1.0 - a);
    const auto zj = z.col(j);
    const int label = labels.empty() ? -1 : labels[static_cast<std::size_t>(j)];
    Eigen::VectorXd score = Eigen::VectorXd::Zero(z.rows());
    if (label >= 0) {
      const auto& c = spec.component(static_cast<std::size_t>(label));
      const double v = a * c.std * c.std + (1.0 - a);
      score = -(zj - root * c.mean) / v;
    } else {
      component_log_terms(spec, zj, a, logs, vars);
      const double top = *std::max_element(logs.begin(), logs.end());
      double norm = 0.0;
      for (double& l : logs) {
        l = std::exp(l - top);
        norm += l;
      }
      for (std::size_t k = 0; k < spec.size(); ++k) {
        const double r = logs[k] / norm;
        score -= r * (zj - root * spec.component(k).mean) / vars[k];
      }
    }
    eps.col(j) = -sigma * score;
  }
  return eps;
}

Eigen::VectorXd log_marginal_density(const MixtureSpec& spec, const Eigen::MatrixXd& z, double t,
                                     const Schedule& schedule) {
  const double a = schedule.alpha_bar_at(t);
  Eigen::VectorXd out(z.cols());
  std::vector<double> logs(spec.size()), vars(spec.size());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    component_log_terms(spec, z.col(j), a, logs, vars);
    const double top = *std::max_element(logs.begin(), logs.end());
    double acc = 0.0;
    for (double l : logs) acc += std::exp(l - top);
    out(j) = top + std::log(acc);
  }
  return out;
}

double mixture_cdf(const MixtureSpec& spec, double x) {
  if (spec.dim() != 1) throw ContractError("mixture_cdf is defined for 1-D mixtures only");
  double acc = 0.0;
  for (const auto& c : spec.components()) {
    acc += c.weight * 0.5 * std::erfc(-(x - c.mean(0)) / (c.std * std::numbers::sqrt2));
  }
  return acc;
}

std::vector<double> mixture_quantiles(const MixtureSpec& spec, std::size_t n) {
  if (spec.dim() != 1) throw ContractError("mixture_quantiles is defined for 1-D mixtures only");
  if (n == 0) throw ContractError("mixture_quantiles: n must be at least 1");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& c : spec.components()) {
    lo = std::min(lo, c.mean(0) - 12.0 * c.std);
    hi = std::max(hi, c.mean(0) + 12.0 * c.std);
  }
  std::vector<double> q(n);
  double left = lo;
  for (std::size_t i = 0; i < n; ++i) {
    const double target = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    double a = left;
    double b = hi;
    for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, std::abs(a)); ++it) {
      const double mid = 0.5 * (a + b);
      if (mixture_cdf(spec, mid) < target) a = mid; else b = mid;
    }
    q[i] = 0.5 * (a + b);
    left = a;
  }
  return q;
}

}  // namespace scott::diffusion
