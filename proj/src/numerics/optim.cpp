#include "scott/numerics/optim.hpp"

#include <cmath>
#include <string>

#include "scott/error.hpp"

namespace scott::numerics {

AdamState AdamState::for_size(std::size_t n, AdamConfig config) {
  if (!(config.learning_rate > 0.0) || !(config.beta1 >= 0.0 && config.beta1 < 1.0) ||
      !(config.beta2 >= 0.0 && config.beta2 < 1.0) || !(config.epsilon > 0.0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
  return AdamState{config, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0};
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.first_moment.size() != n || state.second_moment.size() != n) {
    throw ContractError("adam_step: parameter, gradient and moment sizes differ");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
  }
  const AdamConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < n; ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * grads[i];
    v = c.beta2 * v + (1.0 - c.beta2) * grads[i] * grads[i];
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

void ema_update(std::span<double> shadow, std::span<const double> online, double rate) {
  if (shadow.size() != online.size()) {
    throw ContractError("ema_update: shadow has " + std::to_string(shadow.size()) +
                        " values, online has " + std::to_string(online.size()));
  }
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("EMA rate must lie in [0, 1]");
  if (rate == 1.0) return;
  // Written as a step toward the online value so that shadow == online is
  // an exact fixed point.
  const double take = 1.0 - rate;
  for (std::size_t i = 0; i < online.size(); ++i) {
    shadow[i] += take * (online[i] - shadow[i]);
  }
}

void ema_update(EmaParams& ema, std::span<const double> online) {
  ema_update(ema.shadow, online, ema.rate);
}

}  // namespace scott::numerics
