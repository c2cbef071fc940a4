#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace scott::numerics {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for one flat parameter buffer.
struct AdamState {
  AdamConfig config;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;

  static AdamState for_size(std::size_t n, AdamConfig config);
};

/// Bias-corrected Adam update in place. A non-finite gradient raises
/// NumericError before anything is modified.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

/// Exponential moving average of a parameter buffer.
struct EmaParams {
  std::vector<double> shadow;
  double rate = 0.995;
};

/// shadow <- rate * shadow + (1 - rate) * online, elementwise.
void ema_update(EmaParams& ema, std::span<const double> online);
void ema_update(std::span<double> shadow, std::span<const double> online, double rate);

}  // namespace scott::numerics
