#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scott/diffusion/mixture.hpp"
#include "scott/diffusion/schedule.hpp"
#include "scott/distill/distill.hpp"
#include "scott/numerics/rng.hpp"
#include "scott/sampling_metrics/metrics.hpp"

namespace scott::sampling {

using diffusion::Schedule;
using numerics::RngStream;

struct SampleBatch {
  Eigen::MatrixXd x;  // d x n
  std::string generator;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
};

/// Multi-step consistency sampling. `sequence` lists grid indices, strictly
/// decreasing, starting at T. The first entry maps pure noise through the
/// student; every further entry re-noises the current estimate to that time
/// and maps it again. A sequence of K entries costs K network evaluations
/// and K Gaussian batch draws.
SampleBatch multistep_consistency_sample(const distill::ConsistencyModel& model,
                                         std::span<const std::size_t> sequence,
                                         const Schedule& schedule, RngStream& rng, std::size_t n);

enum class SequenceSpacing { geometric, uniform };

std::string to_string(SequenceSpacing s);
SequenceSpacing sequence_spacing_from_string(const std::string& name);

/// K grid indices starting at T. Geometric: t_i = T (tau / T)^{i / K};
/// uniform: t_i = T - (T - tau) i / K; i = 0..K-1, each snapped to the
/// nearest grid point. ConfigError if snapping merges two entries.
std::vector<std::size_t> default_sequence(const Schedule& schedule, std::size_t steps,
                                          SequenceSpacing spacing);

struct MetricsReport {
  double w1 = 0.0;
  double coverage = 0.0;
  std::optional<metrics::ModeWeights> modes;  // absent when the spec's modes overlap
  std::size_t n_samples = 0;
  std::size_t n_reference = 0;
  std::size_t steps = 0;
  std::string generator;
};

/// W1 (exact in 1-D, sliced otherwise), coverage of `reference` by `samples`
/// with k-NN radius, and mode weights when the spec's components separate.
MetricsReport eval_report(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& reference,
                          const diffusion::MixtureSpec& spec, std::size_t k, RngStream& rng);

}  // namespace scott::sampling
