#include "scott/sampling_metrics/sampling.hpp"

#include <cmath>

#include "scott/error.hpp"

namespace scott::sampling {

SampleBatch multistep_consistency_sample(const distill::ConsistencyModel& model,
                                         std::span<const std::size_t> sequence,
                                         const Schedule& schedule, RngStream& rng, std::size_t n) {
  if (n == 0) throw ContractError("sampling: n must be >= 1");
  if (sequence.empty() || sequence.front() != schedule.last())
    throw ContractError("sampling: the time sequence must start at T");
  for (std::size_t i = 1; i < sequence.size(); ++i)
    if (sequence[i] >= sequence[i - 1])
      throw ContractError("sampling: the time sequence must be strictly decreasing");
  const auto d = static_cast<Eigen::Index>(model.online.spec.data_dim);
  const auto cols = static_cast<Eigen::Index>(n);
  SampleBatch out;
  out.generator = "consistency";
  out.steps = sequence.size();
  out.seed = rng.seed();
  const double T = schedule.time(sequence.front());
  Eigen::MatrixXd z = consistency_eval(model, rng.gaussian_matrix(d, cols), {&T, 1});
  for (std::size_t i = 1; i < sequence.size(); ++i) {
    const std::size_t idx = sequence[i];
    const double t = schedule.time(idx);
    const Eigen::MatrixXd noisy =
        std::sqrt(schedule.alpha_bar(idx)) * z + schedule.sigma(idx) * rng.gaussian_matrix(d, cols);
    z = consistency_eval(model, noisy, {&t, 1});
  }
  if (!z.allFinite()) throw NumericError("sampling: non-finite sample");
  out.x = std::move(z);
  return out;
}

std::string to_string(SequenceSpacing s) {
  return s == SequenceSpacing::geometric ? "geometric" : "uniform";
}

SequenceSpacing sequence_spacing_from_string(const std::string& name) {
  if (name == "geometric") return SequenceSpacing::geometric;
  if (name == "uniform") return SequenceSpacing::uniform;
  throw ConfigError("unknown sequence spacing '" + name + "' (expected geometric or uniform)");
}

std::vector<std::size_t> default_sequence(const Schedule& schedule, std::size_t steps,
                                          SequenceSpacing spacing) {
  if (steps == 0) throw ConfigError("sampling: steps must be >= 1");
  const double T = schedule.T(), tau = schedule.tau();
  std::vector<std::size_t> seq;
  for (std::size_t i = 0; i < steps; ++i) {
    const double f = static_cast<double>(i) / static_cast<double>(steps);
    const double t = spacing == SequenceSpacing::geometric ? T * std::pow(tau / T, f)
                                                           : T - (T - tau) * f;
    const std::size_t idx = i == 0 ? schedule.last() : schedule.nearest_index(t);
    if (!seq.empty() && idx >= seq.back())
      throw ConfigError("sampling: " + std::to_string(steps) +
                        " steps do not fit on the grid with distinct times");
    seq.push_back(idx);
  }
  return seq;
}

MetricsReport eval_report(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& reference,
                          const diffusion::MixtureSpec& spec, std::size_t k, RngStream& rng) {
  if (samples.cols() == 0 || reference.cols() == 0) throw ContractError("eval_report: empty sample set");
  if (samples.rows() != reference.rows() || static_cast<std::size_t>(samples.rows()) != spec.dim())
    throw ContractError("eval_report: dimension mismatch");
  MetricsReport r;
  r.w1 = metrics::sample_w1(samples, reference, rng);
  r.coverage = metrics::coverage(reference, samples, k);
  try {
    r.modes = metrics::mode_weights(samples, spec);
  } catch (const DomainError&) {
    r.modes.reset();
  }
  r.n_samples = static_cast<std::size_t>(samples.cols());
  r.n_reference = static_cast<std::size_t>(reference.cols());
  return r;
}

}  // namespace scott::sampling
