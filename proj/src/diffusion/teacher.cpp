#include "scott/diffusion/teacher.hpp"

#include <cmath>
#include <numbers>

#include "scott/error.hpp"

namespace scott::diffusion {

void TeacherConfig::validate() const {
  if (hidden_width == 0 || num_layers < 2) throw ConfigError("teacher needs >= 2 layers of width > 0");
  if (batch_size == 0) throw ConfigError("teacher batch size must be positive");
  if (!(label_drop >= 0.0 && label_drop < 1.0)) throw ConfigError("label drop must lie in [0, 1)");
  if (!(ema_rate >= 0.0 && ema_rate < 1.0)) throw ConfigError("teacher EMA rate must lie in [0, 1)");
  if (!(lr_final_fraction > 0.0 && lr_final_fraction <= 1.0)) {
    throw ConfigError("lr_final_fraction must lie in (0, 1]");
  }
  if (log_every == 0) throw ConfigError("log interval must be positive");
}

TeacherResult train_teacher(const TeacherConfig& config, const MixtureSpec& spec,
                            const Schedule& schedule, numerics::RngStream& rng) {
  config.validate();
  ScoreModelSpec model_spec;
  model_spec.data_dim = spec.dim();
  model_spec.time_embedding = config.time_embedding;
  model_spec.fourier_features = config.fourier_features;
  model_spec.num_classes = config.conditional ? spec.size() : 0;
  model_spec.T = schedule.T();

  numerics::RngStream init_rng = rng.substream(0);
  numerics::RngStream data_rng = rng.substream(1);
  numerics::RngStream noise_rng = rng.substream(2);

  TeacherResult result;
  result.model = make_score_model(model_spec, config.hidden_width, config.num_layers,
                                  config.activation, init_rng);
  numerics::AdamState adam =
      numerics::AdamState::for_size(result.model.net.parameter_count(), config.adam);
  const auto online = result.model.net.values();
  numerics::EmaParams ema{std::vector<double>(online.begin(), online.end()), config.ema_rate};

  double interval_sum = 0.0;
  std::size_t interval_count = 0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    if (config.lr_final_fraction < 1.0) {
      const double progress = static_cast<double>(it) / static_cast<double>(config.iterations);
      const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
      adam.config.learning_rate =
          config.adam.learning_rate * (config.lr_final_fraction + (1.0 - config.lr_final_fraction) * w);
    }
    const LabeledSamples data = sample_mixture(spec, config.batch_size, data_rng);
    std::span<const int> labels;
    if (config.conditional) labels = data.labels;
    const DsmBatch batch = draw_dsm_batch(data.x, labels, schedule, noise_rng,
                                          config.conditional ? config.label_drop : 0.0);
    DsmLoss loss = dsm_loss(result.model, batch);
    if (!std::isfinite(loss.loss)) {
      throw NumericError("teacher training diverged at iteration " + std::to_string(it));
    }
    numerics::adam_step(adam, result.model.net.values(), loss.grads.values());
    numerics::ema_update(ema, result.model.net.values());
    interval_sum += loss.loss;
    interval_count += 1;
    if ((it + 1) % config.log_every == 0 || it + 1 == config.iterations) {
      result.curve.push_back({it + 1, interval_sum / static_cast<double>(interval_count)});
      interval_sum = 0.0;
      interval_count = 0;
    }
  }
  result.ema = result.model;
  std::copy(ema.shadow.begin(), ema.shadow.end(), result.ema.net.values().begin());
  return result;
}

DsmFloor evaluate_dsm_floor(const ScoreModel& model, const MixtureSpec& spec,
                            const Schedule& schedule, std::size_t n, numerics::RngStream& rng) {
  numerics::RngStream data_rng = rng.substream(0);
  numerics::RngStream noise_rng = rng.substream(1);
  const LabeledSamples data = sample_mixture(spec, n, data_rng);
  const DsmBatch batch = draw_dsm_batch(data.x, {}, schedule, noise_rng);
  DsmFloor out;
  out.model_loss = dsm_loss_value(model_eps(model, batch.z, batch.t), batch);
  out.analytic_loss = dsm_loss_value(analytic_eps(spec, batch.z, batch.t, schedule), batch);
  return out;
}

}  // namespace scott::diffusion
