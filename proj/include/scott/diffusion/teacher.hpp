#pragma once

#include <cstddef>
#include <vector>

#include "scott/diffusion/mixture.hpp"
#include "scott/diffusion/schedule.hpp"
#include "scott/diffusion/score_model.hpp"
#include "scott/numerics/optim.hpp"
#include "scott/numerics/rng.hpp"

namespace scott::diffusion {

struct TeacherConfig {
  std::size_t hidden_width = 64;
  std::size_t num_layers = 4;  // linear layers
  numerics::Activation activation = numerics::Activation::tanh;
  TimeEmbedding time_embedding = TimeEmbedding::scalar;
  std::size_t fourier_features = 0;
  bool conditional = false;
  double label_drop = 0.1;
  std::size_t iterations = 20000;
  std::size_t batch_size = 256;
  numerics::AdamConfig adam{};
  /// Final learning rate as a fraction of the initial one (cosine decay);
  /// 1 keeps the rate constant.
  double lr_final_fraction = 1.0;
  double ema_rate = 0.999;
  std::size_t log_every = 500;

  void validate() const;
};

/// Mean training loss over one logging interval ending at `iteration`.
struct LossRecord {
  std::size_t iteration = 0;
  double loss = 0.0;
};

struct TeacherResult {
  ScoreModel model;  // online weights
  ScoreModel ema;    // EMA weights, the ones used downstream
  std::vector<LossRecord> curve;
};

/// Denoising score matching on samples of `spec`. Substream 0 initializes
/// the network, 1 draws data, 2 draws times and noise.
TeacherResult train_teacher(const TeacherConfig& config, const MixtureSpec& spec,
                            const Schedule& schedule, numerics::RngStream& rng);

/// Paired evaluation of the DSM objective on `n` fresh draws: the model's
/// loss and the loss of the exact oracle on identical (x0, t, eps).
struct DsmFloor {
  double model_loss = 0.0;
  double analytic_loss = 0.0;
};

DsmFloor evaluate_dsm_floor(const ScoreModel& model, const MixtureSpec& spec,
                            const Schedule& schedule, std::size_t n, numerics::RngStream& rng);

}  // namespace scott::diffusion
