#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scott/diffusion/score_model.hpp"
#include "scott/distill/distill.hpp"
#include "scott/numerics/optim.hpp"
#include "scott/numerics/rng.hpp"

namespace scott::adversarial {

using numerics::RngStream;

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Discriminator on (z, t, c): frozen encoder layers copied from the teacher,
/// decoder layers whose teacher weights W are frozen and adapted as
/// W + scale * B * A, and a fresh scalar head. All hidden layers use the
/// teacher's activation. The trainable parameters (every A, every B, then
/// head weight and head bias) live in one flat buffer.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(diffusion::ScoreModelSpec spec, numerics::Activation activation,
                std::vector<DenseLayer> encoder, std::vector<DenseLayer> decoder,
                std::size_t rank, double scale);

  const diffusion::ScoreModelSpec& spec() const noexcept { return spec_; }
  numerics::Activation activation() const noexcept { return activation_; }
  const std::vector<DenseLayer>& encoder() const noexcept { return encoder_; }
  const std::vector<DenseLayer>& decoder() const noexcept { return decoder_; }
  std::size_t rank() const noexcept { return rank_; }
  double scale() const noexcept { return scale_; }
  std::size_t width() const;

  Eigen::Map<Eigen::MatrixXd> adapter_a(std::size_t i);  // rank x in
  Eigen::Map<const Eigen::MatrixXd> adapter_a(std::size_t i) const;
  Eigen::Map<Eigen::MatrixXd> adapter_b(std::size_t i);  // out x rank
  Eigen::Map<const Eigen::MatrixXd> adapter_b(std::size_t i) const;
  Eigen::Map<Eigen::VectorXd> head_weight();
  Eigen::Map<const Eigen::VectorXd> head_weight() const;
  double& head_bias() { return trainable_.back(); }
  double head_bias() const { return trainable_.back(); }

  std::span<double> trainable() noexcept { return trainable_; }
  std::span<const double> trainable() const noexcept { return trainable_; }
  std::size_t trainable_count() const noexcept { return trainable_.size(); }
  std::size_t frozen_count() const;
  double trainable_fraction() const;

  /// Effective decoder weight W + scale * B * A.
  Eigen::MatrixXd effective_weight(std::size_t i) const;

  friend bool operator==(const Discriminator&, const Discriminator&) = default;

 private:
  diffusion::ScoreModelSpec spec_;
  numerics::Activation activation_ = numerics::Activation::tanh;
  std::vector<DenseLayer> encoder_, decoder_;
  std::size_t rank_ = 0;
  double scale_ = 1.0;
  std::vector<std::size_t> offsets_;  // A_i at offsets_[2i], B_i at offsets_[2i+1]
  numerics::AlignedBuffer trainable_;
};

/// Encoder = first ceil(L/2) teacher layers, decoder = the remaining hidden
/// layers (the teacher's output layer is dropped). A = 0, B and the head
/// drawn uniform in +-sqrt(1/fan_in), head bias 0.
Discriminator disc_init_from_teacher(const diffusion::ScoreModel& teacher, std::size_t rank,
                                     RngStream& rng, double scale = 1.0);

struct DiscForward {
  Eigen::VectorXd logits;
  std::vector<Eigen::MatrixXd> activations;  // input, then every hidden layer
};

/// One logit per column. `t` per column or shared; `labels` empty or per
/// column. NumericError on non-finite logits.
DiscForward disc_forward(const Discriminator& d, const Eigen::MatrixXd& z,
                         std::span<const double> t, std::span<const int> labels = {});

struct DiscGradient {
  std::vector<double> trainable;  // same layout as Discriminator::trainable()
  Eigen::MatrixXd z;               // cotangent with respect to the z block of the input
};

DiscGradient disc_backward(const Discriminator& d, const DiscForward& forward,
                           const Eigen::VectorXd& logit_cotangent);

struct HingeValues {
  double discriminator = 0.0;  // L_D
  double generator = 0.0;      // L_G
};

/// L_D = mean max(0, 1 - real) + mean max(0, 1 + fake), L_G = -mean fake.
HingeValues hinge_values(std::span<const double> real_logits, std::span<const double> fake_logits);

struct HingeLosses {
  HingeValues values;
  std::vector<double> disc_grads;   // d L_D / d phi
  Eigen::MatrixXd fake_cotangent;   // d L_G / d fake
  Eigen::VectorXd real_logits, fake_logits;
};

/// Fakes enter at their own times. Reals enter at `real_t` (one value or
/// one per column); an empty span means t = 0.
HingeLosses hinge_losses(const Discriminator& d, const Eigen::MatrixXd& real,
                         const Eigen::MatrixXd& fake, std::span<const int> labels,
                         std::span<const double> fake_t, std::span<const double> real_t = {});

struct LossWeights {
  double lambda_adv = 0.4;
};

double scott_loss(double cd_value, double adv_generator_value, const LossWeights& weights);

// Time fed to the discriminator with real samples.
enum class RealTime { zero, matched };

RealTime real_time_from_string(const std::string& s);
std::string to_string(RealTime r);

struct GanConfig {
  LossWeights weights{};
  RealTime real_time = RealTime::matched;
  std::size_t rank = 4;
  double adapter_scale = 1.0;
  double lr_ratio = 2.5;  // discriminator lr / student lr
  double max_logit = 1e6;

  void validate() const;
};

struct ScottRun {
  distill::StudentCheckpoint student;
  Discriminator discriminator;
};

/// Algorithm-2 loop with both loss branches. The discriminator is
/// initialised from substream 3 of `rng`; everything else matches
/// train_scott_cd_only, so lambda_adv = 0 reproduces it bit for bit.
ScottRun train_scott_full(const diffusion::ScoreModel& teacher,
                          const distill::DistillConfig& distill_config, const GanConfig& gan,
                          const diffusion::MixtureSpec& spec, const diffusion::Schedule& schedule,
                          RngStream& rng);

}  // namespace scott::adversarial
