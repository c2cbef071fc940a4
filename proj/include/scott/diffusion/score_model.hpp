#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scott/diffusion/mixture.hpp"
#include "scott/diffusion/schedule.hpp"
#include "scott/numerics/mlp.hpp"
#include "scott/numerics/rng.hpp"

namespace scott::diffusion {

enum class TimeEmbedding { scalar, fourier };

std::string to_string(TimeEmbedding e);
TimeEmbedding time_embedding_from_string(const std::string& name);

/// How (z, t, c) is packed into the network input column:
/// [ z (data_dim) | time features | one-hot class (num_classes) ].
/// The scalar time feature is 2 t / T - 1; the Fourier variant appends
/// sin/cos(pi k t / T) for k = 1..fourier_features. A label of -1 (or an
/// unconditional model) leaves the class block at zero.
struct ScoreModelSpec {
  std::size_t data_dim = 1;
  TimeEmbedding time_embedding = TimeEmbedding::scalar;
  std::size_t fourier_features = 0;
  std::size_t num_classes = 0;
  double T = 1.0;

  std::size_t time_width() const;
  std::size_t input_width() const { return data_dim + time_width() + num_classes; }
  bool conditional() const { return num_classes > 0; }

  friend bool operator==(const ScoreModelSpec&, const ScoreModelSpec&) = default;
};

/// Network input matrix for a batch. `t` is one time per column or a single
/// shared time; `labels` is empty (all null) or one label per column.
Eigen::MatrixXd embed_inputs(const ScoreModelSpec& spec, const Eigen::MatrixXd& z,
                             std::span<const double> t, std::span<const int> labels);

/// Epsilon-prediction network.
struct ScoreModel {
  ScoreModelSpec spec;
  numerics::MlpParams net;

  friend bool operator==(const ScoreModel&, const ScoreModel&) = default;
};

ScoreModel make_score_model(const ScoreModelSpec& spec, std::size_t hidden_width,
                            std::size_t num_layers, numerics::Activation activation,
                            numerics::RngStream& rng);

Eigen::MatrixXd model_eps(const ScoreModel& model, const Eigen::MatrixXd& z,
                          std::span<const double> t, std::span<const int> labels = {});

/// Classifier-free guidance setting. `condition` must be present when the
/// scale is positive.
struct CfgSetting {
  double scale = 0.0;
  std::optional<int> condition;

  void validate() const;
};

/// eps_uncond + scale * (eps_cond - eps_uncond). Scale 0 returns the
/// unconditional prediction and scale 1 the conditional one, both exactly.
Eigen::MatrixXd cfg_eps(const ScoreModel& model, const Eigen::MatrixXd& z, const CfgSetting& cfg,
                        std::span<const double> t);

/// Guidance with a per-column condition (-1 = no condition for that column,
/// which falls back to the unconditional prediction).
Eigen::MatrixXd cfg_eps(const ScoreModel& model, const Eigen::MatrixXd& z, double scale,
                        std::span<const int> labels, std::span<const double> t);

/// Any noise predictor: (z, per-column or shared times, per-column labels).
using EpsFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& z, std::span<const double> t,
                                            std::span<const int> labels)>;

/// Predictor backed by a trained model with guidance scale `cfg_scale`.
EpsFn model_eps_fn(ScoreModel model, double cfg_scale = 0.0);
/// Predictor backed by the closed-form mixture oracle.
EpsFn analytic_eps_fn(MixtureSpec spec, const Schedule& schedule);

/// Draws for one denoising score matching batch.
struct DsmBatch {
  Eigen::MatrixXd z;
  Eigen::MatrixXd eps;
  std::vector<std::size_t> t_index;
  std::vector<double> t;
  std::vector<int> labels;  // empty for unconditional models
};

/// Draw order: B grid indices, then the dim x B noise matrix column by
/// column, then B label-drop uniforms when labels are supplied and
/// `label_drop` > 0.
DsmBatch draw_dsm_batch(const Eigen::MatrixXd& x0, std::span<const int> labels,
                        const Schedule& schedule, numerics::RngStream& rng,
                        double label_drop = 0.0);

/// mean over the batch of ||predicted - eps||^2
double dsm_loss_value(const Eigen::MatrixXd& predicted, const DsmBatch& batch);

struct DsmLoss {
  double loss = 0.0;
  numerics::MlpParams grads;
};

DsmLoss dsm_loss(const ScoreModel& model, const DsmBatch& batch);

DsmLoss dsm_loss(const ScoreModel& model, const Eigen::MatrixXd& x0, std::span<const int> labels,
                 const Schedule& schedule, numerics::RngStream& rng);

/// z_t = sqrt(alpha_bar_t) x0 + sigma_t eps at grid index t_index.
Eigen::MatrixXd perturb(const Eigen::MatrixXd& x0, std::size_t t_index, const Eigen::MatrixXd& eps,
                        const Schedule& schedule);

/// Same, with the time given as a value that must lie on the grid.
Eigen::MatrixXd perturb(const Eigen::MatrixXd& x0, double t, const Eigen::MatrixXd& eps,
                        const Schedule& schedule);

}  // namespace scott::diffusion
