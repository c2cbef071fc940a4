#include "scott/diffusion/score_model.hpp"

#include <cmath>
#include <numbers>

#include "scott/error.hpp"

namespace scott::diffusion {

std::string to_string(TimeEmbedding e) {
  return e == TimeEmbedding::scalar ? "scalar" : "fourier";
}

TimeEmbedding time_embedding_from_string(const std::string& name) {
  if (name == "scalar") return TimeEmbedding::scalar;
  if (name == "fourier") return TimeEmbedding::fourier;
  throw ConfigError("unknown time embedding '" + name + "' (expected scalar or fourier)");
}

std::size_t ScoreModelSpec::time_width() const {
  return time_embedding == TimeEmbedding::scalar ? 1 : 1 + 2 * fourier_features;
}

Eigen::MatrixXd embed_inputs(const ScoreModelSpec& spec, const Eigen::MatrixXd& z,
                             std::span<const double> t, std::span<const int> labels) {
  const Eigen::Index n = z.cols();
  const auto d = static_cast<Eigen::Index>(spec.data_dim);
  if (z.rows() != d) throw ContractError("embed_inputs: z has the wrong dimension");
  if (t.size() != 1 && t.size() != static_cast<std::size_t>(n)) {
    throw ContractError("embed_inputs: need one time or one time per column");
  }
  if (!labels.empty()) {
    if (labels.size() != static_cast<std::size_t>(n)) {
      throw ContractError("embed_inputs: need one label per column");
    }
    if (!spec.conditional()) {
      for (int c : labels) {
        if (c >= 0) throw ContractError("condition given to an unconditional model");
      }
    }
  }
  Eigen::MatrixXd in = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(spec.input_width()), n);
  in.topRows(d) = z;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double tj = t.size() == 1 ? t[0] : t[static_cast<std::size_t>(j)];
    const double u = tj / spec.T;
    in(d, j) = 2.0 * u - 1.0;
    if (spec.time_embedding == TimeEmbedding::fourier) {
      for (std::size_t k = 1; k <= spec.fourier_features; ++k) {
        const double arg = std::numbers::pi * static_cast<double>(k) * u;
        in(d + static_cast<Eigen::Index>(2 * k - 1), j) = std::sin(arg);
        in(d + static_cast<Eigen::Index>(2 * k), j) = std::cos(arg);
      }
    }
    if (!labels.empty()) {
      const int c = labels[static_cast<std::size_t>(j)];
      if (c >= static_cast<int>(spec.num_classes)) {
        throw ContractError("class label " + std::to_string(c) + " out of range");
      }
      if (c >= 0) in(d + static_cast<Eigen::Index>(spec.time_width()) + c, j) = 1.0;
    }
  }
  return in;
}

ScoreModel make_score_model(const ScoreModelSpec& spec, std::size_t hidden_width,
                            std::size_t num_layers, numerics::Activation activation,
                            numerics::RngStream& rng) {
  if (num_layers < 1) throw ConfigError("score model needs at least one layer");
  if (hidden_width == 0) throw ConfigError("hidden width must be positive");
  std::vector<std::size_t> sizes{spec.input_width()};
  for (std::size_t l = 0; l + 1 < num_layers; ++l) sizes.push_back(hidden_width);
  sizes.push_back(spec.data_dim);
  return ScoreModel{spec, numerics::mlp_init(std::move(sizes), activation, rng)};
}

Eigen::MatrixXd model_eps(const ScoreModel& model, const Eigen::MatrixXd& z,
                          std::span<const double> t, std::span<const int> labels) {
  return numerics::mlp_apply(model.net, embed_inputs(model.spec, z, t, labels));
}

void CfgSetting::validate() const {
  if (!std::isfinite(scale) || scale < 0.0) throw ConfigError("CFG scale must be finite and >= 0");
  if (scale > 0.0 && !condition) throw ConfigError("CFG scale > 0 requires a condition");
}

Eigen::MatrixXd cfg_eps(const ScoreModel& model, const Eigen::MatrixXd& z, const CfgSetting& cfg,
                        std::span<const double> t) {
  cfg.validate();
  if (cfg.condition && !model.spec.conditional()) {
    throw ContractError("condition requested but the model is unconditional");
  }
  std::vector<int> labels(static_cast<std::size_t>(z.cols()), cfg.condition.value_or(-1));
  return cfg_eps(model, z, cfg.scale, labels, t);
}

Eigen::MatrixXd cfg_eps(const ScoreModel& model, const Eigen::MatrixXd& z, double scale,
                        std::span<const int> labels, std::span<const double> t) {
  if (!std::isfinite(scale) || scale < 0.0) throw ConfigError("CFG scale must be finite and >= 0");
  bool any_condition = false;
  for (int c : labels) any_condition = any_condition || c >= 0;
  if (any_condition && !model.spec.conditional()) {
    throw ContractError("condition requested but the model is unconditional");
  }
  if (scale == 0.0 || !any_condition) return model_eps(model, z, t);
  Eigen::MatrixXd cond = model_eps(model, z, t, labels);
  if (scale == 1.0) return cond;
  Eigen::MatrixXd uncond = model_eps(model, z, t);
  Eigen::MatrixXd out = uncond + scale * (cond - uncond);
  // Columns without a condition keep the unconditional prediction.
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] < 0) out.col(static_cast<Eigen::Index>(j)) = uncond.col(static_cast<Eigen::Index>(j));
  }
  return out;
}

EpsFn model_eps_fn(ScoreModel model, double cfg_scale) {
  return [model = std::move(model), cfg_scale](const Eigen::MatrixXd& z, std::span<const double> t,
                                               std::span<const int> labels) {
    if (labels.empty()) return model_eps(model, z, t);
    return cfg_eps(model, z, cfg_scale, labels, t);
  };
}

EpsFn analytic_eps_fn(MixtureSpec spec, const Schedule& schedule) {
  return [spec = std::move(spec), schedule](const Eigen::MatrixXd& z, std::span<const double> t,
                                            std::span<const int> labels) {
    return analytic_eps(spec, z, t, schedule, labels);
  };
}

Eigen::MatrixXd perturb(const Eigen::MatrixXd& x0, std::size_t t_index, const Eigen::MatrixXd& eps,
                        const Schedule& schedule) {
  if (t_index >= schedule.size()) throw DomainError("perturb: grid index out of range");
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) {
    throw ContractError("perturb: x0 and eps shapes differ");
  }
  return std::sqrt(schedule.alpha_bar(t_index)) * x0 + schedule.sigma(t_index) * eps;
}

Eigen::MatrixXd perturb(const Eigen::MatrixXd& x0, double t, const Eigen::MatrixXd& eps,
                        const Schedule& schedule) {
  return perturb(x0, schedule.index_of(t), eps, schedule);
}

DsmBatch draw_dsm_batch(const Eigen::MatrixXd& x0, std::span<const int> labels,
                        const Schedule& schedule, numerics::RngStream& rng, double label_drop) {
  const Eigen::Index n = x0.cols();
  if (n == 0) throw ContractError("dsm batch must be nonempty");
  if (!labels.empty() && labels.size() != static_cast<std::size_t>(n)) {
    throw ContractError("dsm batch: need one label per sample");
  }
  DsmBatch b;
  b.t_index.resize(static_cast<std::size_t>(n));
  b.t.resize(static_cast<std::size_t>(n));
  for (std::size_t j = 0; j < b.t_index.size(); ++j) {
    b.t_index[j] = static_cast<std::size_t>(rng.uniform_index(schedule.size()));
    b.t[j] = schedule.time(b.t_index[j]);
  }
  b.eps = rng.gaussian_matrix(x0.rows(), n);
  b.z.resize(x0.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const std::size_t i = b.t_index[static_cast<std::size_t>(j)];
    b.z.col(j) = std::sqrt(schedule.alpha_bar(i)) * x0.col(j) + schedule.sigma(i) * b.eps.col(j);
  }
  if (!labels.empty()) {
    b.labels.assign(labels.begin(), labels.end());
    if (label_drop > 0.0) {
      for (int& c : b.labels) {
        if (rng.uniform() < label_drop) c = -1;
      }
    }
  }
  return b;
}

double dsm_loss_value(const Eigen::MatrixXd& predicted, const DsmBatch& batch) {
  if (predicted.rows() != batch.eps.rows() || predicted.cols() != batch.eps.cols()) {
    throw ContractError("dsm_loss_value: prediction shape differs from the batch");
  }
  return (predicted - batch.eps).colwise().squaredNorm().mean();
}

DsmLoss dsm_loss(const ScoreModel& model, const DsmBatch& batch) {
  const Eigen::MatrixXd input = embed_inputs(model.spec, batch.z, batch.t, batch.labels);
  numerics::MlpForward fwd = numerics::mlp_forward(model.net, input);
  const Eigen::MatrixXd residual = fwd.output - batch.eps;
  const double n = static_cast<double>(batch.eps.cols());
  DsmLoss out;
  out.loss = residual.colwise().squaredNorm().sum() / n;
  if (!std::isfinite(out.loss)) throw NumericError("dsm loss is not finite");
  out.grads = numerics::mlp_backward(model.net, fwd.tape, (2.0 / n) * residual).params;
  return out;
}

DsmLoss dsm_loss(const ScoreModel& model, const Eigen::MatrixXd& x0, std::span<const int> labels,
                 const Schedule& schedule, numerics::RngStream& rng) {
  return dsm_loss(model, draw_dsm_batch(x0, labels, schedule, rng));
}

}  // namespace scott::diffusion
