#include "scott/distill/distill.hpp"

#include <cmath>

#include "scott/numerics/hash.hpp"

namespace scott::distill {

HeadCoefficients head_coefficients(double t, double tau, double sigma_data) {
  if (t < tau) throw DomainError("consistency head: t = " + std::to_string(t) + " is before tau");
  if (t == tau) return {1.0, 0.0};
  const double s2 = sigma_data * sigma_data;
  const double d = t - tau;
  return {s2 / (d * d + s2), sigma_data * d / std::sqrt(s2 + t * t)};
}

Eigen::MatrixXd consistency_head(const Eigen::MatrixXd& raw, const Eigen::MatrixXd& z,
                                 std::span<const double> t, double tau, double sigma_data) {
  if (raw.rows() != z.rows() || raw.cols() != z.cols())
    throw ContractError("consistency head: raw output and z differ in shape");
  const auto n = static_cast<std::size_t>(z.cols());
  if (t.size() != 1 && t.size() != n) throw ContractError("consistency head: time count mismatch");
  Eigen::MatrixXd f = z;
  for (std::size_t j = 0; j < n; ++j) {
    const double tj = t.size() == 1 ? t[0] : t[j];
    const HeadCoefficients c = head_coefficients(tj, tau, sigma_data);
    if (tj == tau) continue;
    const auto col = static_cast<Eigen::Index>(j);
    f.col(col) = c.c_skip * z.col(col) + c.c_out * raw.col(col);
  }
  return f;
}

ConsistencyModel consistency_from_teacher(const ScoreModel& teacher, double tau,
                                          double sigma_data, double ema_rate) {
  return ConsistencyModel{teacher, teacher, sigma_data, tau, ema_rate};
}

Eigen::MatrixXd consistency_eval(const ConsistencyModel& model, const Eigen::MatrixXd& z,
                                 std::span<const double> t, bool use_target) {
  const ScoreModel& net = use_target ? model.target : model.online;
  const Eigen::MatrixXd raw =
      numerics::mlp_apply(net.net, diffusion::embed_inputs(net.spec, z, t, {}));
  return consistency_head(raw, z, t, model.tau, model.sigma_data);
}

ConsistencyForward consistency_forward(const ConsistencyModel& model, const Eigen::MatrixXd& z,
                                       std::span<const double> t) {
  numerics::MlpForward fw =
      numerics::mlp_forward(model.online.net, diffusion::embed_inputs(model.online.spec, z, t, {}));
  ConsistencyForward out;
  out.f = consistency_head(fw.output, z, t, model.tau, model.sigma_data);
  out.tape = std::move(fw.tape);
  out.c_out.resize(static_cast<std::size_t>(z.cols()));
  for (std::size_t j = 0; j < out.c_out.size(); ++j)
    out.c_out[j] = head_coefficients(t.size() == 1 ? t[0] : t[j], model.tau, model.sigma_data).c_out;
  return out;
}

numerics::MlpParams consistency_backward(const ConsistencyModel& model,
                                         const ConsistencyForward& forward,
                                         const Eigen::MatrixXd& f_cotangent) {
  if (f_cotangent.rows() != forward.f.rows() || f_cotangent.cols() != forward.f.cols())
    throw ContractError("consistency backward: cotangent shape mismatch");
  Eigen::MatrixXd raw_cot = f_cotangent;
  for (Eigen::Index j = 0; j < raw_cot.cols(); ++j)
    raw_cot.col(j) *= forward.c_out[static_cast<std::size_t>(j)];
  return numerics::mlp_backward(model.online.net, forward.tape, raw_cot).params;
}

std::string to_string(Distance d) { return d == Distance::l1 ? "l1" : "squared-l2"; }

Distance distance_from_string(const std::string& name) {
  if (name == "squared-l2") return Distance::squared_l2;
  if (name == "l1") return Distance::l1;
  throw ConfigError("unknown distance '" + name + "' (expected squared-l2 or l1)");
}

std::size_t DistillConfig::effective_skip(const Schedule& schedule) const {
  if (skip != 0) return skip;
  return static_cast<std::size_t>(std::ceil(24.0 / 1000.0 * static_cast<double>(schedule.size())));
}

void DistillConfig::validate(const Schedule& schedule) const {
  solver.validate();
  const std::size_t k = effective_skip(schedule);
  if (k < 1 || k >= schedule.size())
    throw ConfigError("distill.skip must satisfy 1 <= k < grid size (" +
                      std::to_string(schedule.size()) + ")");
  if (batch_size == 0) throw ConfigError("distill.batch_size must be >= 1");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("distill.lr must be > 0");
  if (!(ema_rate >= 0.0 && ema_rate <= 1.0)) throw ConfigError("distill.ema_rate must lie in [0, 1]");
  if (!(sigma_data > 0.0)) throw ConfigError("distill.sigma_data must be > 0");
  if (!(cfg_scale >= 0.0)) throw ConfigError("distill.cfg_scale must be >= 0");
  if (log_every == 0) throw ConfigError("distill.log_every must be >= 1");
}

std::size_t pick_subinterval(std::size_t n, const DistillConfig& config, const Schedule& schedule) {
  if (n == 0 || n >= schedule.size())
    throw ContractError("pick_subinterval: n must lie in 1..N-1 (0-based)");
  const std::size_t k = config.effective_skip(schedule);
  return n > k ? n - k : 0;
}

CdTerms cd_terms(const ConsistencyModel& model, const diffusion::EpsFn& teacher,
                 const Eigen::MatrixXd& x0, std::span<const int> labels,
                 std::span<const std::size_t> n_index, std::span<const std::size_t> m_index,
                 const Eigen::MatrixXd& eps, const Schedule& schedule, const DistillConfig& config,
                 RngStream& rng) {
  const auto B = static_cast<std::size_t>(x0.cols());
  if (B == 0) throw ContractError("cd_loss: empty batch");
  if (n_index.size() != B || m_index.size() != B)
    throw ContractError("cd_loss: need one time index per item");
  if (eps.rows() != x0.rows() || eps.cols() != x0.cols())
    throw ContractError("cd_loss: noise shape mismatch");
  CdTerms out;
  out.n_index.assign(n_index.begin(), n_index.end());
  out.m_index.assign(m_index.begin(), m_index.end());
  std::vector<double> tn(B), tm(B);
  out.z_n.resize(x0.rows(), x0.cols());
  for (std::size_t j = 0; j < B; ++j) {
    const std::size_t n = n_index[j];
    if (n >= schedule.size() || out.m_index[j] > n)
      throw ContractError("cd_loss: need m <= n < N");
    tn[j] = schedule.time(n);
    tm[j] = schedule.time(out.m_index[j]);
    const auto c = static_cast<Eigen::Index>(j);
    out.z_n.col(c) = std::sqrt(schedule.alpha_bar(n)) * x0.col(c) + schedule.sigma(n) * eps.col(c);
  }
  const Eigen::MatrixXd z_m = solvers::multi_step_solve(teacher, out.z_n, out.n_index, out.m_index,
                                                        config.solver, schedule, rng, labels);
  out.target = consistency_eval(model, z_m, tm, true);
  out.student = consistency_forward(model, out.z_n, tn);
  const Eigen::MatrixXd diff = out.student.f - out.target;
  const double inv_b = 1.0 / static_cast<double>(B);
  Eigen::MatrixXd cot;
  if (config.distance == Distance::squared_l2) {
    out.loss = diff.colwise().squaredNorm().sum() * inv_b;
    cot = 2.0 * inv_b * diff;
  } else {
    out.loss = diff.cwiseAbs().colwise().sum().sum() * inv_b;
    cot = diff.unaryExpr([inv_b](double v) { return v > 0 ? inv_b : (v < 0 ? -inv_b : 0.0); });
  }
  out.grads = consistency_backward(model, out.student, cot);
  return out;
}

CdTerms cd_terms(const ConsistencyModel& model, const diffusion::EpsFn& teacher,
                 const Eigen::MatrixXd& x0, std::span<const int> labels,
                 std::span<const std::size_t> n_index, const Eigen::MatrixXd& eps,
                 const Schedule& schedule, const DistillConfig& config, RngStream& rng) {
  std::vector<std::size_t> m(n_index.size());
  for (std::size_t j = 0; j < m.size(); ++j) m[j] = pick_subinterval(n_index[j], config, schedule);
  return cd_terms(model, teacher, x0, labels, n_index, m, eps, schedule, config, rng);
}

CdTerms cd_terms(const ConsistencyModel& model, const diffusion::EpsFn& teacher,
                 const Eigen::MatrixXd& x0, std::span<const int> labels,
                 const Schedule& schedule, const DistillConfig& config, RngStream& rng) {
  const auto B = static_cast<std::size_t>(x0.cols());
  std::vector<std::size_t> n(B);
  for (auto& v : n) v = 1 + static_cast<std::size_t>(rng.uniform_index(schedule.size() - 1));
  const Eigen::MatrixXd eps = rng.gaussian_matrix(x0.rows(), x0.cols());
  return cd_terms(model, teacher, x0, labels, n, eps, schedule, config, rng);
}

CdLoss cd_loss(const ConsistencyModel& model, const diffusion::EpsFn& teacher,
               const Eigen::MatrixXd& x0, std::span<const int> labels, const Schedule& schedule,
               const DistillConfig& config, RngStream& rng) {
  CdTerms t = cd_terms(model, teacher, x0, labels, schedule, config, rng);
  return {t.loss, std::move(t.grads)};
}

namespace {

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

StudentCheckpoint train_consistency(const ScoreModel& teacher, const DistillConfig& config,
                                    const diffusion::MixtureSpec& spec, const Schedule& schedule,
                                    RngStream& rng, TrainingHook* hook) {
  config.validate(schedule);
  if (teacher.spec.data_dim != spec.dim())
    throw ContractError("distill: teacher and data dimension differ");
  RngStream init_rng = rng.substream(0);
  RngStream data_rng = rng.substream(1);
  RngStream noise_rng = rng.substream(2);

  StudentCheckpoint ckpt;
  ckpt.config = config;
  ckpt.teacher_fingerprint = numerics::fingerprint(teacher.net);
  ckpt.model = consistency_from_teacher(teacher, schedule.tau(), config.sigma_data, config.ema_rate);
  if (!config.init_from_teacher) {
    ckpt.model.online.net = numerics::mlp_init(teacher.net.layer_sizes(),
                                               teacher.net.activation(), init_rng);
    ckpt.model.target = ckpt.model.online;
  }
  ConsistencyModel& model = ckpt.model;
  const diffusion::EpsFn teacher_eps = diffusion::model_eps_fn(teacher, config.cfg_scale);
  auto adam = numerics::AdamState::for_size(model.online.net.parameter_count(), config.adam);

  TrainRecord acc;
  std::size_t acc_n = 0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const diffusion::LabeledSamples batch = diffusion::sample_mixture(spec, config.batch_size, data_rng);
    std::span<const int> labels;
    if (teacher.spec.conditional()) labels = batch.labels;
    TrainRecord rec;
    numerics::MlpParams grads;
    try {
      CdTerms terms = cd_terms(model, teacher_eps, batch.x, labels, schedule, config, noise_rng);
      rec.cd_loss = terms.loss;
      grads = std::move(terms.grads);
      if (!std::isfinite(terms.loss)) throw NumericError("consistency loss is not finite");
      if (hook) hook->on_step(model, terms, batch.x, batch.labels, grads, rec);
      if (!all_finite(grads.values())) throw NumericError("student gradient is not finite");
    } catch (const DivergenceError&) {
      throw;
    } catch (const NumericError& e) {
      throw DivergenceError("distillation diverged at iteration " + std::to_string(it) + ": " +
                                e.what(),
                            ckpt);
    }
    numerics::adam_step(adam, model.online.net.values(), grads.values());
    numerics::ema_update(model.target.net.values(), model.online.net.values(), model.ema_rate);
    ckpt.iterations_done = it + 1;

    acc.cd_loss += rec.cd_loss;
    acc.generator_loss += rec.generator_loss;
    acc.discriminator_loss += rec.discriminator_loss;
    ++acc_n;
    if ((it + 1) % config.log_every == 0 || it + 1 == config.iterations) {
      const double k = static_cast<double>(acc_n);
      ckpt.curve.push_back({it + 1, acc.cd_loss / k, acc.generator_loss / k,
                            acc.discriminator_loss / k});
      acc = {};
      acc_n = 0;
    }
  }
  return ckpt;
}

StudentCheckpoint train_scott_cd_only(const ScoreModel& teacher, const DistillConfig& config,
                                      const diffusion::MixtureSpec& spec,
                                      const Schedule& schedule, RngStream& rng) {
  return train_consistency(teacher, config, spec, schedule, rng, nullptr);
}

}  // namespace scott::distill
