#include "scott/adversarial/adversarial.hpp"

#include <algorithm>
#include <cmath>

#include "scott/error.hpp"

namespace scott::adversarial {

namespace {

Eigen::MatrixXd activate(numerics::Activation a, Eigen::MatrixXd x) {
  if (a == numerics::Activation::tanh) x = x.array().tanh().matrix();
  return x;
}

// Derivative of the activation expressed through its output.
Eigen::MatrixXd activation_grad(numerics::Activation a, const Eigen::MatrixXd& out,
                                const Eigen::MatrixXd& cot) {
  if (a == numerics::Activation::tanh) return (cot.array() * (1.0 - out.array().square())).matrix();
  return cot;
}

}  // namespace

Discriminator::Discriminator(diffusion::ScoreModelSpec spec, numerics::Activation activation,
                             std::vector<DenseLayer> encoder, std::vector<DenseLayer> decoder,
                             std::size_t rank, double scale)
    : spec_(spec),
      activation_(activation),
      encoder_(std::move(encoder)),
      decoder_(std::move(decoder)),
      rank_(rank),
      scale_(scale) {
  if (encoder_.empty()) throw ConfigError("discriminator: the encoder needs at least one layer");
  if (rank_ == 0) throw ConfigError("discriminator: LoRA rank must be >= 1");
  std::size_t n = 0;
  for (const DenseLayer& l : decoder_) {
    const auto in = static_cast<std::size_t>(l.weight.cols());
    const auto out = static_cast<std::size_t>(l.weight.rows());
    if (rank_ > std::min(in, out))
      throw ConfigError("discriminator: LoRA rank " + std::to_string(rank_) +
                        " exceeds layer width " + std::to_string(std::min(in, out)));
    offsets_.push_back(n);
    n += rank_ * in;
    offsets_.push_back(n);
    n += out * rank_;
  }
  offsets_.push_back(n);
  trainable_.assign(n + width() + 1, 0.0);
}

std::size_t Discriminator::width() const {
  const DenseLayer& last = decoder_.empty() ? encoder_.back() : decoder_.back();
  return static_cast<std::size_t>(last.weight.rows());
}

Eigen::Map<Eigen::MatrixXd> Discriminator::adapter_a(std::size_t i) {
  return {trainable_.data() + offsets_.at(2 * i), static_cast<Eigen::Index>(rank_),
          decoder_.at(i).weight.cols()};
}
Eigen::Map<const Eigen::MatrixXd> Discriminator::adapter_a(std::size_t i) const {
  return {trainable_.data() + offsets_.at(2 * i), static_cast<Eigen::Index>(rank_),
          decoder_.at(i).weight.cols()};
}
Eigen::Map<Eigen::MatrixXd> Discriminator::adapter_b(std::size_t i) {
  return {trainable_.data() + offsets_.at(2 * i + 1), decoder_.at(i).weight.rows(),
          static_cast<Eigen::Index>(rank_)};
}
Eigen::Map<const Eigen::MatrixXd> Discriminator::adapter_b(std::size_t i) const {
  return {trainable_.data() + offsets_.at(2 * i + 1), decoder_.at(i).weight.rows(),
          static_cast<Eigen::Index>(rank_)};
}
Eigen::Map<Eigen::VectorXd> Discriminator::head_weight() {
  return {trainable_.data() + offsets_.back(), static_cast<Eigen::Index>(width())};
}
Eigen::Map<const Eigen::VectorXd> Discriminator::head_weight() const {
  return {trainable_.data() + offsets_.back(), static_cast<Eigen::Index>(width())};
}

std::size_t Discriminator::frozen_count() const {
  std::size_t n = 0;
  for (const auto* group : {&encoder_, &decoder_})
    for (const DenseLayer& l : *group) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

double Discriminator::trainable_fraction() const {
  const double t = static_cast<double>(trainable_count());
  return t / (t + static_cast<double>(frozen_count()));
}

Eigen::MatrixXd Discriminator::effective_weight(std::size_t i) const {
  return decoder_.at(i).weight + scale_ * adapter_b(i) * adapter_a(i);
}

Discriminator disc_init_from_teacher(const diffusion::ScoreModel& teacher, std::size_t rank,
                                     RngStream& rng, double scale) {
  const numerics::MlpParams& net = teacher.net;
  const std::size_t L = net.num_layers();
  if (L < 2) throw ConfigError("discriminator: the teacher needs at least two layers");
  if (rank == 0) throw ConfigError("discriminator: LoRA rank must be >= 1");
  const std::size_t n_enc = (L + 1) / 2;
  std::vector<DenseLayer> enc, dec;
  for (std::size_t l = 0; l + 1 < L; ++l) {
    DenseLayer d{net.weight(l), net.bias(l)};
    (l < n_enc ? enc : dec).push_back(std::move(d));
  }
  if (enc.empty()) enc.push_back({net.weight(0), net.bias(0)});
  Discriminator disc(teacher.spec, net.activation(), std::move(enc), std::move(dec), rank, scale);
  for (std::size_t i = 0; i < disc.decoder().size(); ++i) {
    auto b = disc.adapter_b(i);
    const double bound = std::sqrt(1.0 / static_cast<double>(rank));
    for (Eigen::Index k = 0; k < b.size(); ++k) b.data()[k] = bound * (2.0 * rng.uniform() - 1.0);
  }
  auto w = disc.head_weight();
  const double bound = std::sqrt(1.0 / static_cast<double>(disc.width()));
  for (Eigen::Index k = 0; k < w.size(); ++k) w[k] = bound * (2.0 * rng.uniform() - 1.0);
  return disc;
}

DiscForward disc_forward(const Discriminator& d, const Eigen::MatrixXd& z,
                         std::span<const double> t, std::span<const int> labels) {
  if (!labels.empty() && !d.spec().conditional())
    throw ContractError("disc_forward: labels given to an unconditional discriminator");
  DiscForward out;
  out.activations.push_back(diffusion::embed_inputs(d.spec(), z, t, labels));
  for (const DenseLayer& l : d.encoder()) {
    const Eigen::MatrixXd& h = out.activations.back();
    if (l.weight.cols() != h.rows()) throw ContractError("disc_forward: input width mismatch");
    out.activations.push_back(activate(d.activation(), (l.weight * h).colwise() + l.bias));
  }
  for (std::size_t i = 0; i < d.decoder().size(); ++i) {
    const Eigen::MatrixXd& h = out.activations.back();
    out.activations.push_back(
        activate(d.activation(), (d.effective_weight(i) * h).colwise() + d.decoder()[i].bias));
  }
  out.logits = (d.head_weight().transpose() * out.activations.back()).transpose();
  out.logits.array() += d.head_bias();
  if (!out.logits.allFinite()) throw NumericError("discriminator produced a non-finite logit");
  return out;
}

DiscGradient disc_backward(const Discriminator& d, const DiscForward& forward,
                           const Eigen::VectorXd& logit_cotangent) {
  const std::size_t n_enc = d.encoder().size(), n_dec = d.decoder().size();
  if (forward.activations.size() != 1 + n_enc + n_dec ||
      logit_cotangent.size() != forward.logits.size())
    throw ContractError("disc_backward: tape does not match the discriminator");
  DiscGradient g;
  g.trainable.assign(d.trainable_count(), 0.0);
  Discriminator view = d;  // borrow the layout for gradient maps
  std::fill(view.trainable().begin(), view.trainable().end(), 0.0);

  const Eigen::MatrixXd& top = forward.activations.back();
  view.head_weight() = top * logit_cotangent;
  view.head_bias() = logit_cotangent.sum();
  Eigen::MatrixXd delta = d.head_weight() * logit_cotangent.transpose();
  for (std::size_t k = n_dec; k-- > 0;) {
    const Eigen::MatrixXd& out = forward.activations[1 + n_enc + k];
    const Eigen::MatrixXd& in = forward.activations[n_enc + k];
    const Eigen::MatrixXd pre = activation_grad(d.activation(), out, delta);
    const Eigen::MatrixXd gw = pre * in.transpose();
    view.adapter_a(k) = d.scale() * d.adapter_b(k).transpose() * gw;
    view.adapter_b(k) = d.scale() * gw * d.adapter_a(k).transpose();
    delta = d.effective_weight(k).transpose() * pre;
  }
  for (std::size_t k = n_enc; k-- > 0;) {
    const Eigen::MatrixXd pre = activation_grad(d.activation(), forward.activations[1 + k], delta);
    delta = d.encoder()[k].weight.transpose() * pre;
  }
  g.z = delta.topRows(static_cast<Eigen::Index>(d.spec().data_dim));
  std::copy(view.trainable().begin(), view.trainable().end(), g.trainable.begin());
  return g;
}

HingeValues hinge_values(std::span<const double> real_logits, std::span<const double> fake_logits) {
  if (real_logits.empty() || fake_logits.empty()) throw ContractError("hinge loss: empty batch");
  double r = 0.0, f = 0.0, g = 0.0;
  for (double v : real_logits) r += std::max(0.0, 1.0 - v);
  for (double v : fake_logits) {
    f += std::max(0.0, 1.0 + v);
    g -= v;
  }
  const double nr = static_cast<double>(real_logits.size());
  const double nf = static_cast<double>(fake_logits.size());
  return {r / nr + f / nf, g / nf};
}

HingeLosses hinge_losses(const Discriminator& d, const Eigen::MatrixXd& real,
                         const Eigen::MatrixXd& fake, std::span<const int> labels,
                         std::span<const double> fake_t, std::span<const double> real_t) {
  if (real.cols() == 0 || fake.cols() == 0) throw ContractError("hinge loss: empty batch");
  const double zero = 0.0;
  if (real_t.empty()) real_t = {&zero, 1};
  const DiscForward fr = disc_forward(d, real, real_t, labels);
  const DiscForward ff = disc_forward(d, fake, fake_t, labels);
  HingeLosses out;
  out.real_logits = fr.logits;
  out.fake_logits = ff.logits;
  out.values = hinge_values({fr.logits.data(), static_cast<std::size_t>(fr.logits.size())},
                            {ff.logits.data(), static_cast<std::size_t>(ff.logits.size())});
  const double nr = static_cast<double>(real.cols()), nf = static_cast<double>(fake.cols());
  // L_D: hinge subgradients (zero on the flat side, including the kink).
  const Eigen::VectorXd cr = fr.logits.unaryExpr([nr](double v) { return v < 1.0 ? -1.0 / nr : 0.0; });
  const Eigen::VectorXd cf = ff.logits.unaryExpr([nf](double v) { return v > -1.0 ? 1.0 / nf : 0.0; });
  const DiscGradient gr = disc_backward(d, fr, cr);
  const DiscGradient gf = disc_backward(d, ff, cf);
  out.disc_grads.resize(gr.trainable.size());
  for (std::size_t i = 0; i < out.disc_grads.size(); ++i)
    out.disc_grads[i] = gr.trainable[i] + gf.trainable[i];
  // L_G: gradient only toward the fakes.
  out.fake_cotangent = disc_backward(d, ff, Eigen::VectorXd::Constant(ff.logits.size(), -1.0 / nf)).z;
  return out;
}

RealTime real_time_from_string(const std::string& s) {
  if (s == "zero") return RealTime::zero;
  if (s == "matched") return RealTime::matched;
  throw ConfigError("unknown real-sample time '" + s + "' (expected zero or matched)");
}

std::string to_string(RealTime r) { return r == RealTime::zero ? "zero" : "matched"; }

double scott_loss(double cd_value, double adv_generator_value, const LossWeights& weights) {
  if (weights.lambda_adv == 0.0) return cd_value;
  return cd_value + weights.lambda_adv * adv_generator_value;
}

void GanConfig::validate() const {
  if (!(weights.lambda_adv >= 0.0) || !std::isfinite(weights.lambda_adv))
    throw ConfigError("gan.lambda_adv must be finite and >= 0");
  if (rank == 0) throw ConfigError("gan.rank must be >= 1");
  if (!(lr_ratio > 0.0)) throw ConfigError("gan.lr_ratio must be > 0");
  if (!(max_logit > 0.0)) throw ConfigError("gan.max_logit must be > 0");
  if (!std::isfinite(adapter_scale)) throw ConfigError("gan.adapter_scale must be finite");
}

namespace {

class AdversarialHook final : public distill::TrainingHook {
 public:
  AdversarialHook(Discriminator disc, const GanConfig& gan, numerics::AdamConfig adam,
                  const diffusion::Schedule& schedule)
      : disc_(std::move(disc)), gan_(gan), schedule_(schedule) {
    adam.learning_rate *= gan.lr_ratio;
    adam_ = numerics::AdamState::for_size(disc_.trainable_count(), adam);
  }

  void on_step(const distill::ConsistencyModel& model, const distill::CdTerms& terms,
               const Eigen::MatrixXd& x0, std::span<const int> labels,
               numerics::MlpParams& student_grads, distill::TrainRecord& record) override {
    std::span<const int> cond;
    if (disc_.spec().conditional()) cond = labels;
    std::vector<double> t(terms.n_index.size());
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = schedule_.time(terms.n_index[j]);
    std::span<const double> real_t;
    if (gan_.real_time == RealTime::matched) real_t = t;
    const HingeLosses h = hinge_losses(disc_, x0, terms.student.f, cond, t, real_t);
    const double worst = std::max(h.real_logits.cwiseAbs().maxCoeff(), h.fake_logits.cwiseAbs().maxCoeff());
    if (worst > gan_.max_logit)
      throw NumericError("discriminator logit magnitude " + std::to_string(worst) + " exceeds " +
                         std::to_string(gan_.max_logit));
    record.generator_loss = h.values.generator;
    record.discriminator_loss = h.values.discriminator;
    const double lambda = gan_.weights.lambda_adv;
    if (lambda != 0.0) {
      const numerics::MlpParams g = distill::consistency_backward(model, terms.student, h.fake_cotangent);
      auto dst = student_grads.values();
      auto src = g.values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += lambda * src[i];
    }
    numerics::adam_step(adam_, disc_.trainable(), h.disc_grads);
  }

  Discriminator take() { return std::move(disc_); }

 private:
  Discriminator disc_;
  GanConfig gan_;
  const diffusion::Schedule& schedule_;
  numerics::AdamState adam_;
};

}  // namespace

ScottRun train_scott_full(const diffusion::ScoreModel& teacher,
                          const distill::DistillConfig& distill_config, const GanConfig& gan,
                          const diffusion::MixtureSpec& spec, const diffusion::Schedule& schedule,
                          RngStream& rng) {
  gan.validate();
  RngStream disc_rng = rng.substream(3);
  AdversarialHook hook(disc_init_from_teacher(teacher, gan.rank, disc_rng, gan.adapter_scale), gan,
                       distill_config.adam, schedule);
  ScottRun run;
  run.student = distill::train_consistency(teacher, distill_config, spec, schedule, rng, &hook);
  run.discriminator = hook.take();
  return run;
}

}  // namespace scott::adversarial
