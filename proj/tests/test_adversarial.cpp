#include <doctest.h>

#include <cmath>
#include <vector>

#include "scott/adversarial/adversarial.hpp"
#include "scott/diffusion/mixture.hpp"
#include "scott/error.hpp"
#include "support.hpp"

using namespace scott;
using namespace scott::adversarial;
using diffusion::MixtureSpec;
using diffusion::Schedule;
using diffusion::ScheduleKind;
using diffusion::ScoreModel;
using diffusion::ScoreModelSpec;

namespace {

Schedule cosine() { return Schedule::make(ScheduleKind::cosine, 64, 0.002, 1.0); }

ScoreModel backbone(RngStream& r, std::size_t width, std::size_t layers) {
  return diffusion::make_score_model(ScoreModelSpec{}, width, layers, numerics::Activation::tanh, r);
}

// Plain forward through the teacher's hidden layers, for the encoder/no-op checks.
Eigen::MatrixXd hidden_features(const ScoreModel& m, const Eigen::MatrixXd& z, double t) {
  Eigen::MatrixXd h(z.rows() + 1, z.cols());
  h.topRows(z.rows()) = z;
  h.bottomRows(1).setConstant(2.0 * t - 1.0);  // T = 1
  for (std::size_t l = 0; l + 1 < m.net.num_layers(); ++l)
    h = ((m.net.weight(l) * h).colwise() + m.net.bias(l)).array().tanh().matrix();
  return h;
}

void randomize(Discriminator& d, RngStream& r, double s) {
  for (double& v : d.trainable()) v = s * r.gaussian();
}

}  // namespace

TEST_CASE("disc_init_from_teacher: zero adapters leave the decoder on its base weights") {
  RngStream r(1);
  const ScoreModel teacher = backbone(r, 16, 4);
  RngStream dr(2);
  const Discriminator d = disc_init_from_teacher(teacher, 4, dr);
  REQUIRE(d.encoder().size() == 2u);
  REQUIRE(d.decoder().size() == 1u);  // the output layer is dropped
  for (std::size_t i = 0; i < d.decoder().size(); ++i) {
    CHECK(d.adapter_a(i).isZero(0.0));
    CHECK(d.effective_weight(i) == d.decoder()[i].weight);
  }
  CHECK(d.encoder()[0].weight == teacher.net.weight(0));
  CHECK(d.encoder()[1].weight == teacher.net.weight(1));
  CHECK(d.decoder()[0].weight == teacher.net.weight(2));
  // Logit equals head applied to the teacher's last hidden layer.
  const Eigen::MatrixXd z = r.gaussian_matrix(1, 7);
  const std::vector<double> t{0.4};
  const DiscForward f = disc_forward(d, z, t);
  const Eigen::MatrixXd h = hidden_features(teacher, z, 0.4);
  const Eigen::VectorXd expected = (d.head_weight().transpose() * h).transpose().array() + d.head_bias();
  CHECK((f.logits - expected).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("disc_init_from_teacher: trainable fraction and rank limits") {
  RngStream r(3);
  const ScoreModel teacher = backbone(r, 64, 4);
  RngStream dr(4);
  const Discriminator d = disc_init_from_teacher(teacher, 4, dr);
  // Four linear layers: two encode, one 64x64 decodes with A (4x64) and B (64x4); head 64 + 1.
  CHECK(d.trainable_count() == (4u * 64 + 64 * 4) + 65u);
  CHECK(d.trainable_fraction() < 0.10);
  MESSAGE("trainable fraction " << d.trainable_fraction());

  RngStream dr2(4);
  CHECK_THROWS_AS(disc_init_from_teacher(teacher, 0, dr2), ConfigError);
  CHECK_THROWS_AS(disc_init_from_teacher(teacher, 65, dr2), ConfigError);
  CHECK_NOTHROW(disc_init_from_teacher(teacher, 64, dr2));
  const ScoreModel shallow = backbone(r, 8, 1);
  CHECK_THROWS_AS(disc_init_from_teacher(shallow, 1, dr2), ConfigError);
}

TEST_CASE("disc_forward: purity and zero head") {
  RngStream r(5);
  const ScoreModel teacher = backbone(r, 16, 4);
  RngStream dr(6);
  Discriminator d = disc_init_from_teacher(teacher, 2, dr);
  randomize(d, r, 0.3);
  const Eigen::MatrixXd z = r.gaussian_matrix(1, 9);
  const std::vector<double> t{0.0};
  CHECK(disc_forward(d, z, t).logits == disc_forward(d, z, t).logits);

  for (std::size_t i = 0; i < d.decoder().size(); ++i) d.adapter_a(i).setZero();
  d.head_weight().setZero();
  d.head_bias() = 0.0;
  CHECK(disc_forward(d, z, t).logits.isZero(0.0));

  const std::vector<int> labels(9, 0);
  CHECK_THROWS_AS(disc_forward(d, z, t, labels), ContractError);
  CHECK_THROWS_AS(disc_forward(d, r.gaussian_matrix(2, 9), t), ContractError);
}

TEST_CASE("disc_backward: gradients match central differences on 100 random instances") {
  RngStream r(7);
  double worst_p = 0.0, worst_z = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t layers = 2 + r.uniform_index(3);
    const ScoreModel teacher = backbone(r, 4 + r.uniform_index(4), layers);
    RngStream dr = r.substream(trial);
    Discriminator d = disc_init_from_teacher(teacher, 1 + r.uniform_index(2), dr);
    randomize(d, r, 0.5);
    const Eigen::MatrixXd z = r.gaussian_matrix(1, 5);
    std::vector<double> t(5);
    for (double& v : t) v = r.uniform();
    const Eigen::VectorXd cot = Eigen::VectorXd::NullaryExpr(5, [&] { return r.gaussian(); });
    const DiscGradient g = disc_backward(d, disc_forward(d, z, t), cot);

    const std::vector<double> phi(d.trainable().begin(), d.trainable().end());
    auto by_phi = [&](std::span<const double> p) {
      Discriminator q = d;
      std::copy(p.begin(), p.end(), q.trainable().begin());
      return disc_forward(q, z, t).logits.dot(cot);
    };
    worst_p = std::max(worst_p, testing::relative_error(g.trainable, testing::fd_gradient(by_phi, phi)));

    const std::vector<double> zv(z.data(), z.data() + z.size());
    auto by_z = [&](std::span<const double> p) {
      const Eigen::MatrixXd zz = Eigen::Map<const Eigen::MatrixXd>(p.data(), 1, 5);
      return disc_forward(d, zz, t).logits.dot(cot);
    };
    const std::vector<double> gz(g.z.data(), g.z.data() + g.z.size());
    worst_z = std::max(worst_z, testing::relative_error(gz, testing::fd_gradient(by_z, zv)));
  }
  MESSAGE("worst relative error: params " << worst_p << ", inputs " << worst_z);
  CHECK(worst_p < 1e-4);
  CHECK(worst_z < 1e-4);
}

TEST_CASE("hinge_values: examples") {
  const std::vector<double> two{2.0}, minus_two{-2.0}, zero{0.0}, half{-0.5};
  CHECK(hinge_values(two, minus_two).discriminator == 0.0);
  CHECK(hinge_values(zero, zero).discriminator == 2.0);
  CHECK(hinge_values(zero, half).generator == 0.5);
  CHECK_THROWS_AS(hinge_values({}, zero), ContractError);
  CHECK_THROWS_AS(hinge_values(zero, {}), ContractError);
}

TEST_CASE("hinge_values: non-negative, zero exactly on the saturated side") {
  RngStream r(8);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> real(1 + r.uniform_index(5)), fake(1 + r.uniform_index(5));
    for (double& v : real) v = 3.0 * r.gaussian();
    for (double& v : fake) v = 3.0 * r.gaussian();
    const double ld = hinge_values(real, fake).discriminator;
    bool saturated = true;
    for (double v : real) saturated = saturated && v >= 1.0;
    for (double v : fake) saturated = saturated && v <= -1.0;
    REQUIRE(ld >= 0.0);
    REQUIRE((ld == 0.0) == saturated);
  }
}

TEST_CASE("hinge_losses: player separation and gradient values") {
  RngStream r(9);
  const ScoreModel teacher = backbone(r, 8, 4);
  RngStream dr(10);
  Discriminator d = disc_init_from_teacher(teacher, 2, dr);
  randomize(d, r, 0.4);
  const Eigen::MatrixXd real = r.gaussian_matrix(1, 6), fake = r.gaussian_matrix(1, 5);
  std::vector<double> t(5);
  for (double& v : t) v = 0.1 + 0.8 * r.uniform();
  const HingeLosses h = hinge_losses(d, real, fake, {}, t);

  // Discriminator gradient is the derivative of L_D alone (FD on phi).
  const std::vector<double> phi(d.trainable().begin(), d.trainable().end());
  auto ld = [&](std::span<const double> p) {
    Discriminator q = d;
    std::copy(p.begin(), p.end(), q.trainable().begin());
    return hinge_losses(q, real, fake, {}, t).values.discriminator;
  };
  CHECK(testing::relative_error(h.disc_grads, testing::fd_gradient(ld, phi)) < 1e-6);

  // Fake cotangent is the derivative of L_G alone (FD on the fakes).
  const std::vector<double> fv(fake.data(), fake.data() + fake.size());
  auto lg = [&](std::span<const double> p) {
    const Eigen::MatrixXd f = Eigen::Map<const Eigen::MatrixXd>(p.data(), 1, 5);
    return hinge_losses(d, real, f, {}, t).values.generator;
  };
  const std::vector<double> cv(h.fake_cotangent.data(), h.fake_cotangent.data() + h.fake_cotangent.size());
  CHECK(testing::relative_error(cv, testing::fd_gradient(lg, fv)) < 1e-6);

  // Constant logit +5: reals sit on the flat side, fakes pay 6 each, and the
  // fakes receive no signal since the logit ignores z.
  Discriminator sat = d;
  for (std::size_t i = 0; i < sat.decoder().size(); ++i) sat.adapter_a(i).setZero();
  sat.head_weight().setZero();
  sat.head_bias() = 5.0;
  const HingeLosses hs = hinge_losses(sat, real, fake, {}, t);
  CHECK(hs.values.discriminator == 6.0);
  CHECK(hs.fake_cotangent.isZero(0.0));
  CHECK_THROWS_AS(hinge_losses(d, Eigen::MatrixXd(1, 0), fake, {}, t), ContractError);
}

TEST_CASE("hinge_losses: real samples at zero or at given times") {
  RngStream r(12);
  const ScoreModel teacher = backbone(r, 8, 4);
  RngStream dr(13);
  Discriminator d = disc_init_from_teacher(teacher, 2, dr);
  randomize(d, r, 0.4);
  const Eigen::MatrixXd real = r.gaussian_matrix(1, 4), fake = r.gaussian_matrix(1, 4);
  const std::vector<double> t{0.1, 0.4, 0.7, 0.95};
  const double zero = 0.0;
  CHECK(hinge_losses(d, real, fake, {}, t).real_logits ==
        disc_forward(d, real, {&zero, 1}).logits);
  const HingeLosses m = hinge_losses(d, real, fake, {}, t, t);
  CHECK(m.real_logits == disc_forward(d, real, t).logits);
  CHECK(m.fake_logits == disc_forward(d, fake, t).logits);
  // Same points at the same times on both sides: the hinge sees identical logits.
  const HingeLosses same = hinge_losses(d, real, real, {}, t, t);
  CHECK(same.real_logits == same.fake_logits);

  CHECK(real_time_from_string("zero") == RealTime::zero);
  CHECK(to_string(real_time_from_string("matched")) == "matched");
  CHECK_THROWS_AS(real_time_from_string("late"), ConfigError);
}

TEST_CASE("scott_loss: examples") {
  CHECK(scott_loss(1.0, 0.5, LossWeights{0.4}) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(scott_loss(1.0, 0.5, LossWeights{0.0}) == 1.0);
  CHECK(scott_loss(0.7, 0.0, LossWeights{0.4}) == 0.7);
}

TEST_CASE("gan config validation") {
  GanConfig g;
  CHECK_NOTHROW(g.validate());
  g.weights.lambda_adv = -0.1;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g.weights.lambda_adv = 0.4;
  g.rank = 0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g.rank = 4;
  g.lr_ratio = 0.0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
}

TEST_CASE("train_scott_full: lambda 0 matches CD-only bit for bit; encoder stays frozen") {
  const Schedule s = cosine();
  RngStream r(11);
  const ScoreModel teacher = backbone(r, 16, 4);
  distill::DistillConfig c;
  c.iterations = 40;
  c.batch_size = 32;
  c.log_every = 10;
  c.solver.eta = 0.2;
  GanConfig off;
  off.weights.lambda_adv = 0.0;
  off.rank = 2;
  RngStream a(5), b(5);
  const ScottRun full = train_scott_full(teacher, c, off, MixtureSpec::three_mode(), s, a);
  const distill::StudentCheckpoint plain = distill::train_scott_cd_only(teacher, c, MixtureSpec::three_mode(), s, b);
  CHECK(full.student.model == plain.model);

  GanConfig on = off;
  on.weights.lambda_adv = 0.4;
  RngStream c1(5), c2(5);
  const ScottRun x = train_scott_full(teacher, c, on, MixtureSpec::three_mode(), s, c1);
  const ScottRun y = train_scott_full(teacher, c, on, MixtureSpec::three_mode(), s, c2);
  CHECK(x.student.model == y.student.model);
  CHECK(x.discriminator == y.discriminator);
  CHECK_FALSE(x.student.model == plain.model);
  for (std::size_t l = 0; l < x.discriminator.encoder().size(); ++l) {
    CHECK(x.discriminator.encoder()[l].weight == teacher.net.weight(l));
    CHECK(x.discriminator.encoder()[l].bias == teacher.net.bias(l));
  }
  for (std::size_t i = 0; i < x.discriminator.decoder().size(); ++i)
    CHECK(x.discriminator.decoder()[i].weight == teacher.net.weight(i + x.discriminator.encoder().size()));
  for (const auto& rec : x.student.curve) {
    CHECK(std::isfinite(rec.generator_loss));
    CHECK(std::isfinite(rec.discriminator_loss));
  }
}

TEST_CASE("train_scott_full: logit blow-up aborts") {
  const Schedule s = cosine();
  RngStream r(12);
  const ScoreModel teacher = backbone(r, 8, 4);
  distill::DistillConfig c;
  c.iterations = 5;
  c.batch_size = 8;
  GanConfig g;
  g.rank = 2;
  g.max_logit = 1e-12;
  RngStream run(1);
  CHECK_THROWS(train_scott_full(teacher, c, g, MixtureSpec::three_mode(), s, run));
}
