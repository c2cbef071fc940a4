#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "scott/diffusion/mixture.hpp"
#include "scott/diffusion/schedule.hpp"
#include "scott/diffusion/score_model.hpp"
#include "scott/diffusion/teacher.hpp"
#include "scott/error.hpp"
#include "support.hpp"

using namespace scott;
using namespace scott::diffusion;
using numerics::RngStream;

namespace {

// Direct cosine-schedule evaluation, independent of the library.
double cosine_alpha_bar(double t, double T, double s, double alpha_bar_min) {
  const double f0 = std::cos(s / (1 + s) * M_PI / 2);
  // Angle at T chosen so that alpha_bar(T) = alpha_bar_min.
  const double phi_T = std::acos(std::sqrt(alpha_bar_min) * f0);
  const double phi0 = s / (1 + s) * M_PI / 2;
  const double phi = phi0 + (phi_T - phi0) * t / T;
  const double c = std::cos(phi) / f0;
  return c * c;
}

double normal_cdf(double x, double m, double s) { return 0.5 * std::erfc(-(x - m) / (s * std::sqrt(2.0))); }

MixtureSpec single(double mean, double std) {
  return MixtureSpec::gaussian(Eigen::VectorXd::Constant(1, mean), std);
}

}  // namespace

TEST_CASE("schedule: cosine boundary, terminal and grid") {
  const Schedule s = Schedule::make(ScheduleKind::cosine, 64, 0.002, 1.0);
  CHECK(s.size() == 64u);
  CHECK(s.time(0) == 0.002);
  CHECK(s.time(63) == 1.0);
  CHECK(s.alpha_bar(0) >= 0.999);
  CHECK(s.alpha_bar(63) <= 5e-3);
  for (std::size_t i = 1; i < s.size(); ++i) {
    CHECK(s.time(i) - s.time(i - 1) == doctest::Approx((1.0 - 0.002) / 63).epsilon(1e-12));
    CHECK(s.alpha_bar(i) < s.alpha_bar(i - 1));
  }
}

TEST_CASE("schedule: cosine values match a direct evaluation") {
  const ScheduleParams p;
  const Schedule s = Schedule::make(p);
  for (std::size_t i = 0; i < s.size(); ++i)
    CHECK(s.alpha_bar(i) ==
          doctest::Approx(cosine_alpha_bar(s.time(i), p.T, p.cosine_offset, p.alpha_bar_min))
              .epsilon(1e-12));
}

TEST_CASE("schedule: VP identity, lambda and non-negative g^2") {
  for (auto kind : {ScheduleKind::cosine, ScheduleKind::linear_beta}) {
    const Schedule s = Schedule::make(kind, 128, 0.002, 1.0);
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(s.alpha_bar(i) + s.sigma(i) * s.sigma(i) == doctest::Approx(1.0).epsilon(1e-15));
      CHECK(s.lambda(i) == doctest::Approx(std::log(std::sqrt(s.alpha_bar(i)) / s.sigma(i))));
      CHECK(s.diffusion_g2(i) >= 0.0);
    }
  }
}

TEST_CASE("schedule: f and g^2 agree with finite differences of the curve") {
  const Schedule s = Schedule::make(ScheduleKind::cosine, 64, 0.002, 1.0);
  const double h = 1e-6;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    const double t = s.time(i);
    const double f_fd =
        (0.5 * std::log(s.alpha_bar_at(t + h)) - 0.5 * std::log(s.alpha_bar_at(t - h))) / (2 * h);
    CHECK(s.drift_f(i) == doctest::Approx(f_fd).epsilon(1e-6));
    const double sig2 = 1 - s.alpha_bar(i);
    const double dsig2 = -(s.alpha_bar_at(t + h) - s.alpha_bar_at(t - h)) / (2 * h);
    CHECK(s.diffusion_g2(i) == doctest::Approx(dsig2 - 2 * f_fd * sig2).epsilon(1e-6));
  }
}

TEST_CASE("schedule: construction errors") {
  CHECK_THROWS_AS(Schedule::make(ScheduleKind::cosine, 64, 1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(Schedule::make(ScheduleKind::cosine, 64, 2.0, 1.0), ConfigError);
  CHECK_THROWS_AS(Schedule::make(ScheduleKind::cosine, 7, 0.002, 1.0), ConfigError);
  // Non-monotone curve.
  CHECK_THROWS_AS(Schedule::from_curve(
                      "bump", [](double t) { return 0.5 + 0.4 * std::cos(6 * t); },
                      [](double t) { return -2.4 * std::sin(6 * t) / (0.5 + 0.4 * std::cos(6 * t)); },
                      16, 0.01, 1.0),
                  ConfigError);
}

TEST_CASE("schedule: grid lookup") {
  const Schedule s = Schedule::make(ScheduleKind::cosine, 64, 0.002, 1.0);
  CHECK(s.index_of(s.time(17)) == 17u);
  CHECK_THROWS_AS(s.index_of(0.5 * (s.time(3) + s.time(4))), DomainError);
  CHECK(s.nearest_index(s.time(9) + 1e-4) == 9u);
}

TEST_CASE("perturb: examples") {
  const Schedule s = Schedule::make(ScheduleKind::cosine, 64, 0.002, 1.0);
  Eigen::MatrixXd x0(1, 3);
  x0 << -1.0, 0.5, 2.0;
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 3);
  const Eigen::MatrixXd z = perturb(x0, std::size_t{30}, zero, s);
  CHECK((z - std::sqrt(s.alpha_bar(30)) * x0).norm() == 0.0);

  CHECK(s.sigma(0) <= 0.05);
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(1, 3);
  const Eigen::MatrixXd zt = perturb(x0, s.time(0), ones, s);
  CHECK((zt - x0).cwiseAbs().maxCoeff() <= 0.05 + 1e-3 * 2.0);

  // x0 = 0, eps = 1 returns sigma_t.
  const std::size_t i = s.nearest_index(0.5);
  const Eigen::MatrixXd pure = perturb(zero, i, ones, s);
  CHECK(pure(0, 0) == s.sigma(i));
  CHECK_THROWS_AS(perturb(x0, 0.123456, zero, s), DomainError);
}

TEST_CASE("sample_mixture: component proportions and moments") {
  RngStream r(31);
  const auto draws = sample_mixture(MixtureSpec::three_mode(), 100000, r);
  std::array<int, 3> counts{};
  for (int l : draws.labels) counts.at(l)++;
  for (int c : counts) CHECK(std::abs(c / 1e5 - 1.0 / 3.0) < 0.01);

  RngStream r2(32);
  const auto one = sample_mixture(single(0.0, 0.2), 100000, r2);
  const double mean = one.x.mean();
  const double sd = std::sqrt((one.x.array() - mean).square().mean());
  CHECK(std::abs(sd - 0.2) < 0.005);

  RngStream r3(1);
  const auto n1 = sample_mixture(MixtureSpec::three_mode(), 1, r3);
  CHECK(n1.x.rows() == 1);
  CHECK(n1.x.cols() == 1);
}

TEST_CASE("sample_mixture: deterministic per stream") {
  RngStream a(5), b(5);
  CHECK(sample_mixture(MixtureSpec::three_mode(), 100, a).x ==
        sample_mixture(MixtureSpec::three_mode(), 100, b).x);
}

TEST_CASE("mixture spec validation") {
  CHECK_THROWS_AS(MixtureSpec(std::vector<MixtureComponent>{}), ConfigError);
  CHECK_THROWS_AS(MixtureSpec({{Eigen::VectorXd::Zero(1), 0.2, 0.5}}), ConfigError);
  CHECK_THROWS_AS(MixtureSpec({{Eigen::VectorXd::Zero(1), -0.2, 1.0}}), ConfigError);
}

TEST_CASE("perturbed samples follow the closed-form marginal (KS < 0.01)") {
  const Schedule s = Schedule::make(ScheduleKind::cosine, 64, 0.002, 1.0);
  const MixtureSpec spec = MixtureSpec::three_mode();
  for (std::size_t i : {0u, 10u, 30u, 63u}) {
    RngStream r(100 + i);
    const auto x0 = sample_mixture(spec, 100000, r);
    const Eigen::MatrixXd eps = r.gaussian_matrix(1, 100000);
    Eigen::MatrixXd z = perturb(x0.x, i, eps, s);
    std::vector<double> v(z.data(), z.data() + z.size());
    std::sort(v.begin(), v.end());
    // Closed-form CDF written out component by component.
    const double a = s.alpha_bar(i);
    const double sd = std::sqrt(a * 0.04 + 1 - a);
    auto cdf = [&](double x) {
      double F = 0.0;
      for (double m : {-1.5, 0.0, 1.5}) F += normal_cdf(x, std::sqrt(a) * m, sd) / 3.0;
      return F;
    };
    const MixtureSpec marginal = diffused_marginal(spec, s.time(i), s);
    for (double x : {-2.0, -0.3, 0.0, 0.7, 2.5})
      CHECK(cdf(x) == doctest::Approx(mixture_cdf(marginal, x)).epsilon(1e-12));
    double ks = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double F = cdf(v[k]);
      ks = std::max({ks, std::abs(F - double(k) / v.size()), std::abs(F - double(k + 1) / v.size())});
    }
    CHECK(ks < 0.01);
  }
}

TEST_CASE("analytic_eps: zero at the mode and at the symmetric center") {
  const Schedule s = Schedule::make(ScheduleKind::cosine, 64, 0.002, 1.0);
  const Eigen::MatrixXd at_mean = Eigen::MatrixXd::Zero(1, 1);
  const std::vector<double> t0{s.time(0)};
  CHECK(analytic_eps(single(0.0, 0.2), at_mean, t0, s)(0, 0) == 0.0);
  // Single component: eps*(z) = sigma (z - sqrt(a) mu) / (a s^2 + sigma^2).
  Eigen::MatrixXd z(1, 1);
  z << 0.3;
  const double a = s.alpha_bar(0);
  const double expected = s.sigma(0) * 0.3 / (a * 0.04 + 1 - a);
  CHECK(analytic_eps(single(0.0, 0.2), z, t0, s)(0, 0) == doctest::Approx(expected).epsilon(1e-12));
  for (std::size_t i = 0; i < s.size(); i += 7) {
    const std::vector<double> t{s.time(i)};
    CHECK(analytic_eps(MixtureSpec::three_mode(), at_mean, t, s)(0, 0) == doctest::Approx(0.0).epsilon(1e-15));
  }
}

TEST_CASE("analytic_eps agrees with a finite-difference score at 1000 points") {
  const Schedule s = Schedule::make(ScheduleKind::cosine, 64, 0.002, 1.0);
  const MixtureSpec spec = MixtureSpec::three_mode();
  RngStream r(77);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t i = r.uniform_index(s.size());
    const double t = s.time(i);
    Eigen::MatrixXd z(1, 1);
    z << 3.0 * (2.0 * r.uniform() - 1.0);
    const double h = 1e-5 * std::max(1.0, s.sigma(i));
    Eigen::MatrixXd zp = z, zm = z;
    zp(0, 0) += h;
    zm(0, 0) -= h;
    const double score =
        (log_marginal_density(spec, zp, t, s)(0) - log_marginal_density(spec, zm, t, s)(0)) / (2 * h);
    const double fd = -s.sigma(i) * score;
    const std::vector<double> tv{t};
    const double got = analytic_eps(spec, z, tv, s)(0, 0);
    worst = std::max(worst, std::abs(got - fd) / std::max({std::abs(got), std::abs(fd), 1e-3}));
  }
  MESSAGE("worst relative error " << worst);
  CHECK(worst < 1e-5);
}

TEST_CASE("analytic_eps: finite far in the tails") {
  const Schedule s = Schedule::make(ScheduleKind::cosine, 64, 0.002, 1.0);
  Eigen::MatrixXd z(1, 3);
  z << -50.0, 40.0, 1e3;
  const std::vector<double> t{s.time(0)};
  CHECK(analytic_eps(MixtureSpec::three_mode(), z, t, s).allFinite());
}

TEST_CASE("cfg_eps: blend identities") {
  // One linear layer reading only the class-0 indicator: eps_cond = 1 for
  // class 0, eps_uncond = 0.
  ScoreModelSpec spec;
  spec.num_classes = 3;
  RngStream r(1);
  ScoreModel m = make_score_model(spec, 8, 1, numerics::Activation::tanh, r);
  m.net.weight(0).setZero();
  m.net.bias(0).setZero();
  m.net.weight(0)(0, spec.data_dim + spec.time_width()) = 1.0;

  Eigen::MatrixXd z(1, 2);
  z << 0.1, -0.4;
  const std::vector<double> t{0.5};
  CHECK(cfg_eps(m, z, CfgSetting{2.0, 0}, t).isApproxToConstant(2.0));
  CHECK(cfg_eps(m, z, CfgSetting{0.0, 0}, t) == model_eps(m, z, t));
  const std::vector<int> c0{0, 0};
  CHECK(cfg_eps(m, z, CfgSetting{1.0, 0}, t) == model_eps(m, z, t, c0));
  CHECK_THROWS_AS(CfgSetting({1.0, std::nullopt}).validate(), ConfigError);

  ScoreModel uncond = make_score_model(ScoreModelSpec{}, 8, 2, numerics::Activation::tanh, r);
  CHECK_THROWS_AS(cfg_eps(uncond, z, CfgSetting{1.0, 0}, t), ContractError);
}

TEST_CASE("cfg_eps: identities on a random conditional network") {
  ScoreModelSpec spec;
  spec.num_classes = 3;
  RngStream r(8);
  const ScoreModel m = make_score_model(spec, 16, 3, numerics::Activation::tanh, r);
  const Eigen::MatrixXd z = r.gaussian_matrix(1, 5);
  const std::vector<double> t{0.3};
  const std::vector<int> cls(5, 2);
  CHECK(cfg_eps(m, z, CfgSetting{0.0, 2}, t) == model_eps(m, z, t));
  CHECK(cfg_eps(m, z, CfgSetting{1.0, 2}, t) == model_eps(m, z, t, cls));
}

TEST_CASE("embed_inputs: layout and width") {
  ScoreModelSpec spec;
  spec.num_classes = 2;
  CHECK(spec.input_width() == 1 + 1 + 2);
  Eigen::MatrixXd z(1, 2);
  z << 0.5, -0.5;
  const std::vector<double> t{0.25, 1.0};
  const std::vector<int> labels{1, -1};
  const Eigen::MatrixXd in = embed_inputs(spec, z, t, labels);
  CHECK(in(0, 0) == 0.5);
  CHECK(in(1, 0) == -0.5);
  CHECK(in(1, 1) == 1.0);
  CHECK(in(3, 0) == 1.0);
  CHECK(in(2, 0) == 0.0);
  CHECK(in.col(1).tail(2).isZero(0.0));
}

TEST_CASE("dsm_loss: exact prediction gives zero, zero prediction gives d") {
  const Schedule s = Schedule::make(ScheduleKind::cosine, 64, 0.002, 1.0);
  RngStream r(3);
  const auto x0 = sample_mixture(MixtureSpec::three_mode(), 20000, r);
  const DsmBatch b = draw_dsm_batch(x0.x, {}, s, r);
  CHECK(dsm_loss_value(b.eps, b) == 0.0);

  ScoreModel zero = make_score_model(ScoreModelSpec{}, 8, 2, numerics::Activation::tanh, r);
  for (double& v : zero.net.values()) v = 0.0;
  const double loss = dsm_loss(zero, b).loss;
  // Mean of chi^2_1 over 2e4 draws: standard error sqrt(2 / 2e4) = 0.01.
  CHECK(std::abs(loss - 1.0) < 0.04);
}

TEST_CASE("dsm_loss: gradient matches central differences") {
  const Schedule s = Schedule::make(ScheduleKind::cosine, 64, 0.002, 1.0);
  RngStream r(9);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const bool tiny = trial == 0;
    ScoreModel m = make_score_model(ScoreModelSpec{}, 4, tiny ? 1 : 3, numerics::Activation::tanh, r);
    for (double& v : m.net.values()) v += 0.2 * r.gaussian();
    const auto x0 = sample_mixture(MixtureSpec::three_mode(), 8, r);
    const DsmBatch b = draw_dsm_batch(x0.x, {}, s, r);
    const DsmLoss l = dsm_loss(m, b);
    auto f = [&](std::span<const double> theta) {
      ScoreModel q = m;
      std::copy(theta.begin(), theta.end(), q.net.values().begin());
      return dsm_loss(q, b).loss;
    };
    const std::vector<double> theta(m.net.values().begin(), m.net.values().end());
    worst = std::max(worst, testing::relative_error(l.grads.values(), testing::fd_gradient(f, theta)));
  }
  MESSAGE("worst relative error " << worst);
  CHECK(worst < 1e-4);
}

TEST_CASE("train_teacher: zero iterations returns the initialization") {
  const Schedule s = Schedule::make(ScheduleKind::cosine, 64, 0.002, 1.0);
  TeacherConfig c;
  c.iterations = 0;
  RngStream r1(4), r2(4);
  const TeacherResult t = train_teacher(c, MixtureSpec::three_mode(), s, r1);
  RngStream init = r2.substream(0);
  ScoreModelSpec spec;
  const ScoreModel fresh = make_score_model(spec, c.hidden_width, c.num_layers, c.activation, init);
  CHECK(t.model == fresh);
  CHECK(t.ema == fresh);
  CHECK(t.curve.empty());
}

TEST_CASE("train_teacher: deterministic and loss decreases") {
  const Schedule s = Schedule::make(ScheduleKind::cosine, 64, 0.002, 1.0);
  TeacherConfig c;
  c.iterations = 600;
  c.log_every = 100;
  RngStream r1(4), r2(4);
  const TeacherResult a = train_teacher(c, MixtureSpec::three_mode(), s, r1);
  const TeacherResult b = train_teacher(c, MixtureSpec::three_mode(), s, r2);
  CHECK(a.model == b.model);
  CHECK(a.ema == b.ema);
  REQUIRE(a.curve.size() == 6u);
  CHECK(a.curve.back().loss < a.curve.front().loss);
}
