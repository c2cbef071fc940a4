#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "scott/diffusion/mixture.hpp"
#include "scott/error.hpp"
#include "scott/sampling_metrics/metrics.hpp"
#include "scott/sampling_metrics/sampling.hpp"

using namespace scott;
using namespace scott::metrics;
using diffusion::MixtureSpec;
using diffusion::Schedule;
using diffusion::ScheduleKind;
using numerics::RngStream;

namespace {

Schedule cosine() { return Schedule::make(ScheduleKind::cosine, 64, 0.002, 1.0); }

std::vector<double> draws(RngStream& r, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * r.gaussian();
  return v;
}

// Integral of |F_a - F_b| by sweeping every breakpoint of both step functions.
double w1_by_cdf(std::vector<double> a, std::vector<double> b) {
  std::vector<double> pts = a;
  pts.insert(pts.end(), b.begin(), b.end());
  std::sort(pts.begin(), pts.end());
  auto ecdf = [](const std::vector<double>& s, double x) {
    double c = 0;
    for (double v : s) c += v <= x ? 1.0 : 0.0;
    return c / static_cast<double>(s.size());
  };
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i)
    total += std::abs(ecdf(a, pts[i]) - ecdf(b, pts[i])) * (pts[i + 1] - pts[i]);
  return total;
}

double sq_dist(const Eigen::MatrixXd& m, Eigen::Index i, const Eigen::MatrixXd& n, Eigen::Index j) {
  return (m.col(i) - n.col(j)).squaredNorm();
}

// Coverage straight from the definition, independent of the library's own
// brute-force path.
double coverage_oracle(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, std::size_t k) {
  std::size_t covered = 0;
  for (Eigen::Index i = 0; i < real.cols(); ++i) {
    std::vector<double> d;
    for (Eigen::Index j = 0; j < real.cols(); ++j)
      if (j != i) d.push_back(sq_dist(real, i, real, j));
    std::sort(d.begin(), d.end());
    const double r2 = d[k - 1];
    bool hit = false;
    for (Eigen::Index j = 0; j < fake.cols() && !hit; ++j) hit = sq_dist(real, i, fake, j) <= r2;
    covered += hit ? 1 : 0;
  }
  return static_cast<double>(covered) / static_cast<double>(real.cols());
}

Eigen::MatrixXd row(std::initializer_list<double> v) {
  Eigen::MatrixXd m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index j = 0;
  for (double x : v) m(0, j++) = x;
  return m;
}

distill::ConsistencyModel random_student(RngStream& r, const Schedule& s) {
  diffusion::ScoreModel b = diffusion::make_score_model(diffusion::ScoreModelSpec{}, 8, 3,
                                                        numerics::Activation::tanh, r);
  for (double& v : b.net.values()) v += 0.3 * r.gaussian();
  return distill::consistency_from_teacher(b, s.tau(), 0.5, 0.95);
}

}  // namespace

TEST_CASE("w1_1d: examples") {
  const std::vector<double> a{0.0, 1.0}, b{0.0, 2.0};
  CHECK(w1_1d(a, b) == 0.5);
  RngStream r(1);
  const std::vector<double> x = draws(r, 100, 1.0);
  CHECK(w1_1d(x, x) == 0.0);
  std::vector<double> shifted = x;
  for (double& v : shifted) v += 3.0;
  CHECK(w1_1d(x, shifted) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK_THROWS_AS(w1_1d({}, a), ContractError);
}

TEST_CASE("w1_1d: unequal sizes agree with the CDF integral") {
  RngStream r(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::vector<double> a = draws(r, 1 + r.uniform_index(30), 1.0);
    const std::vector<double> b = draws(r, 1 + r.uniform_index(30), 2.0);
    REQUIRE(w1_1d(a, b) == doctest::Approx(w1_by_cdf(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("w1_1d: metric axioms on random triples") {
  RngStream r(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + r.uniform_index(20);
    const auto a = draws(r, n, 1.0), b = draws(r, n, 1.5), c = draws(r, n, 0.5);
    REQUIRE(w1_1d(a, b) == w1_1d(b, a));
    REQUIRE(w1_1d(a, b) > 0.0);
    REQUIRE(w1_1d(a, c) <= w1_1d(a, b) + w1_1d(b, c) + 1e-12);
    std::vector<double> perm = a;
    std::reverse(perm.begin(), perm.end());
    REQUIRE(w1_1d(a, perm) == 0.0);
  }
}

TEST_CASE("sample_w1: sliced in 2-D, exact in 1-D") {
  RngStream r(4);
  const Eigen::MatrixXd a = r.gaussian_matrix(1, 50), b = r.gaussian_matrix(1, 50);
  RngStream s(1);
  const std::vector<double> va(a.data(), a.data() + 50), vb(b.data(), b.data() + 50);
  CHECK(sample_w1(a, b, s) == w1_1d(va, vb));
  // A pure shift of length 1 along x: every projection sees |cos theta|, mean 2/pi.
  const Eigen::MatrixXd p = r.gaussian_matrix(2, 200);
  Eigen::MatrixXd q = p;
  q.row(0).array() += 1.0;
  RngStream s2(2);
  CHECK(sliced_w1(p, q, 4096, s2) == doctest::Approx(2.0 / std::numbers::pi).epsilon(0.03));
  CHECK_THROWS_AS(sample_w1(a, p, s2), ContractError);
}

TEST_CASE("coverage: examples") {
  CHECK(coverage(row({0, 1, 2}), row({0.05}), 1) == doctest::Approx(2.0 / 3.0));
  RngStream r(5);
  const Eigen::MatrixXd real = r.gaussian_matrix(1, 40);
  CHECK(coverage(real, real, 3) == 1.0);
  CHECK(coverage(real, row({1e3}), 3) == 0.0);
  CHECK_THROWS_AS(coverage(row({0, 1, 2}), row({0.0}), 3), ContractError);
  CHECK_THROWS_AS(coverage(row({0, 1, 2}), row({0.0}), 0), ContractError);
}

TEST_CASE("coverage: equals the definition on 100 random instances") {
  RngStream r(6);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(r.uniform_index(3));
    const std::size_t n = 2 + r.uniform_index(49);
    const std::size_t k = 1 + r.uniform_index(std::min<std::size_t>(n - 1, 5));
    const Eigen::MatrixXd real = r.gaussian_matrix(d, static_cast<Eigen::Index>(n));
    // Rounding makes distance ties common, which exercises the closed ball.
    const Eigen::MatrixXd fake =
        (1.3 * r.gaussian_matrix(d, 1 + static_cast<Eigen::Index>(r.uniform_index(50))) * 4.0).array().round() / 4.0;
    const double expected = coverage_oracle(real, fake, k);
    REQUIRE(coverage(real, fake, k) == expected);
    REQUIRE(coverage_brute_force(real, fake, k) == expected);
  }
}

TEST_CASE("coverage: adding fake points never lowers it") {
  RngStream r(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd real = r.gaussian_matrix(1, 30);
    Eigen::MatrixXd fake = 2.0 * r.gaussian_matrix(1, 1);
    double prev = coverage(real, fake, 3);
    for (int add = 0; add < 10; ++add) {
      fake.conservativeResize(1, fake.cols() + 1);
      fake(0, fake.cols() - 1) = 2.0 * r.gaussian();
      const double now = coverage(real, fake, 3);
      REQUIRE(now >= prev);
      prev = now;
    }
  }
}

TEST_CASE("mode_weights: examples") {
  const MixtureSpec spec = MixtureSpec::three_mode();
  RngStream r(8);
  const auto drawn = diffusion::sample_mixture(spec, 100000, r);
  CHECK(mode_weights(drawn.x, spec).max_error < 0.01);

  const ModeWeights collapsed = mode_weights(Eigen::MatrixXd::Zero(1, 10), spec);
  CHECK(collapsed.fractions[1] == 1.0);
  CHECK(collapsed.max_error == doctest::Approx(2.0 / 3.0));

  const ModeWeights even = mode_weights(row({-1.5, 0.0, 1.5}), spec);
  for (double f : even.fractions) CHECK(f == doctest::Approx(1.0 / 3.0));
  CHECK(even.max_error == doctest::Approx(0.0).epsilon(1e-15));

  const MixtureSpec overlapping(std::vector<diffusion::MixtureComponent>{
      {Eigen::VectorXd::Constant(1, 0.0), 0.5, 0.5}, {Eigen::VectorXd::Constant(1, 1.0), 0.5, 0.5}});
  CHECK_THROWS_AS(mode_weights(row({0.0}), overlapping), DomainError);
  CHECK_THROWS_AS(mode_weights(Eigen::MatrixXd(1, 0), spec), ContractError);
}

TEST_CASE("eval_report: self-comparison sits at the Monte Carlo floor") {
  // Two independent n-sample empirical CDFs differ by roughly
  // N(0, 2F(1-F)/n), so E W1 ~ sqrt(2/n) sqrt(2/pi) * integral sqrt(F(1-F)).
  const MixtureSpec spec = MixtureSpec::three_mode();
  const std::size_t n = 4096;
  double integral = 0.0;
  const double dx = 1e-3;
  for (double x = -4.0; x < 4.0; x += dx) {
    const double F = diffusion::mixture_cdf(spec, x + 0.5 * dx);
    integral += std::sqrt(F * (1.0 - F)) * dx;
  }
  const double floor = std::sqrt(2.0 / n) * std::sqrt(2.0 / std::numbers::pi) * integral;
  double w1_sum = 0.0, cov_min = 1.0;
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    RngStream a(100 + seed), b(200 + seed), m(0);
    const auto x = diffusion::sample_mixture(spec, n, a);
    const auto y = diffusion::sample_mixture(spec, n, b);
    const sampling::MetricsReport rep = sampling::eval_report(x.x, y.x, spec, 3, m);
    w1_sum += rep.w1;
    cov_min = std::min(cov_min, rep.coverage);
    REQUIRE(rep.modes.has_value());
  }
  const double mean_w1 = w1_sum / seeds;
  MESSAGE("mean self W1 " << mean_w1 << ", predicted floor " << floor << ", min coverage " << cov_min);
  CHECK(mean_w1 == doctest::Approx(floor).epsilon(0.15));
  CHECK(mean_w1 > 0.02);
  // Same-distribution coverage tends to 1 - 2^-k, which clears 0.95 only from k = 5.
  CHECK(cov_min > 1.0 - std::pow(0.5, 3) - 0.02);
  RngStream a(7), b(8), m(0);
  const auto x = diffusion::sample_mixture(spec, n, a);
  const auto y = diffusion::sample_mixture(spec, n, b);
  CHECK(sampling::eval_report(x.x, y.x, spec, 5, m).coverage > 0.95);
}

TEST_CASE("eval_report: collapsed generator and bad input") {
  const MixtureSpec spec = MixtureSpec::three_mode();
  RngStream r(9), m(0);
  const auto ref = diffusion::sample_mixture(spec, 2048, r);
  const Eigen::MatrixXd collapsed = 0.01 * r.gaussian_matrix(1, 2048);
  const sampling::MetricsReport rep = sampling::eval_report(collapsed, ref.x, spec, 3, m);
  CHECK(rep.modes->max_error == doctest::Approx(2.0 / 3.0));
  // Only reals in the middle mode can be reached.
  CHECK(rep.coverage < 1.0 / 3.0);
  CHECK_THROWS_AS(sampling::eval_report(Eigen::MatrixXd(1, 0), ref.x, spec, 3, m), ContractError);
}

TEST_CASE("multistep_consistency_sample: one step is the student at T") {
  const Schedule s = cosine();
  RngStream r(10);
  const distill::ConsistencyModel model = random_student(r, s);
  const std::vector<std::size_t> seq{s.last()};
  RngStream a(3), b(3);
  const sampling::SampleBatch batch = sampling::multistep_consistency_sample(model, seq, s, a, 50);
  const double T = s.T();
  const Eigen::MatrixXd expected = distill::consistency_eval(model, b.gaussian_matrix(1, 50), {&T, 1});
  CHECK(batch.x == expected);
  CHECK(batch.steps == 1u);
}

TEST_CASE("multistep_consistency_sample: determinism and noise accounting") {
  const Schedule s = cosine();
  RngStream r(11);
  const distill::ConsistencyModel model = random_student(r, s);
  const auto two = sampling::default_sequence(s, 2, sampling::SequenceSpacing::uniform);
  // Grid point nearest T/2 (midpoint of [tau, T]).
  std::size_t mid = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (std::abs(s.time(i) - 0.501) < std::abs(s.time(mid) - 0.501)) mid = i;
  CHECK(two == std::vector<std::size_t>{s.last(), mid});

  RngStream a(4), b(4);
  CHECK(sampling::multistep_consistency_sample(model, two, s, a, 64).x ==
        sampling::multistep_consistency_sample(model, two, s, b, 64).x);

  for (std::size_t K : {1u, 2u, 4u, 8u}) {
    const auto seq = sampling::default_sequence(s, K, sampling::SequenceSpacing::uniform);
    RngStream used(5), counted(5);
    sampling::multistep_consistency_sample(model, seq, s, used, 32);
    for (std::size_t i = 0; i < K; ++i) counted.gaussian_matrix(1, 32);
    CHECK(used.counter() == counted.counter());
  }

  const std::vector<std::size_t> not_from_T{s.last() - 1, 3};
  const std::vector<std::size_t> increasing{s.last(), 3, 5};
  RngStream c(1);
  CHECK_THROWS_AS(sampling::multistep_consistency_sample(model, not_from_T, s, c, 4), ContractError);
  CHECK_THROWS_AS(sampling::multistep_consistency_sample(model, increasing, s, c, 4), ContractError);
  CHECK_THROWS_AS(sampling::multistep_consistency_sample(model, two, s, c, 0), ContractError);
}

TEST_CASE("default_sequence: spacings") {
  const Schedule s = cosine();
  for (auto spacing : {sampling::SequenceSpacing::uniform, sampling::SequenceSpacing::geometric}) {
    for (std::size_t K : {1u, 2u, 4u}) {
      const auto seq = sampling::default_sequence(s, K, spacing);
      REQUIRE(seq.size() == K);
      CHECK(seq.front() == s.last());
      for (std::size_t i = 1; i < K; ++i) CHECK(seq[i] < seq[i - 1]);
    }
  }
  const auto geo = sampling::default_sequence(s, 2, sampling::SequenceSpacing::geometric);
  const double target = std::sqrt(0.002);
  std::size_t best = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (std::abs(s.time(i) - target) < std::abs(s.time(best) - target)) best = i;
  CHECK(geo[1] == best);
  // The grid is too coarse near tau for eight geometric points.
  CHECK_THROWS_AS(sampling::default_sequence(s, 8, sampling::SequenceSpacing::geometric), ConfigError);
  CHECK(sampling::default_sequence(s, 8, sampling::SequenceSpacing::uniform).size() == 8u);
  CHECK_THROWS_AS(sampling::default_sequence(s, 0, sampling::SequenceSpacing::uniform), ConfigError);
  CHECK_THROWS_AS(sampling::default_sequence(s, 65, sampling::SequenceSpacing::uniform), ConfigError);
  CHECK(sampling::sequence_spacing_from_string("geometric") == sampling::SequenceSpacing::geometric);
  CHECK_THROWS_AS(sampling::sequence_spacing_from_string("log"), ConfigError);
}
