#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scott/diffusion/mixture.hpp"
#include "scott/diffusion/schedule.hpp"
#include "scott/diffusion/score_model.hpp"
#include "scott/error.hpp"
#include "scott/numerics/mlp.hpp"
#include "scott/numerics/optim.hpp"
#include "scott/numerics/rng.hpp"
#include "scott/solvers/solvers.hpp"

namespace scott::distill {

using diffusion::Schedule;
using diffusion::ScoreModel;
using numerics::RngStream;

struct HeadCoefficients {
  double c_skip = 1.0;
  double c_out = 0.0;
};

/// c_skip = s^2 / ((t - tau)^2 + s^2), c_out = s (t - tau) / sqrt(s^2 + t^2)
/// with s = sigma_data. DomainError for t < tau.
HeadCoefficients head_coefficients(double t, double tau, double sigma_data);

/// f = c_skip(t) z + c_out(t) raw, column by column. Columns at t == tau
/// return z unchanged (bit for bit, whatever raw holds).
Eigen::MatrixXd consistency_head(const Eigen::MatrixXd& raw, const Eigen::MatrixXd& z,
                                 std::span<const double> t, double tau, double sigma_data);

/// Student: a score-model-shaped backbone read through the consistency head.
/// `online` is theta, `target` the EMA copy theta^- (never differentiated).
struct ConsistencyModel {
  ScoreModel online;
  ScoreModel target;
  double sigma_data = 0.5;
  double tau = 0.002;
  double ema_rate = 0.95;

  friend bool operator==(const ConsistencyModel&, const ConsistencyModel&) = default;
};

/// Student initialised as a copy of the teacher backbone (theta = theta^-).
ConsistencyModel consistency_from_teacher(const ScoreModel& teacher, double tau,
                                          double sigma_data, double ema_rate);

/// f_theta(z, t) with the online (or target) weights.
Eigen::MatrixXd consistency_eval(const ConsistencyModel& model, const Eigen::MatrixXd& z,
                                 std::span<const double> t, bool use_target = false);

/// Forward pass through the online weights, recorded for backward.
struct ConsistencyForward {
  Eigen::MatrixXd f;
  numerics::MlpTape tape;
  std::vector<double> c_out;  // per column
};

ConsistencyForward consistency_forward(const ConsistencyModel& model, const Eigen::MatrixXd& z,
                                       std::span<const double> t);

/// Parameter gradient of <cotangent, f> with respect to the online weights.
numerics::MlpParams consistency_backward(const ConsistencyModel& model,
                                         const ConsistencyForward& forward,
                                         const Eigen::MatrixXd& f_cotangent);

enum class Distance { squared_l2, l1 };

std::string to_string(Distance d);
Distance distance_from_string(const std::string& name);

struct DistillConfig {
  /// Grid skip k: t_m = t_{n-k}. Zero selects ceil(24 / 1000 * N).
  std::size_t skip = 0;
  solvers::SolverConfig solver{solvers::SolverFamily::ddim, 0.0, 3};
  Distance distance = Distance::squared_l2;
  std::size_t iterations = 4000;
  std::size_t batch_size = 256;
  numerics::AdamConfig adam{1e-3};
  double ema_rate = 0.95;
  double sigma_data = 0.5;
  /// Teacher guidance scale during distillation.
  double cfg_scale = 0.0;
  /// Start the student from the teacher weights (otherwise fresh init).
  bool init_from_teacher = true;
  std::size_t log_every = 100;

  void validate(const Schedule& schedule) const;
  std::size_t effective_skip(const Schedule& schedule) const;
};

/// 0-based sub-interval start: m = n - k, clamped at the boundary index 0.
std::size_t pick_subinterval(std::size_t n, const DistillConfig& config, const Schedule& schedule);

/// Everything one CD evaluation produces. `student` holds the online forward
/// pass on z_{t_n}; its output is the generator sample used by the
/// adversarial term.
struct CdTerms {
  double loss = 0.0;
  numerics::MlpParams grads;
  ConsistencyForward student;
  std::vector<std::size_t> n_index, m_index;
  Eigen::MatrixXd z_n;       // noisy input at t_n
  Eigen::MatrixXd target;    // f_{theta^-}(z_hat_{t_m}, t_m)
};

/// Consistency-distillation loss on a batch of clean samples. Draw order on
/// `rng`: B indices n (uniform over 1..N-1), the d x B noise matrix, then
/// whatever the teacher solve consumes.
CdTerms cd_terms(const ConsistencyModel& model, const diffusion::EpsFn& teacher,
                 const Eigen::MatrixXd& x0, std::span<const int> labels,
                 const Schedule& schedule, const DistillConfig& config, RngStream& rng);

/// Same loss with explicit indices and noise (no draws except the solve).
CdTerms cd_terms(const ConsistencyModel& model, const diffusion::EpsFn& teacher,
                 const Eigen::MatrixXd& x0, std::span<const int> labels,
                 std::span<const std::size_t> n_index, const Eigen::MatrixXd& eps,
                 const Schedule& schedule, const DistillConfig& config, RngStream& rng);

/// Explicit target indices; m == n gives an identity solve.
CdTerms cd_terms(const ConsistencyModel& model, const diffusion::EpsFn& teacher,
                 const Eigen::MatrixXd& x0, std::span<const int> labels,
                 std::span<const std::size_t> n_index, std::span<const std::size_t> m_index,
                 const Eigen::MatrixXd& eps, const Schedule& schedule, const DistillConfig& config,
                 RngStream& rng);

struct CdLoss {
  double loss = 0.0;
  numerics::MlpParams grads;
};

CdLoss cd_loss(const ConsistencyModel& model, const diffusion::EpsFn& teacher,
               const Eigen::MatrixXd& x0, std::span<const int> labels, const Schedule& schedule,
               const DistillConfig& config, RngStream& rng);

/// Logged per interval: means of each term since the previous record.
struct TrainRecord {
  std::size_t iteration = 0;
  double cd_loss = 0.0;
  double generator_loss = 0.0;
  double discriminator_loss = 0.0;
};

struct StudentCheckpoint {
  ConsistencyModel model;
  DistillConfig config;
  std::vector<TrainRecord> curve;
  std::uint64_t teacher_fingerprint = 0;
  std::size_t iterations_done = 0;
};

/// Raised when a loss or gradient turns non-finite; carries the state before
/// the failing iteration.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, StudentCheckpoint last_good)
      : NumericError(what), last_good_(std::move(last_good)) {}
  const StudentCheckpoint& last_good() const noexcept { return last_good_; }

 private:
  StudentCheckpoint last_good_;
};

/// Per-iteration extension point of the training loop (the adversarial term
/// plugs in here). `student_grads` already holds the CD gradient.
class TrainingHook {
 public:
  virtual ~TrainingHook() = default;
  virtual void on_step(const ConsistencyModel& model, const CdTerms& terms,
                       const Eigen::MatrixXd& x0, std::span<const int> labels,
                       numerics::MlpParams& student_grads, TrainRecord& record) = 0;
};

/// The distillation loop: sample data, CD loss, optional hook, Adam on
/// theta, then the EMA update of theta^-. Substreams of `rng`: 0 student
/// init (when not copied from the teacher), 1 data, 2 times, noise and
/// teacher-solver noise; 3 and up are left to the hook.
StudentCheckpoint train_consistency(const ScoreModel& teacher, const DistillConfig& config,
                                    const diffusion::MixtureSpec& spec, const Schedule& schedule,
                                    RngStream& rng, TrainingHook* hook = nullptr);

StudentCheckpoint train_scott_cd_only(const ScoreModel& teacher, const DistillConfig& config,
                                      const diffusion::MixtureSpec& spec,
                                      const Schedule& schedule, RngStream& rng);

}  // namespace scott::distill
