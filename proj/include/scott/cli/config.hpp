#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "scott/adversarial/adversarial.hpp"
#include "scott/diffusion/mixture.hpp"
#include "scott/diffusion/schedule.hpp"
#include "scott/diffusion/teacher.hpp"
#include "scott/distill/distill.hpp"
#include "scott/sampling_metrics/sampling.hpp"
#include "scott/solvers/solvers.hpp"

namespace scott::cli {

enum class DataKind { three_mode, gaussian };

std::string to_string(DataKind k);
DataKind data_kind_from_string(const std::string& v);

struct DataConfig {
  DataKind kind = DataKind::three_mode;
  double mean = 0.5;  // gaussian only
  double std = 0.5;

  diffusion::MixtureSpec spec() const;
};

struct EvalConfig {
  std::size_t samples = 2048;
  std::size_t k = 3;
  std::vector<std::size_t> steps{1, 2, 4};
  sampling::SequenceSpacing spacing = sampling::SequenceSpacing::uniform;
  std::vector<std::uint64_t> seeds{0};
};

/// solver-bench: endpoint W1 of a full T -> tau solve made of outer steps of
/// `skip` grid intervals, each split into `substeps` sub-steps, for every
/// (eta, substeps) pair.
enum class BenchEps { analytic, teacher };

std::string to_string(BenchEps e);
BenchEps bench_eps_from_string(const std::string& v);

struct BenchConfig {
  BenchEps eps = BenchEps::analytic;
  std::vector<double> etas{0.0, 0.2};
  std::vector<std::size_t> substeps{1, 3};
  std::size_t trajectories = 10000;
  std::size_t skip = 0;  // 0 selects the distillation skip
};

/// order-check: single-Gaussian problem on its own fine grid.
struct OrderConfig {
  std::vector<std::string> families{"dpm-sde1", "pf-euler"};
  std::vector<std::size_t> counts{8, 16, 32, 64};
  std::size_t trajectories = 20000;
  std::size_t grid_size = 1025;
  double mean = 0.5;
  double std = 0.5;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "scott-out";
  DataConfig data;
  diffusion::ScheduleParams schedule;
  diffusion::TeacherConfig teacher;
  distill::DistillConfig distill;
  bool gan_enabled = false;
  adversarial::GanConfig gan;
  EvalConfig eval;
  BenchConfig bench;
  OrderConfig order;

  void validate() const;
  diffusion::Schedule make_schedule() const;
};

/// Parses `key = value` lines ('#' starts a comment). Unknown keys, bad
/// values and missing required keys raise ConfigError naming the key.
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides = {});

/// Reads the file (IoError if unreadable), then applies `key=value`
/// overrides in order.
ExperimentConfig parse_config_file(const std::string& path,
                                   const std::vector<std::string>& overrides = {});

/// Canonical `key = value` dump of every key, in registry order. Parsing
/// the dump reproduces the config.
std::string dump_config(const ExperimentConfig& config);

/// Canonical dump restricted to keys under the given section prefixes
/// (e.g. {"data.", "schedule."}); `seed` is included when asked for.
std::string dump_sections(const ExperimentConfig& config, const std::vector<std::string>& prefixes);

/// FNV-1a of the sections that determine the teacher (seed, data, schedule,
/// teacher) and of the whole config.
std::uint64_t teacher_config_hash(const ExperimentConfig& config);
std::uint64_t config_hash(const ExperimentConfig& config);

std::string format_double(double v);
std::string hex64(std::uint64_t v);

}  // namespace scott::cli
