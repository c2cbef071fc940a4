#include "scott/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <ostream>

#include <CLI11.hpp>

#include "scott/adversarial/adversarial.hpp"
#include "scott/cli/checkpoint.hpp"
#include "scott/cli/report.hpp"
#include "scott/diffusion/teacher.hpp"
#include "scott/distill/distill.hpp"
#include "scott/error.hpp"
#include "scott/numerics/hash.hpp"
#include "scott/sampling_metrics/sampling.hpp"
#include "scott/solvers/order.hpp"

namespace scott::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

// Stream ids per command so that commands never share random numbers.
enum : std::uint64_t {
  kStreamTeacher = 1,
  kStreamDistill = 2,
  kStreamSample = 3,
  kStreamReference = 4,
  kStreamBench = 5,
  kStreamOrder = 6,
};

fs::path out_path(const ExperimentConfig& c, const std::string& name) {
  return fs::path(c.output_dir) / name;
}

void ensure_out_dir(const ExperimentConfig& c) {
  std::error_code ec;
  fs::create_directories(c.output_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + c.output_dir + "': " + ec.message());
}

std::uint64_t student_config_hash(const ExperimentConfig& c) {
  return numerics::fnv1a(
      dump_sections(c, {"seed", "data.", "schedule.", "teacher.", "distill.", "solver.", "gan."}));
}

std::string read_dependency(const ExperimentConfig& c, const std::string& name,
                            const std::string& producer) {
  const fs::path p = out_path(c, name);
  if (!fs::exists(p))
    throw DependencyError("missing " + p.string() + " (run '" + producer + "' first)");
  return read_file(p.string());
}

class Run {
 public:
  Run(std::string command, const ExperimentConfig& config)
      : command_(std::move(command)), config_(config), start_(std::chrono::steady_clock::now()) {
    ensure_out_dir(config_);
  }

  void write(const std::string& name, const std::string& contents) {
    write_file(out_path(config_, name).string(), contents);
    outputs_.push_back(name);
  }

  void finish() {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::string m;
    m += "# run.command = " + command_ + "\n";
    m += "# run.version = " + std::string(kVersion) + "\n";
    m += "# run.compiler = " + std::string(__VERSION__) + "\n";
    m += "# run.config_hash = " + hex64(config_hash(config_)) + "\n";
    m += "# run.seed = " + std::to_string(config_.seed) + "\n";
    m += "# run.wall_time_s = " + format_double(secs) + "\n";
    std::string outs;
    for (const auto& o : outputs_) outs += (outs.empty() ? "" : ",") + o;
    m += "# run.outputs = " + outs + "\n";
    m += dump_config(config_);
    write_file(out_path(config_, command_ + ".manifest").string(), m);
  }

 private:
  std::string command_;
  const ExperimentConfig& config_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> outputs_;
};

CheckpointMeta meta_for(const ExperimentConfig& c, const std::string& kind, std::uint64_t hash) {
  return {kind, c.seed, hash, schedule_summary(c.schedule)};
}

diffusion::ScoreModel load_teacher(const ExperimentConfig& c) {
  TeacherFile t = read_teacher(read_dependency(c, "teacher.ckpt", "train-teacher"));
  if (t.meta.config_hash != teacher_config_hash(c))
    throw DependencyError("teacher.ckpt was trained with a different data/schedule/teacher config "
                          "(hash " + hex64(t.meta.config_hash) + ", expected " +
                          hex64(teacher_config_hash(c)) + ")");
  return t.model;
}

distill::StudentCheckpoint load_student(const ExperimentConfig& c) {
  StudentFile s = read_student(read_dependency(c, "student.ckpt", "distill"));
  if (s.meta.config_hash != student_config_hash(c))
    throw DependencyError("student.ckpt was distilled under a different config (hash " +
                          hex64(s.meta.config_hash) + ", expected " +
                          hex64(student_config_hash(c)) + ")");
  return s.student;
}

std::pair<double, double> plot_range(const diffusion::MixtureSpec& spec) {
  double lo = 0.0, hi = 0.0, spread = 0.0;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const double m = spec.component(i).mean[0];
    lo = i == 0 ? m : std::min(lo, m);
    hi = i == 0 ? m : std::max(hi, m);
    spread = std::max(spread, spec.component(i).std);
  }
  return {lo - 4.0 * spread - 0.5, hi + 4.0 * spread + 0.5};
}

std::string join_weights(const std::vector<double>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? ";" : "") + format_double(w[i]);
  return s;
}

}  // namespace

Failure classify(const std::exception& e) {
  if (dynamic_cast<const DependencyError*>(&e)) return {kExitDependency, "dependency"};
  if (dynamic_cast<const NumericError*>(&e)) return {kExitNumeric, "numeric"};
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const ParseError*>(&e)) return {kExitIo, "io"};
  return {kExitConfig, "config"};
}

void cmd_train_teacher(const ExperimentConfig& c) {
  Run run("train-teacher", c);
  const diffusion::Schedule sched = c.make_schedule();
  numerics::RngStream rng(c.seed, kStreamTeacher);
  const diffusion::TeacherResult res = diffusion::train_teacher(c.teacher, c.data.spec(), sched, rng);
  run.write("teacher.ckpt", write_teacher(meta_for(c, "teacher", teacher_config_hash(c)), res.ema));
  CsvTable curve({"iteration", "loss"});
  for (const auto& r : res.curve) curve.add_row({std::to_string(r.iteration), format_double(r.loss)});
  run.write("teacher_curve.csv", curve.to_string());
  run.finish();
}

void cmd_distill(const ExperimentConfig& c) {
  const diffusion::ScoreModel teacher = load_teacher(c);
  Run run("distill", c);
  const diffusion::Schedule sched = c.make_schedule();
  numerics::RngStream rng(c.seed, kStreamDistill);
  const CheckpointMeta meta = meta_for(c, "student", student_config_hash(c));
  distill::StudentCheckpoint student;
  try {
    if (c.gan_enabled) {
      adversarial::ScottRun r =
          adversarial::train_scott_full(teacher, c.distill, c.gan, c.data.spec(), sched, rng);
      student = std::move(r.student);
      run.write("discriminator.ckpt",
                write_discriminator(meta_for(c, "discriminator", meta.config_hash), r.discriminator));
    } else {
      student = distill::train_scott_cd_only(teacher, c.distill, c.data.spec(), sched, rng);
    }
  } catch (const distill::DivergenceError& e) {
    run.write("student.last-good.ckpt", write_student(meta, e.last_good()));
    throw;
  }
  run.write("student.ckpt", write_student(meta, student));
  CsvTable curve({"iteration", "cd_loss", "generator_loss", "discriminator_loss"});
  for (const auto& r : student.curve)
    curve.add_row({std::to_string(r.iteration), format_double(r.cd_loss),
                   format_double(r.generator_loss), format_double(r.discriminator_loss)});
  run.write("distill_curve.csv", curve.to_string());
  run.finish();
}

void cmd_sample(const ExperimentConfig& c) {
  const distill::StudentCheckpoint student = load_student(c);
  Run run("sample", c);
  const diffusion::Schedule sched = c.make_schedule();
  const diffusion::MixtureSpec spec = c.data.spec();
  for (std::size_t K : c.eval.steps) {
    numerics::RngStream rng = numerics::RngStream(c.seed, kStreamSample).substream(K);
    const auto seq = sampling::default_sequence(sched, K, c.eval.spacing);
    const sampling::SampleBatch b =
        sampling::multistep_consistency_sample(student.model, seq, sched, rng, c.eval.samples);
    std::vector<std::string> header{"steps", "seed", "index"};
    for (Eigen::Index d = 0; d < b.x.rows(); ++d) header.push_back("x" + std::to_string(d));
    CsvTable t(header);
    for (Eigen::Index j = 0; j < b.x.cols(); ++j) {
      std::vector<std::string> row{std::to_string(b.steps), std::to_string(c.seed), std::to_string(j)};
      for (Eigen::Index d = 0; d < b.x.rows(); ++d) row.push_back(format_double(b.x(d, j)));
      t.add_row(std::move(row));
    }
    const std::string stem = "samples_" + std::to_string(K) + "step";
    run.write(stem + ".csv", t.to_string());
    if (b.x.rows() == 1) {
      const auto [lo, hi] = plot_range(spec);
      run.write(stem + ".svg",
                svg_histogram({b.x.data(), static_cast<std::size_t>(b.x.cols())}, lo, hi, 100,
                              std::to_string(K) + "-step student samples"));
    }
  }
  run.finish();
}

void cmd_eval(const ExperimentConfig& c) {
  const distill::StudentCheckpoint student = load_student(c);
  Run run("eval", c);
  const diffusion::Schedule sched = c.make_schedule();
  const diffusion::MixtureSpec spec = c.data.spec();
  numerics::RngStream ref_rng(c.seed, kStreamReference);
  const Eigen::MatrixXd reference = diffusion::sample_mixture(spec, c.eval.samples, ref_rng).x;
  CsvTable t({"generator", "steps", "seed", "n_samples", "w1", "coverage", "mode_max_error",
              "mode_weights"});
  auto add = [&](const std::string& gen, std::size_t steps, std::uint64_t seed,
                 const sampling::MetricsReport& r) {
    t.add_row({gen, std::to_string(steps), std::to_string(seed), std::to_string(r.n_samples),
               format_double(r.w1), format_double(r.coverage),
               r.modes ? format_double(r.modes->max_error) : "",
               r.modes ? join_weights(r.modes->fractions) : ""});
  };
  for (std::uint64_t s : c.eval.seeds) {
    numerics::RngStream base(s, kStreamSample);
    numerics::RngStream direct_rng = base.substream(0);
    const Eigen::MatrixXd direct = diffusion::sample_mixture(spec, c.eval.samples, direct_rng).x;
    numerics::RngStream metric_rng = base.substream(1000);
    add("mixture", 0, s, sampling::eval_report(direct, reference, spec, c.eval.k, metric_rng));
    for (std::size_t K : c.eval.steps) {
      numerics::RngStream rng = base.substream(K);
      const auto seq = sampling::default_sequence(sched, K, c.eval.spacing);
      const auto b = sampling::multistep_consistency_sample(student.model, seq, sched, rng, c.eval.samples);
      add("student", K, s, sampling::eval_report(b.x, reference, spec, c.eval.k, metric_rng));
    }
  }
  run.write("metrics.csv", t.to_string());
  run.finish();
}

void cmd_solver_bench(const ExperimentConfig& c) {
  const diffusion::Schedule sched = c.make_schedule();
  const diffusion::MixtureSpec spec = c.data.spec();
  if (spec.dim() != 1) throw ConfigError("solver-bench supports 1-D data only");
  diffusion::EpsFn eps = c.bench.eps == BenchEps::teacher
                             ? diffusion::model_eps_fn(load_teacher(c), c.distill.cfg_scale)
                             : diffusion::analytic_eps_fn(spec, sched);
  Run run("solver-bench", c);
  const solvers::AnalyticProblem problem{spec, sched};
  const std::size_t n = c.bench.trajectories;
  const std::vector<double> ref = problem.reference(n);
  numerics::RngStream floor_rng = numerics::RngStream(c.seed, kStreamBench).substream(0);
  const Eigen::MatrixXd exact = problem.exact_endpoint(n, floor_rng);
  const double floor = metrics::w1_1d({exact.data(), n}, ref);
  const std::size_t skip = c.bench.skip ? c.bench.skip : c.distill.effective_skip(sched);
  const std::size_t outer = (sched.last() + skip - 1) / skip;
  const auto seq = solvers::substep_indices(sched.last(), 0, outer);
  const Eigen::MatrixXd z_T = problem.initial(n);
  CsvTable t({"family", "eta", "substeps", "skip", "outer_steps", "trajectories", "w1", "mc_floor"});
  std::uint64_t row = 1;
  for (double eta : c.bench.etas)
    for (std::size_t h : c.bench.substeps) {
      solvers::SolverConfig sc = c.distill.solver;
      sc.family = solvers::SolverFamily::ddim;
      sc.eta = eta;
      sc.substeps = h;
      numerics::RngStream rng = numerics::RngStream(c.seed, kStreamBench).substream(row++);
      const Eigen::MatrixXd x = solvers::solve_trajectory(eps, z_T, seq, sc, sched, rng);
      const double w = metrics::w1_1d({x.data(), n}, ref);
      t.add_row({"ddim", format_double(eta), std::to_string(h), std::to_string(skip),
                 std::to_string(outer), std::to_string(n), format_double(w), format_double(floor)});
    }
  run.write("solver_bench.csv", t.to_string());
  run.finish();
}

void cmd_order_check(const ExperimentConfig& c) {
  Run run("order-check", c);
  diffusion::ScheduleParams sp = c.schedule;
  sp.grid_size = c.order.grid_size;
  Eigen::VectorXd m(1);
  m << c.order.mean;
  solvers::AnalyticProblem problem{diffusion::MixtureSpec::gaussian(m, c.order.std),
                                   diffusion::Schedule::make(sp)};
  CsvTable t({"family", "steps", "error", "fitted_order", "fit_residual", "mc_floor",
              "floor_limited", "monotone"});
  std::uint64_t id = 0;
  for (const std::string& fam : c.order.families) {
    solvers::SolverConfig sc = c.distill.solver;
    sc.family = solvers::solver_family_from_string(fam);
    sc.substeps = 1;
    numerics::RngStream rng = numerics::RngStream(c.seed, kStreamOrder).substream(id++);
    const solvers::OrderEstimate e =
        solvers::estimate_order(problem, sc, c.order.counts, c.order.trajectories, rng);
    for (std::size_t i = 0; i < e.step_counts.size(); ++i)
      t.add_row({fam, std::to_string(e.step_counts[i]), format_double(e.errors[i]),
                 format_double(e.fitted_order), format_double(e.fit_residual),
                 format_double(e.mc_floor), e.floor_limited ? "true" : "false",
                 e.monotone ? "true" : "false"});
  }
  run.write("order.csv", t.to_string());
  run.finish();
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"train-teacher", "distill", "sample",
                                              "eval", "solver-bench", "order-check"};
  return names;
}

void run_command(const std::string& name, const ExperimentConfig& config) {
  if (name == "train-teacher") return cmd_train_teacher(config);
  if (name == "distill") return cmd_distill(config);
  if (name == "sample") return cmd_sample(config);
  if (name == "eval") return cmd_eval(config);
  if (name == "solver-bench") return cmd_solver_bench(config);
  if (name == "order-check") return cmd_order_check(config);
  throw ConfigError("unknown command '" + name + "'");
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stochastic consistency distillation lab", "scott-lab"};
  std::string command, config_path, out_dir;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  app.add_option("command", command, "Command to run")
      ->required()
      ->check(CLI::IsMember(command_names()));
  app.add_option("--config", config_path, "Config file (.cfg)")->required();
  app.add_option("--set", sets, "Override, key=value (repeatable)");
  app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--out", out_dir, "Output directory (overrides output.dir)");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "scott-lab: error: config: " << e.what() << "\n";
    return kExitConfig;
  }

  std::vector<std::string> overrides = sets;
  if (seed) overrides.push_back("seed=" + std::to_string(*seed));
  if (!out_dir.empty()) overrides.push_back("output.dir=" + out_dir);
  std::string where = out_dir;
  try {
    const ExperimentConfig config = parse_config_file(config_path, overrides);
    where = config.output_dir;
    run_command(command, config);
    out << command << ": ok (" << where << ")\n";
    return kExitOk;
  } catch (const std::exception& e) {
    const Failure f = classify(e);
    err << "scott-lab: error: " << f.category << ": " << e.what() << "\n";
    if (!where.empty()) {
      std::error_code ec;
      fs::create_directories(where, ec);
      if (!ec) {
        try {
          write_file((fs::path(where) / (command + ".error")).string(),
                     "category = " + f.category + "\nexit_code = " + std::to_string(f.code) +
                         "\nmessage = " + std::string(e.what()) + "\n");
        } catch (const std::exception&) {
          // best effort only
        }
      }
    }
    return f.code;
  }
}

}  // namespace scott::cli
