#include "scott/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "scott/error.hpp"
#include "scott/numerics/hash.hpp"

namespace scott::cli {

std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  auto r = std::to_chars(buf, buf + 16, v, 16);
  std::string s(buf, r.ptr);
  return std::string(16 - s.size(), '0') + s;
}

diffusion::MixtureSpec DataConfig::spec() const {
  if (kind == DataKind::three_mode) return diffusion::MixtureSpec::three_mode();
  Eigen::VectorXd m(1);
  m << mean;
  return diffusion::MixtureSpec::gaussian(m, std);
}

std::string to_string(DataKind k) { return k == DataKind::three_mode ? "three-mode" : "gaussian"; }

DataKind data_kind_from_string(const std::string& v) {
  if (v == "three-mode") return DataKind::three_mode;
  if (v == "gaussian") return DataKind::gaussian;
  throw ConfigError("unknown data kind '" + v + "' (expected three-mode or gaussian)");
}

std::string to_string(BenchEps e) { return e == BenchEps::analytic ? "analytic" : "teacher"; }

BenchEps bench_eps_from_string(const std::string& v) {
  if (v == "analytic") return BenchEps::analytic;
  if (v == "teacher") return BenchEps::teacher;
  throw ConfigError("unknown eps source '" + v + "' (expected analytic or teacher)");
}

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& expected,
                            const std::string& got) {
  throw ConfigError("config key '" + key + "': expected " + expected + ", got '" + got + "'");
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad_value(key, "a number", v);
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || v.empty())
    bad_value(key, "a non-negative integer", v);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, "true or false", v);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(v);
  while (std::getline(in, cur, ',')) out.push_back(trim(cur));
  return out;
}

template <class T, class F>
std::vector<T> parse_list(const std::string& key, const std::string& v, F one) {
  std::vector<T> out;
  for (const std::string& item : split_list(v)) {
    if (item.empty()) bad_value(key, "a comma-separated list", v);
    out.push_back(one(key, item));
  }
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& v, F fmt) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += fmt(v[i]);
  }
  return s;
}

// Converts an enum parser's ConfigError into one that names the key.
template <class F>
auto enum_value(const std::string& key, const std::string& v, F parse) {
  try {
    return parse(v);
  } catch (const ConfigError& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

template <class E>
std::string to_string_any(E e) {
  using adversarial::to_string;
  using diffusion::to_string;
  using distill::to_string;
  using numerics::to_string;
  using sampling::to_string;
  using solvers::to_string;
  return to_string(e);
}

struct Key {
  std::string name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
  bool required = false;
};

std::string u64s(std::uint64_t v) { return std::to_string(v); }
std::string bools(bool v) { return v ? "true" : "false"; }

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    using C = ExperimentConfig;
    auto dbl = [&k](std::string name, auto field) {
      k.push_back({name, [name, field](C& c, const std::string& v) { field(c) = parse_double(name, v); },
                   [field](const C& c) { return format_double(field(const_cast<C&>(c))); }});
    };
    auto size = [&k](std::string name, auto field) {
      k.push_back({name,
                   [name, field](C& c, const std::string& v) {
                     field(c) = static_cast<std::size_t>(parse_u64(name, v));
                   },
                   [field](const C& c) { return u64s(field(const_cast<C&>(c))); }});
    };
    auto flag = [&k](std::string name, auto field) {
      k.push_back({name, [name, field](C& c, const std::string& v) { field(c) = parse_bool(name, v); },
                   [field](const C& c) { return bools(field(const_cast<C&>(c))); }});
    };
    auto enm = [&k](std::string name, auto field, auto parse, bool required = false) {
      k.push_back({name,
                   [name, field, parse](C& c, const std::string& v) {
                     field(c) = enum_value(name, v, parse);
                   },
                   [field](const C& c) { return to_string_any(field(const_cast<C&>(c))); }, required});
    };

    k.push_back({"seed", [](C& c, const std::string& v) { c.seed = parse_u64("seed", v); },
                 [](const C& c) { return u64s(c.seed); }});
    k.push_back({"output.dir",
                 [](C& c, const std::string& v) {
                   if (v.empty()) bad_value("output.dir", "a path", v);
                   c.output_dir = v;
                 },
                 [](const C& c) { return c.output_dir; }});

    enm("data.kind", [](C& c) -> DataKind& { return c.data.kind; }, data_kind_from_string, true);
    dbl("data.mean", [](C& c) -> double& { return c.data.mean; });
    dbl("data.std", [](C& c) -> double& { return c.data.std; });

    enm("schedule.kind", [](C& c) -> diffusion::ScheduleKind& { return c.schedule.kind; },
        diffusion::schedule_kind_from_string);
    size("schedule.grid_size", [](C& c) -> std::size_t& { return c.schedule.grid_size; });
    dbl("schedule.tau", [](C& c) -> double& { return c.schedule.tau; });
    dbl("schedule.T", [](C& c) -> double& { return c.schedule.T; });
    dbl("schedule.alpha_bar_min", [](C& c) -> double& { return c.schedule.alpha_bar_min; });
    dbl("schedule.cosine_offset", [](C& c) -> double& { return c.schedule.cosine_offset; });
    dbl("schedule.beta_min", [](C& c) -> double& { return c.schedule.beta_min; });
    dbl("schedule.beta_max", [](C& c) -> double& { return c.schedule.beta_max; });

    size("teacher.hidden_width", [](C& c) -> std::size_t& { return c.teacher.hidden_width; });
    size("teacher.num_layers", [](C& c) -> std::size_t& { return c.teacher.num_layers; });
    enm("teacher.activation", [](C& c) -> numerics::Activation& { return c.teacher.activation; },
        numerics::activation_from_string);
    enm("teacher.time_embedding",
        [](C& c) -> diffusion::TimeEmbedding& { return c.teacher.time_embedding; },
        diffusion::time_embedding_from_string);
    size("teacher.fourier_features", [](C& c) -> std::size_t& { return c.teacher.fourier_features; });
    flag("teacher.conditional", [](C& c) -> bool& { return c.teacher.conditional; });
    dbl("teacher.label_drop", [](C& c) -> double& { return c.teacher.label_drop; });
    size("teacher.iterations", [](C& c) -> std::size_t& { return c.teacher.iterations; });
    size("teacher.batch_size", [](C& c) -> std::size_t& { return c.teacher.batch_size; });
    dbl("teacher.learning_rate", [](C& c) -> double& { return c.teacher.adam.learning_rate; });
    dbl("teacher.lr_final_fraction", [](C& c) -> double& { return c.teacher.lr_final_fraction; });
    dbl("teacher.ema_rate", [](C& c) -> double& { return c.teacher.ema_rate; });
    size("teacher.log_every", [](C& c) -> std::size_t& { return c.teacher.log_every; });

    size("distill.skip", [](C& c) -> std::size_t& { return c.distill.skip; });
    enm("distill.distance", [](C& c) -> distill::Distance& { return c.distill.distance; },
        distill::distance_from_string);
    size("distill.iterations", [](C& c) -> std::size_t& { return c.distill.iterations; });
    size("distill.batch_size", [](C& c) -> std::size_t& { return c.distill.batch_size; });
    dbl("distill.learning_rate", [](C& c) -> double& { return c.distill.adam.learning_rate; });
    dbl("distill.ema_rate", [](C& c) -> double& { return c.distill.ema_rate; });
    dbl("distill.sigma_data", [](C& c) -> double& { return c.distill.sigma_data; });
    dbl("distill.cfg_scale", [](C& c) -> double& { return c.distill.cfg_scale; });
    flag("distill.init_from_teacher", [](C& c) -> bool& { return c.distill.init_from_teacher; });
    size("distill.log_every", [](C& c) -> std::size_t& { return c.distill.log_every; });

    enm("solver.family", [](C& c) -> solvers::SolverFamily& { return c.distill.solver.family; },
        solvers::solver_family_from_string);
    dbl("solver.eta", [](C& c) -> double& { return c.distill.solver.eta; });
    size("solver.substeps", [](C& c) -> std::size_t& { return c.distill.solver.substeps; });
    dbl("solver.dpm_drift_factor", [](C& c) -> double& { return c.distill.solver.dpm_drift_factor; });
    enm("solver.dpm_noise_scale",
        [](C& c) -> solvers::DpmNoiseScale& { return c.distill.solver.dpm_noise_scale; },
        solvers::dpm_noise_scale_from_string);

    flag("gan.enabled", [](C& c) -> bool& { return c.gan_enabled; });
    dbl("gan.lambda_adv", [](C& c) -> double& { return c.gan.weights.lambda_adv; });
    size("gan.rank", [](C& c) -> std::size_t& { return c.gan.rank; });
    dbl("gan.adapter_scale", [](C& c) -> double& { return c.gan.adapter_scale; });
    dbl("gan.lr_ratio", [](C& c) -> double& { return c.gan.lr_ratio; });
    dbl("gan.max_logit", [](C& c) -> double& { return c.gan.max_logit; });
    enm("gan.real_time", [](C& c) -> adversarial::RealTime& { return c.gan.real_time; },
        adversarial::real_time_from_string);

    size("eval.samples", [](C& c) -> std::size_t& { return c.eval.samples; });
    size("eval.k", [](C& c) -> std::size_t& { return c.eval.k; });
    k.push_back({"eval.steps",
                 [](C& c, const std::string& v) {
                   c.eval.steps = parse_list<std::size_t>("eval.steps", v, [](auto& key, auto& s) {
                     return static_cast<std::size_t>(parse_u64(key, s));
                   });
                 },
                 [](const C& c) { return join(c.eval.steps, [](std::size_t x) { return u64s(x); }); }});
    enm("eval.spacing", [](C& c) -> sampling::SequenceSpacing& { return c.eval.spacing; },
        sampling::sequence_spacing_from_string);
    k.push_back({"eval.seeds",
                 [](C& c, const std::string& v) {
                   c.eval.seeds = parse_list<std::uint64_t>("eval.seeds", v, parse_u64);
                 },
                 [](const C& c) { return join(c.eval.seeds, u64s); }});

    enm("bench.eps", [](C& c) -> BenchEps& { return c.bench.eps; }, bench_eps_from_string);
    k.push_back({"bench.etas",
                 [](C& c, const std::string& v) {
                   c.bench.etas = parse_list<double>("bench.etas", v, parse_double);
                 },
                 [](const C& c) { return join(c.bench.etas, format_double); }});
    k.push_back({"bench.substeps",
                 [](C& c, const std::string& v) {
                   c.bench.substeps = parse_list<std::size_t>("bench.substeps", v, [](auto& key, auto& s) {
                     return static_cast<std::size_t>(parse_u64(key, s));
                   });
                 },
                 [](const C& c) { return join(c.bench.substeps, [](std::size_t x) { return u64s(x); }); }});
    size("bench.trajectories", [](C& c) -> std::size_t& { return c.bench.trajectories; });
    size("bench.skip", [](C& c) -> std::size_t& { return c.bench.skip; });

    k.push_back({"order.families",
                 [](C& c, const std::string& v) {
                   c.order.families = parse_list<std::string>("order.families", v, [](auto& key, auto& s) {
                     enum_value(key, s, solvers::solver_family_from_string);
                     return s;
                   });
                 },
                 [](const C& c) { return join(c.order.families, [](const std::string& s) { return s; }); }});
    k.push_back({"order.counts",
                 [](C& c, const std::string& v) {
                   c.order.counts = parse_list<std::size_t>("order.counts", v, [](auto& key, auto& s) {
                     return static_cast<std::size_t>(parse_u64(key, s));
                   });
                 },
                 [](const C& c) { return join(c.order.counts, [](std::size_t x) { return u64s(x); }); }});
    size("order.trajectories", [](C& c) -> std::size_t& { return c.order.trajectories; });
    size("order.grid_size", [](C& c) -> std::size_t& { return c.order.grid_size; });
    dbl("order.mean", [](C& c) -> double& { return c.order.mean; });
    dbl("order.std", [](C& c) -> double& { return c.order.std; });
    return k;
  }();
  return keys;
}

const Key& find_key(const std::string& name) {
  for (const Key& k : registry())
    if (k.name == name) return k;
  throw ConfigError("unknown config key '" + name + "'");
}

void apply(ExperimentConfig& c, const std::string& key, const std::string& value,
           std::set<std::string>& seen) {
  find_key(key).set(c, value);
  seen.insert(key);
}

std::pair<std::string, std::string> split_assignment(const std::string& line, const std::string& where) {
  const auto eq = line.find('=');
  if (eq == std::string::npos)
    throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
  const std::string key = trim(line.substr(0, eq));
  if (key.empty()) throw ConfigError(where + ": missing key before '='");
  return {key, trim(line.substr(eq + 1))};
}

}  // namespace

void ExperimentConfig::validate() const {
  auto wrap = [](const std::string& section, auto fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      throw ConfigError(section + ": " + e.what());
    }
  };
  if (data.kind == DataKind::gaussian && !(data.std > 0.0))
    throw ConfigError("config key 'data.std' must be > 0");
  const diffusion::Schedule sched = make_schedule();
  wrap("teacher", [&] { teacher.validate(); });
  wrap("distill", [&] { distill.validate(sched); });
  wrap("gan", [&] { gan.validate(); });
  if (eval.samples <= eval.k) throw ConfigError("config key 'eval.samples' must exceed eval.k");
  if (eval.k == 0) throw ConfigError("config key 'eval.k' must be >= 1");
  if (eval.steps.empty()) throw ConfigError("config key 'eval.steps' must not be empty");
  for (std::size_t s : eval.steps)
    if (s == 0) throw ConfigError("config key 'eval.steps' entries must be >= 1");
  if (eval.seeds.empty()) throw ConfigError("config key 'eval.seeds' must not be empty");
  if (bench.etas.empty() || bench.substeps.empty() || bench.trajectories == 0)
    throw ConfigError("config keys 'bench.*' need nonempty lists and trajectories >= 1");
  if (bench.skip >= sched.size()) throw ConfigError("config key 'bench.skip' must be below the grid size");
  if (order.families.empty() || order.counts.size() < 3 || order.trajectories == 0)
    throw ConfigError("config keys 'order.*' need families, at least 3 counts and trajectories >= 1");
  if (!(order.std > 0.0)) throw ConfigError("config key 'order.std' must be > 0");
}

diffusion::Schedule ExperimentConfig::make_schedule() const {
  try {
    return diffusion::Schedule::make(schedule);
  } catch (const Error& e) {
    throw ConfigError(std::string("schedule: ") + e.what());
  }
}

ExperimentConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides) {
  ExperimentConfig c;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(lineno);
    auto [key, value] = split_assignment(line, where);
    if (seen.count(key)) throw ConfigError(where + ": key '" + key + "' given twice");
    apply(c, key, value, seen);
  }
  for (const std::string& o : overrides) {
    auto [key, value] = split_assignment(o, "--set '" + o + "'");
    apply(c, key, value, seen);
  }
  for (const Key& k : registry())
    if (k.required && !seen.count(k.name))
      throw ConfigError("missing required config key '" + k.name + "'");
  c.validate();
  return c;
}

ExperimentConfig parse_config_file(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), overrides);
}

std::string dump_sections(const ExperimentConfig& config, const std::vector<std::string>& prefixes) {
  std::string out;
  for (const Key& k : registry()) {
    bool keep = prefixes.empty();
    for (const std::string& p : prefixes) keep = keep || k.name.rfind(p, 0) == 0;
    if (keep) out += k.name + " = " + k.get(config) + "\n";
  }
  return out;
}

std::string dump_config(const ExperimentConfig& config) { return dump_sections(config, {}); }

std::uint64_t teacher_config_hash(const ExperimentConfig& config) {
  return numerics::fnv1a(dump_sections(config, {"seed", "data.", "schedule.", "teacher."}));
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  std::string d;
  for (const Key& k : registry())
    if (k.name != "output.dir") d += k.name + " = " + k.get(config) + "\n";
  return numerics::fnv1a(d);
}

}  // namespace scott::cli
