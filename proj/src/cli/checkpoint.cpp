#include "scott/cli/checkpoint.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "scott/cli/config.hpp"
#include "scott/error.hpp"
#include "scott/numerics/hash.hpp"

namespace scott::cli {

std::string schedule_summary(const diffusion::ScheduleParams& p) {
  return diffusion::to_string(p.kind) + ",N=" + std::to_string(p.grid_size) +
         ",tau=" + format_double(p.tau) + ",T=" + format_double(p.T);
}

namespace {

class Writer {
 public:
  Writer& word(const std::string& w) {
    sep();
    out_ += w;
    return *this;
  }
  Writer& num(double v) { return word(format_double(v)); }
  Writer& num(std::uint64_t v) { return word(std::to_string(v)); }
  Writer& line() {
    out_ += '\n';
    fresh_ = true;
    return *this;
  }
  void values(std::span<const double> v) {
    word("values").num(static_cast<std::uint64_t>(v.size())).line();
    for (double x : v) num(x).line();
  }
  std::string finish() {
    const std::uint64_t h = numerics::fnv1a(out_);
    word("end").word(hex64(h)).line();
    return std::move(out_);
  }

 private:
  void sep() {
    if (!fresh_) out_ += ' ';
    fresh_ = false;
  }
  std::string out_;
  bool fresh_ = true;
};

class Reader {
 public:
  explicit Reader(const std::string& text) : s_(text) {}

  std::size_t offset() const { return pos_; }

  std::string word() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (pos_ >= s_.size()) throw ParseError("checkpoint truncated", pos_);
    const std::size_t a = pos_;
    while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    last_ = a;
    return s_.substr(a, pos_ - a);
  }
  void expect(const std::string& w) {
    const std::string got = word();
    if (got != w) throw ParseError("expected '" + w + "', found '" + got + "'", last_);
  }
  double real() {
    const std::string w = word();
    double v = 0.0;
    auto r = std::from_chars(w.data(), w.data() + w.size(), v);
    if (r.ec != std::errc() || r.ptr != w.data() + w.size())
      throw ParseError("expected a number, found '" + w + "'", last_);
    return v;
  }
  std::uint64_t u64(int base = 10) {
    const std::string w = word();
    std::uint64_t v = 0;
    auto r = std::from_chars(w.data(), w.data() + w.size(), v, base);
    if (r.ec != std::errc() || r.ptr != w.data() + w.size())
      throw ParseError("expected an integer, found '" + w + "'", last_);
    return v;
  }
  std::size_t size() { return static_cast<std::size_t>(u64()); }
  std::vector<double> values(std::size_t expected) {
    expect("values");
    const std::size_t n = size();
    if (n != expected)
      throw ParseError("expected " + std::to_string(expected) + " values, header says " +
                       std::to_string(n), last_);
    std::vector<double> v(n);
    for (double& x : v) x = real();
    return v;
  }
  template <class F>
  auto guard(F f) -> decltype(f(std::string())) {
    const std::string w = word();
    try {
      return f(w);
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), last_);
    }
  }
  // Verifies the trailing "end <hash>" line against every byte before it.
  void finish() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    const std::size_t end_at = pos_;
    expect("end");
    const std::uint64_t stored = u64(16);
    const std::uint64_t actual = numerics::fnv1a(std::string_view(s_).substr(0, end_at));
    if (stored != actual)
      throw ParseError("checkpoint hash mismatch (file corrupted or edited)", end_at);
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (pos_ != s_.size()) throw ParseError("trailing data after checkpoint end", pos_);
  }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;
  std::size_t last_ = 0;
};

void write_meta(Writer& w, const CheckpointMeta& m) {
  w.word("scott-ckpt").num(static_cast<std::uint64_t>(kCheckpointVersion)).line();
  w.word("kind").word(m.kind).line();
  w.word("seed").num(m.seed).line();
  w.word("config_hash").word(hex64(m.config_hash)).line();
  w.word("schedule").word(m.schedule).line();
}

CheckpointMeta parse_meta(Reader& r) {
  r.expect("scott-ckpt");
  const std::size_t at = r.offset();
  const std::uint64_t version = r.u64();
  if (version != static_cast<std::uint64_t>(kCheckpointVersion))
    throw ParseError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                     std::to_string(kCheckpointVersion) + ")", at);
  CheckpointMeta m;
  r.expect("kind");
  m.kind = r.word();
  r.expect("seed");
  m.seed = r.u64();
  r.expect("config_hash");
  m.config_hash = r.u64(16);
  r.expect("schedule");
  m.schedule = r.word();
  return m;
}

void expect_kind(const CheckpointMeta& m, const std::string& kind) {
  if (m.kind != kind)
    throw ParseError("checkpoint holds a " + m.kind + ", expected a " + kind, 0);
}

void write_mlp(Writer& w, const numerics::MlpParams& p) {
  w.word("net").word(numerics::to_string(p.activation())).num(static_cast<std::uint64_t>(p.layer_sizes().size()));
  for (std::size_t s : p.layer_sizes()) w.num(static_cast<std::uint64_t>(s));
  w.line();
  w.values(p.values());
}

numerics::MlpParams parse_mlp(Reader& r) {
  r.expect("net");
  const numerics::Activation act = r.guard(numerics::activation_from_string);
  const std::size_t n = r.size();
  if (n < 2 || n > 64) throw ParseError("implausible layer count", r.offset());
  std::vector<std::size_t> sizes(n);
  for (auto& s : sizes) {
    s = r.size();
    if (s == 0 || s > (1u << 20)) throw ParseError("implausible layer width", r.offset());
  }
  numerics::MlpParams p(sizes, act);
  const auto v = r.values(p.parameter_count());
  std::copy(v.begin(), v.end(), p.values().begin());
  return p;
}

void write_spec(Writer& w, const diffusion::ScoreModelSpec& s) {
  w.word("spec").num(static_cast<std::uint64_t>(s.data_dim)).word(diffusion::to_string(s.time_embedding));
  w.num(static_cast<std::uint64_t>(s.fourier_features)).num(static_cast<std::uint64_t>(s.num_classes)).num(s.T);
  w.line();
}

diffusion::ScoreModelSpec parse_spec(Reader& r) {
  r.expect("spec");
  diffusion::ScoreModelSpec s;
  s.data_dim = r.size();
  s.time_embedding = r.guard(diffusion::time_embedding_from_string);
  s.fourier_features = r.size();
  s.num_classes = r.size();
  s.T = r.real();
  return s;
}

void write_model(Writer& w, const diffusion::ScoreModel& m) {
  write_spec(w, m.spec);
  write_mlp(w, m.net);
}

diffusion::ScoreModel parse_model(Reader& r) {
  diffusion::ScoreModel m;
  m.spec = parse_spec(r);
  m.net = parse_mlp(r);
  if (m.net.input_width() != m.spec.input_width() || m.net.output_width() != m.spec.data_dim)
    throw ParseError("network shape does not match its input spec", r.offset());
  return m;
}

void write_dense(Writer& w, const adversarial::DenseLayer& l) {
  w.word("layer").num(static_cast<std::uint64_t>(l.weight.rows())).num(static_cast<std::uint64_t>(l.weight.cols())).line();
  w.values({l.weight.data(), static_cast<std::size_t>(l.weight.size())});
  w.values({l.bias.data(), static_cast<std::size_t>(l.bias.size())});
}

adversarial::DenseLayer parse_dense(Reader& r) {
  r.expect("layer");
  const std::size_t rows = r.size(), cols = r.size();
  if (rows == 0 || cols == 0 || rows > (1u << 16) || cols > (1u << 16))
    throw ParseError("implausible layer shape", r.offset());
  adversarial::DenseLayer l;
  const auto wv = r.values(rows * cols);
  l.weight = Eigen::Map<const Eigen::MatrixXd>(wv.data(), static_cast<Eigen::Index>(rows),
                                               static_cast<Eigen::Index>(cols));
  const auto bv = r.values(rows);
  l.bias = Eigen::Map<const Eigen::VectorXd>(bv.data(), static_cast<Eigen::Index>(rows));
  return l;
}

}  // namespace

std::string write_teacher(const CheckpointMeta& meta, const diffusion::ScoreModel& model) {
  Writer w;
  write_meta(w, meta);
  write_model(w, model);
  return w.finish();
}

TeacherFile read_teacher(const std::string& text) {
  Reader r(text);
  TeacherFile f;
  f.meta = parse_meta(r);
  expect_kind(f.meta, "teacher");
  f.model = parse_model(r);
  r.finish();
  return f;
}

std::string write_student(const CheckpointMeta& meta, const distill::StudentCheckpoint& s) {
  Writer w;
  write_meta(w, meta);
  const distill::DistillConfig& c = s.config;
  w.word("distill").num(static_cast<std::uint64_t>(c.skip)).word(solvers::to_string(c.solver.family));
  w.num(c.solver.eta).num(static_cast<std::uint64_t>(c.solver.substeps)).num(c.solver.dpm_drift_factor);
  w.word(solvers::to_string(c.solver.dpm_noise_scale)).word(distill::to_string(c.distance));
  w.num(static_cast<std::uint64_t>(c.iterations)).num(static_cast<std::uint64_t>(c.batch_size));
  w.num(c.adam.learning_rate).num(c.adam.beta1).num(c.adam.beta2).num(c.adam.epsilon);
  w.num(c.ema_rate).num(c.sigma_data).num(c.cfg_scale).word(c.init_from_teacher ? "true" : "false");
  w.num(static_cast<std::uint64_t>(c.log_every)).line();
  w.word("consistency").num(s.model.sigma_data).num(s.model.tau).num(s.model.ema_rate).line();
  w.word("teacher_fingerprint").word(hex64(s.teacher_fingerprint)).line();
  w.word("iterations_done").num(static_cast<std::uint64_t>(s.iterations_done)).line();
  w.word("online").line();
  write_model(w, s.model.online);
  w.word("target").line();
  write_model(w, s.model.target);
  w.word("curve").num(static_cast<std::uint64_t>(s.curve.size())).line();
  for (const distill::TrainRecord& rec : s.curve)
    w.num(static_cast<std::uint64_t>(rec.iteration)).num(rec.cd_loss).num(rec.generator_loss).num(rec.discriminator_loss).line();
  return w.finish();
}

StudentFile read_student(const std::string& text) {
  Reader r(text);
  StudentFile f;
  f.meta = parse_meta(r);
  expect_kind(f.meta, "student");
  distill::StudentCheckpoint& s = f.student;
  distill::DistillConfig& c = s.config;
  r.expect("distill");
  c.skip = r.size();
  c.solver.family = r.guard(solvers::solver_family_from_string);
  c.solver.eta = r.real();
  c.solver.substeps = r.size();
  c.solver.dpm_drift_factor = r.real();
  c.solver.dpm_noise_scale = r.guard(solvers::dpm_noise_scale_from_string);
  c.distance = r.guard(distill::distance_from_string);
  c.iterations = r.size();
  c.batch_size = r.size();
  c.adam.learning_rate = r.real();
  c.adam.beta1 = r.real();
  c.adam.beta2 = r.real();
  c.adam.epsilon = r.real();
  c.ema_rate = r.real();
  c.sigma_data = r.real();
  c.cfg_scale = r.real();
  c.init_from_teacher = r.guard([](const std::string& w) {
    if (w == "true") return true;
    if (w == "false") return false;
    throw ConfigError("expected true or false, found '" + w + "'");
  });
  c.log_every = r.size();
  r.expect("consistency");
  s.model.sigma_data = r.real();
  s.model.tau = r.real();
  s.model.ema_rate = r.real();
  r.expect("teacher_fingerprint");
  s.teacher_fingerprint = r.u64(16);
  r.expect("iterations_done");
  s.iterations_done = r.size();
  r.expect("online");
  s.model.online = parse_model(r);
  r.expect("target");
  s.model.target = parse_model(r);
  if (!(s.model.online.spec == s.model.target.spec) || !s.model.online.net.same_shape(s.model.target.net))
    throw ParseError("online and target networks differ in shape", r.offset());
  r.expect("curve");
  const std::size_t n = r.size();
  if (n > (1u << 24)) throw ParseError("implausible curve length", r.offset());
  s.curve.resize(n);
  for (distill::TrainRecord& rec : s.curve) {
    rec.iteration = r.size();
    rec.cd_loss = r.real();
    rec.generator_loss = r.real();
    rec.discriminator_loss = r.real();
  }
  r.finish();
  return f;
}

std::string write_discriminator(const CheckpointMeta& meta, const adversarial::Discriminator& d) {
  Writer w;
  write_meta(w, meta);
  write_spec(w, d.spec());
  w.word("lora").word(numerics::to_string(d.activation())).num(static_cast<std::uint64_t>(d.rank())).num(d.scale()).line();
  w.word("encoder").num(static_cast<std::uint64_t>(d.encoder().size())).line();
  for (const auto& l : d.encoder()) write_dense(w, l);
  w.word("decoder").num(static_cast<std::uint64_t>(d.decoder().size())).line();
  for (const auto& l : d.decoder()) write_dense(w, l);
  w.word("trainable").line();
  w.values(d.trainable());
  return w.finish();
}

DiscriminatorFile read_discriminator(const std::string& text) {
  Reader r(text);
  DiscriminatorFile f;
  f.meta = parse_meta(r);
  expect_kind(f.meta, "discriminator");
  const diffusion::ScoreModelSpec spec = parse_spec(r);
  r.expect("lora");
  const numerics::Activation act = r.guard(numerics::activation_from_string);
  const std::size_t rank = r.size();
  const double scale = r.real();
  std::vector<adversarial::DenseLayer> enc, dec;
  r.expect("encoder");
  std::size_t n = r.size();
  if (n > 64) throw ParseError("implausible layer count", r.offset());
  for (std::size_t i = 0; i < n; ++i) enc.push_back(parse_dense(r));
  r.expect("decoder");
  n = r.size();
  if (n > 64) throw ParseError("implausible layer count", r.offset());
  for (std::size_t i = 0; i < n; ++i) dec.push_back(parse_dense(r));
  r.expect("trainable");
  try {
    f.discriminator = adversarial::Discriminator(spec, act, std::move(enc), std::move(dec), rank, scale);
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), r.offset());
  }
  const auto v = r.values(f.discriminator.trainable_count());
  std::copy(v.begin(), v.end(), f.discriminator.trainable().begin());
  r.finish();
  return f;
}

CheckpointMeta read_meta(const std::string& text) {
  Reader r(text);
  return parse_meta(r);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("error reading '" + path + "'");
  return buf.str();
}

void write_file(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw IoError("error writing '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

}  // namespace scott::cli
