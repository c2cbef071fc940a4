#pragma once

#include <cstdint>
#include <string>

#include "scott/adversarial/adversarial.hpp"
#include "scott/diffusion/schedule.hpp"
#include "scott/diffusion/score_model.hpp"
#include "scott/distill/distill.hpp"

namespace scott::cli {

inline constexpr int kCheckpointVersion = 1;

/// Header shared by every checkpoint kind.
struct CheckpointMeta {
  std::string kind;  // teacher | student | discriminator
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::string schedule;  // one-token summary, see schedule_summary

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

std::string schedule_summary(const diffusion::ScheduleParams& p);

// Text format: a "scott-ckpt <version>" line, the header, the body, and a
// closing "end <fnv1a>" line hashing every byte before it. Doubles use the
// shortest round-trip decimal form.

std::string write_teacher(const CheckpointMeta& meta, const diffusion::ScoreModel& model);
std::string write_student(const CheckpointMeta& meta, const distill::StudentCheckpoint& student);
std::string write_discriminator(const CheckpointMeta& meta, const adversarial::Discriminator& d);

struct TeacherFile {
  CheckpointMeta meta;
  diffusion::ScoreModel model;
};

struct StudentFile {
  CheckpointMeta meta;
  distill::StudentCheckpoint student;
};

struct DiscriminatorFile {
  CheckpointMeta meta;
  adversarial::Discriminator discriminator;
};

/// Each reader checks version, kind and the trailing hash. ParseError (with
/// byte offset) on malformed or truncated input.
TeacherFile read_teacher(const std::string& text);
StudentFile read_student(const std::string& text);
DiscriminatorFile read_discriminator(const std::string& text);

/// Header only (no hash check).
CheckpointMeta read_meta(const std::string& text);

std::string read_file(const std::string& path);
/// Writes via a temporary file and rename.
void write_file(const std::string& path, const std::string& contents);

}  // namespace scott::cli
