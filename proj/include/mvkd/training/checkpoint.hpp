#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "mvkd/model/networks.hpp"

namespace mvkd {

enum class ModelKind { kTeacher, kStudent };

struct ParamRecord {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  ModelKind kind = ModelKind::kTeacher;
  ModelConfig model;
  std::vector<ParamRecord> params;
  std::string config_hash;
  std::size_t epoch = 0;
  std::string rng_state;

  bool operator==(const Checkpoint& o) const;
};

Checkpoint snapshot(const TeacherNet& net, const std::string& config_hash, std::size_t epoch,
                    const std::string& rng_state);
Checkpoint snapshot(const StudentNet& net, const std::string& config_hash, std::size_t epoch,
                    const std::string& rng_state);

// Rebuilds a network with the checkpoint's values. The kind must match.
TeacherNet teacher_from_checkpoint(const Checkpoint& ckpt);
StudentNet student_from_checkpoint(const Checkpoint& ckpt);

// File layout: one line of compact JSON metadata (kind, model config, names,
// shapes, hash, epoch, RNG state, payload_bytes), then the parameters as
// little-endian f64 values in metadata order.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mvkd
