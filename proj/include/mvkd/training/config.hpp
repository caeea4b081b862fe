#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "mvkd/losses.hpp"
#include "mvkd/metrics.hpp"
#include "mvkd/model/networks.hpp"

namespace mvkd {

// kTeacher: audio-visual teacher with frame labels. kStudentFrame and
// kStudentSequence: visual-only students with frame- or sequence-level labels.
enum class SupervisionMode { kTeacher, kStudentFrame, kStudentSequence };

std::string to_string(SupervisionMode m);
SupervisionMode supervision_mode_from_string(const std::string& s);

struct TrainConfig {
  SupervisionMode mode = SupervisionMode::kTeacher;
  std::size_t epochs = 40;
  std::size_t batch_size = 4;
  double lr = 3e-3;
  double lr_min = 0.0;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  // Frames sampled per sequence; 0 takes T from the dataset.
  std::size_t frames = 0;
  // Share of the train split held out for checkpoint selection.
  double val_fraction = 0.1;
  bool init_from_teacher = false;
  // Evaluate on the test split after every epoch (mAP-vs-epoch curve).
  bool eval_each_epoch = true;
  Granularity eval_granularity = Granularity::kFrame;
  LossConfig loss;
  ModelConfig model;
  // Locations; excluded from the config hash.
  std::filesystem::path dataset;
  std::filesystem::path teacher_checkpoint;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
// Missing fields keep their defaults; unknown fields are rejected by name.
TrainConfig train_config_from_json(const nlohmann::json& j);

// Applies a dotted-key override such as "loss.tau=4" or "epochs=10" to a
// config document. The value is parsed as JSON when possible, else taken as
// a string. Unknown keys are rejected.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// 16 hex digits of FNV-1a 64 over the canonical JSON of every semantic field.
std::string config_hash(const TrainConfig& cfg);
std::string fnv1a_hex(const std::string& bytes);

}  // namespace mvkd
