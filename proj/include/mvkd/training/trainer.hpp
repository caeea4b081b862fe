#pragma once

// Teacher training, frozen-teacher distillation, evaluation and the ablation
// matrix.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mvkd/losses.hpp"
#include "mvkd/metrics.hpp"
#include "mvkd/synthdata.hpp"
#include "mvkd/training/checkpoint.hpp"
#include "mvkd/training/config.hpp"
#include "mvkd/training/optimizer.hpp"

namespace mvkd {

struct StepRecord {
  std::size_t step = 0;
  LossBreakdown loss;
  double lr = 0.0;
};

struct TrainResult {
  Checkpoint last;
  Checkpoint best;  // highest validation mAP; ties keep the earlier epoch
  std::size_t best_epoch = 0;
  double best_val_map = 0.0;
  std::vector<StepRecord> steps;
  std::vector<EvalReport> epoch_reports;  // test split, one per epoch when enabled
  std::string config_hash;
  // Reads performed by the loader that feeds training batches.
  std::size_t train_frame_label_reads = 0;
  std::size_t train_audio_reads = 0;
};

struct ObjectiveTerms {
  Tensor total;
  LossBreakdown values;
};

// Frame and sequence supervision averaged over views.
ObjectiveTerms teacher_objective(std::span<const ViewOutputs> views, const Tensor& frame_labels,
                                 const Tensor& sequence_labels, const Linear& classifier, const LossConfig& cfg);

// Student supervision plus the enabled distillation terms. `frame_labels`
// null means sequence-level supervision only. `teacher` may be null when
// feature and logit distillation are both off.
ObjectiveTerms student_objective(std::span<const ViewOutputs> student, std::span<const ViewOutputs> teacher,
                                 const Tensor* frame_labels, const Tensor& sequence_labels,
                                 const VisibilityMask& mask, const Linear& classifier, const LossConfig& cfg);

// Trains the audio-visual teacher on the dataset at cfg.dataset.
TrainResult train_teacher(const TrainConfig& cfg);

// Trains a visual-only student. `teacher` (or cfg.teacher_checkpoint when
// null) is required when feature or logit distillation is enabled and is
// never modified.
TrainResult distill_student(const TrainConfig& cfg, const Checkpoint* teacher = nullptr);

struct EvalOptions {
  Granularity granularity = Granularity::kFrame;
  std::size_t frames = 0;  // 0 takes T from the dataset
  std::uint64_t seed = 0;
  std::string config_hash;
};

// Deterministic eval-mode sampling; per-view sigmoid scores averaged over
// views. Frame granularity scores every sampled frame, sequence granularity
// scores one row per sequence.
EvalReport evaluate(const Checkpoint& ckpt, const Dataset& data, std::span<const std::size_t> ids,
                    const EvalOptions& options);

// Writes checkpoint_last.ckpt, checkpoint_best.ckpt, losses.csv and
// epochs.jsonl into `dir`.
void write_run_artifacts(const TrainResult& result, const std::filesystem::path& dir);
std::string losses_csv(std::span<const StepRecord> steps);

// Named single-toggle variants: full, no-confw, no-mask, js-to-kl, no-fd,
// no-ld, no-vc, and none (every distillation term off).
LossConfig apply_ablation(LossConfig base, const std::string& name);
const std::vector<std::string>& default_ablation_variants();

struct AblationRun {
  std::string variant;
  std::uint64_t seed = 0;
  EvalReport report;
};

struct AblationRow {
  std::string variant;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single seed
  std::size_t runs = 0;
};

struct AblationTable {
  std::vector<AblationRun> runs;
  std::vector<AblationRow> rows;
  std::string to_csv() const;
};

// One student per (variant, seed), evaluated on the test split at the last
// epoch. Up to `jobs` runs train concurrently. When `out_dir` is non-empty,
// each run's artifacts go to out_dir/<variant>_seed<seed>.
AblationTable run_ablation_suite(const Checkpoint& teacher, const TrainConfig& base,
                                 std::span<const std::uint64_t> seeds,
                                 const std::vector<std::string>& variants = default_ablation_variants(),
                                 std::size_t jobs = 1, const std::filesystem::path& out_dir = {});

}  // namespace mvkd
