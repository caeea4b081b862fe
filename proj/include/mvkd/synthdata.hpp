#pragma once

// Seeded generator of multi-view, multi-label audio-visual sequences with
// ground-truth visibility, plus the on-disk dataset reader, frame sampling
// and the stratified train/test split.

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvkd/numerics/tensor.hpp"
#include "mvkd/visibility.hpp"

namespace mvkd {

struct GenConfig {
  std::size_t n_sequences = 170;
  std::size_t views = 3;
  std::size_t frames = 24;  // T; raw sequences hold between T and 2T frames
  std::size_t classes = 6;
  std::size_t max_concurrent = 2;  // K
  std::size_t max_events = 3;
  // Fraction of the unit line each view covers.
  std::vector<std::array<double, 2>> coverage = {{0.0, 0.5}, {0.3, 0.8}, {0.55, 1.0}};
  double sigma_v = 1.0;
  double sigma_a = 1.0;
  std::size_t visual_dim = 16;  // d_v
  std::size_t audio_dim = 8;    // F
  std::size_t latent_dim = 8;   // size of the per-class code e_c
  bool audio_global = true;
  // Largest per-frame step of the subject along the unit line.
  double subject_speed = 0.05;
  double train_ratio = 12.0 / 17.0;
  std::uint64_t seed = 7;

  void validate() const;
};

nlohmann::json to_json(const GenConfig& cfg);
// Every field must be present; unknown fields are rejected. Errors name the
// offending field.
GenConfig gen_config_from_json(const nlohmann::json& j);

// Writes manifest.json, one little-endian f64 file per array and one mask
// file per sequence into `out_dir`. Identical configs give identical bytes.
void generate(const GenConfig& cfg, const std::filesystem::path& out_dir);

struct Event {
  std::size_t cls = 0;
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
};

// One sequence as generated in memory, before it is written.
struct RawSequence {
  std::size_t length = 0;
  std::vector<Event> events;
  std::vector<double> position;     // length
  std::vector<double> visual;       // N x length x d_v
  std::vector<double> audio;        // N x length x F
  std::vector<double> frame_labels; // length x C
  VisibilityMask mask;              // N x length
};

// Class codes and the visual/audio mixing matrices shared by all sequences.
struct ClassBasis {
  std::vector<double> codes;   // C x latent
  std::vector<double> visual;  // latent x d_v
  std::vector<double> audio;   // latent x F
};

ClassBasis make_basis(const GenConfig& cfg);
RawSequence generate_sequence(const GenConfig& cfg, const ClassBasis& basis, std::size_t id);
// Visual (or audio) signal row of a single class: e_c W.
std::vector<double> class_signal(const ClassBasis& basis, std::size_t cls, bool audio, const GenConfig& cfg);

// A sequence loaded from disk. Audio and frame labels are only present when
// requested.
struct MultiViewSample {
  std::size_t id = 0;
  std::size_t length = 0;
  std::vector<Tensor> visual;              // per view, length x d_v
  std::optional<std::vector<Tensor>> audio;  // per view, length x F
  std::optional<Tensor> frame_labels;      // length x C
  Tensor sequence_labels;                  // 1 x C
  VisibilityMask mask;                     // N x length
};

struct SampleAccess {
  bool audio = false;
  bool frame_labels = false;
};

class Dataset {
 public:
  static Dataset open(const std::filesystem::path& dir);

  const GenConfig& config() const { return config_; }
  const std::filesystem::path& dir() const { return dir_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<std::size_t>& train_ids() const { return train_; }
  const std::vector<std::size_t>& test_ids() const { return test_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  bool has_audio() const;

  MultiViewSample load(std::size_t id, SampleAccess access) const;
  const Tensor& sequence_labels(std::size_t id) const;

  // Number of frame-label arrays read so far.
  std::size_t frame_label_reads() const { return frame_label_reads_->load(); }
  std::size_t audio_reads() const { return audio_reads_->load(); }

 private:
  struct Entry {
    std::size_t length = 0;
    std::string visual_file;
    std::string audio_file;
    std::string labels_file;
    std::string mask_file;
    Tensor sequence_labels;
  };
  std::filesystem::path dir_;
  GenConfig config_;
  std::vector<std::string> class_names_;
  std::vector<Entry> entries_;
  std::vector<std::size_t> train_;
  std::vector<std::size_t> test_;
  std::shared_ptr<std::atomic<std::size_t>> frame_label_reads_ = std::make_shared<std::atomic<std::size_t>>(0);
  std::shared_ptr<std::atomic<std::size_t>> audio_reads_ = std::make_shared<std::atomic<std::size_t>>(0);
};

enum class SampleMode { kTrain, kEval };

// `target` frame indices into a sequence of `length` frames. Eval mode gives
// floor(k * length / target); train mode jitters each anchor by up to half a
// stride either way. Output is non-decreasing and in range.
std::vector<std::size_t> frame_sample(std::size_t length, std::size_t target, SampleMode mode,
                                      std::uint64_t seed);

// Rows of `t` (length x D) at `indices`.
Tensor take_rows(const Tensor& t, std::span<const std::size_t> indices);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  bool operator==(const Split&) const = default;
};

// Greedy iterative stratification of multi-label sequences. `ratio` is the
// train share; train receives ceil(ratio * n) sequences.
Split stratified_split(const std::vector<std::vector<std::uint8_t>>& labels, double ratio);

void write_f64(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f64(const std::filesystem::path& path, std::size_t expected);

}  // namespace mvkd
