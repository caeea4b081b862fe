#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mvkd {

enum class MaskSource { kSyntheticGroundTruth, kExternalFile };

// Binary N x T matrix: 1 where a person is visible in view n at frame t.
class VisibilityMask {
 public:
  VisibilityMask() = default;
  VisibilityMask(std::size_t views, std::size_t frames, std::vector<std::uint8_t> values,
                 MaskSource source = MaskSource::kSyntheticGroundTruth);

  static VisibilityMask all_visible(std::size_t views, std::size_t frames);

  std::size_t views() const { return views_; }
  std::size_t frames() const { return frames_; }
  MaskSource source() const { return source_; }
  std::uint8_t at(std::size_t view, std::size_t frame) const;
  std::span<const std::uint8_t> values() const { return values_; }

  // Columns picked by a frame-sampling index list.
  VisibilityMask select_frames(std::span<const std::size_t> indices) const;

  bool operator==(const VisibilityMask& other) const {
    return views_ == other.views_ && frames_ == other.frames_ && values_ == other.values_;
  }

 private:
  std::size_t views_ = 0;
  std::size_t frames_ = 0;
  std::vector<std::uint8_t> values_;
  MaskSource source_ = MaskSource::kSyntheticGroundTruth;
};

// 1 iff views i and j both see a person at frame t.
int covisible_gate(const VisibilityMask& mask, std::size_t i, std::size_t j, std::size_t t);
std::size_t covisible_count(const VisibilityMask& mask, std::size_t i, std::size_t j);

// Text format: a JSON header line {"views":N,"frames":T}, then N lines of T
// space-separated 0/1 tokens.
void save_masks(const VisibilityMask& mask, const std::filesystem::path& path);
VisibilityMask load_masks(const std::filesystem::path& path);
// Also checks the header against the dimensions a manifest expects.
VisibilityMask load_masks(const std::filesystem::path& path, std::size_t views, std::size_t frames);

}  // namespace mvkd
