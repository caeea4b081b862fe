#include "mvkd/visibility.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "mvkd/errors.hpp"

namespace mvkd {

VisibilityMask::VisibilityMask(std::size_t views, std::size_t frames, std::vector<std::uint8_t> values,
                               MaskSource source)
    : views_(views), frames_(frames), values_(std::move(values)), source_(source) {
  if (values_.size() != views_ * frames_) {
    throw DataError("visibility mask holds " + std::to_string(values_.size()) + " values for " +
                    std::to_string(views_) + "x" + std::to_string(frames_));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i] > 1) {
      throw DataError("visibility mask value at row " + std::to_string(i / frames_) + " col " +
                      std::to_string(i % frames_) + " is not binary");
    }
  }
}

VisibilityMask VisibilityMask::all_visible(std::size_t views, std::size_t frames) {
  return VisibilityMask(views, frames, std::vector<std::uint8_t>(views * frames, 1));
}

std::uint8_t VisibilityMask::at(std::size_t view, std::size_t frame) const {
  if (view >= views_ || frame >= frames_) {
    throw ContractError("mask index (" + std::to_string(view) + ", " + std::to_string(frame) +
                        ") outside " + std::to_string(views_) + "x" + std::to_string(frames_));
  }
  return values_[view * frames_ + frame];
}

VisibilityMask VisibilityMask::select_frames(std::span<const std::size_t> indices) const {
  std::vector<std::uint8_t> out;
  out.reserve(views_ * indices.size());
  for (std::size_t n = 0; n < views_; ++n)
    for (auto t : indices) out.push_back(at(n, t));
  return VisibilityMask(views_, indices.size(), std::move(out), source_);
}

int covisible_gate(const VisibilityMask& mask, std::size_t i, std::size_t j, std::size_t t) {
  return mask.at(i, t) && mask.at(j, t) ? 1 : 0;
}

std::size_t covisible_count(const VisibilityMask& mask, std::size_t i, std::size_t j) {
  std::size_t n = 0;
  for (std::size_t t = 0; t < mask.frames(); ++t) n += static_cast<std::size_t>(covisible_gate(mask, i, j, t));
  return n;
}

void save_masks(const VisibilityMask& mask, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write mask file " + path.string());
  out << "{\"views\":" << mask.views() << ",\"frames\":" << mask.frames() << "}\n";
  for (std::size_t n = 0; n < mask.views(); ++n) {
    for (std::size_t t = 0; t < mask.frames(); ++t) {
      if (t) out << ' ';
      out << static_cast<int>(mask.at(n, t));
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing mask file " + path.string());
}

VisibilityMask load_masks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("mask file not found: " + path.string());
  std::string header;
  std::getline(in, header);
  std::size_t views = 0, frames = 0;
  try {
    auto j = nlohmann::json::parse(header);
    views = j.at("views").get<std::size_t>();
    frames = j.at("frames").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad mask header in " + path.string() + ": " + e.what());
  }
  std::vector<std::uint8_t> values;
  values.reserve(views * frames);
  std::string line;
  for (std::size_t row = 0; row < views; ++row) {
    if (!std::getline(in, line)) {
      throw DataError(path.string() + ": expected " + std::to_string(views) + " mask rows, found " +
                      std::to_string(row));
    }
    std::istringstream tokens(line);
    std::string tok;
    std::size_t col = 0;
    while (tokens >> tok) {
      if (col >= frames) {
        throw DataError(path.string() + ": row " + std::to_string(row) + " has more than " +
                        std::to_string(frames) + " columns");
      }
      if (tok != "0" && tok != "1") {
        throw DataError(path.string() + ": non-binary value '" + tok + "' at row " +
                        std::to_string(row) + " col " + std::to_string(col));
      }
      values.push_back(tok == "1" ? 1 : 0);
      ++col;
    }
    if (col != frames) {
      throw DataError(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(col) +
                      " columns, expected " + std::to_string(frames));
    }
  }
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      throw DataError(path.string() + ": trailing data after " + std::to_string(views) + " mask rows");
    }
  }
  return VisibilityMask(views, frames, std::move(values), MaskSource::kExternalFile);
}

VisibilityMask load_masks(const std::filesystem::path& path, std::size_t views, std::size_t frames) {
  auto mask = load_masks(path);
  if (mask.views() != views || mask.frames() != frames) {
    throw DataError(path.string() + ": mask is " + std::to_string(mask.views()) + "x" +
                    std::to_string(mask.frames()) + " but the manifest expects " + std::to_string(views) +
                    "x" + std::to_string(frames));
  }
  return mask;
}

}  // namespace mvkd
