#pragma once

// Per-class average precision and macro mAP for multi-label scores.

#include <cstdint>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mvkd {

enum class Granularity { kFrame, kSequence };

std::string to_string(Granularity g);
Granularity granularity_from_string(const std::string& s);

struct EvalReport {
  // One entry per class; classes without positives hold nullopt.
  std::vector<std::optional<double>> per_class_ap;
  std::vector<std::size_t> excluded_classes;
  double map = 0.0;
  std::size_t n_samples = 0;
  Granularity granularity = Granularity::kFrame;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::optional<std::size_t> epoch;

  bool operator==(const EvalReport&) const = default;
};

nlohmann::json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);

// Mean over positive ranks of precision at that rank, with scores sorted
// descending and ties kept in index order. Returns nullopt without positives.
std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Row-major n x C scores and labels. Throws EvaluationError when no class
// has a positive.
EvalReport mean_average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                  std::size_t n, std::size_t classes);

}  // namespace mvkd
