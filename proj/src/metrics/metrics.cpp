#include "mvkd/metrics.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <numeric>

#include "mvkd/errors.hpp"

namespace mvkd {

std::string to_string(Granularity g) { return g == Granularity::kFrame ? "frame" : "sequence"; }

Granularity granularity_from_string(const std::string& s) {
  if (s == "frame") return Granularity::kFrame;
  if (s == "sequence") return Granularity::kSequence;
  throw ConfigError("granularity must be 'frame' or 'sequence', got '" + s + "'");
}

std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("average_precision: " + std::to_string(scores.size()) + " scores for " +
                         std::to_string(labels.size()) + " labels");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double hits = 0.0, sum = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (!labels[order[rank]]) continue;
    hits += 1.0;
    sum += hits / static_cast<double>(rank + 1);
  }
  if (hits == 0.0) return std::nullopt;
  return sum / hits;
}

EvalReport mean_average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                  std::size_t n, std::size_t classes) {
  if (scores.size() != n * classes || labels.size() != n * classes) {
    throw DimensionError("mean_average_precision: expected " + std::to_string(n) + "x" +
                         std::to_string(classes) + " scores and labels");
  }
  EvalReport r;
  r.n_samples = n;
  std::vector<double> col_scores(n);
  std::vector<std::uint8_t> col_labels(n);
  double total = 0.0;
  std::size_t valid = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      col_scores[i] = scores[i * classes + c];
      col_labels[i] = labels[i * classes + c];
    }
    auto ap = average_precision(col_scores, col_labels);
    r.per_class_ap.push_back(ap);
    if (ap) {
      total += *ap;
      ++valid;
    } else {
      r.excluded_classes.push_back(c);
    }
  }
  if (valid == 0) throw EvaluationError("no class has a positive sample; mAP is undefined");
  r.map = total / static_cast<double>(valid);
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json ap = nlohmann::json::array();
  for (const auto& v : r.per_class_ap) ap.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  nlohmann::json j = {{"per_class_ap", ap},
                      {"excluded_classes", r.excluded_classes},
                      {"map", r.map},
                      {"n_samples", r.n_samples},
                      {"granularity", to_string(r.granularity)},
                      {"seed", r.seed},
                      {"config_hash", r.config_hash}};
  if (r.epoch) j["epoch"] = *r.epoch;
  return j;
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    for (const auto& v : j.at("per_class_ap")) {
      r.per_class_ap.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
    }
    r.excluded_classes = j.at("excluded_classes").get<std::vector<std::size_t>>();
    r.map = j.at("map").get<double>();
    r.n_samples = j.at("n_samples").get<std::size_t>();
    r.granularity = granularity_from_string(j.at("granularity").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    if (j.contains("epoch")) r.epoch = j.at("epoch").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed evaluation report: ") + e.what());
  }
}

}  // namespace mvkd
