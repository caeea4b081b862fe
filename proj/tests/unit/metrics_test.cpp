#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "mvkd/errors.hpp"
#include "mvkd/metrics.hpp"
#include "mvkd/rng.hpp"

namespace mvkd {
namespace {

using Labels = std::vector<std::uint8_t>;

// Rank of each item computed by pairwise counting instead of sorting.
std::optional<double> brute_force_ap(const std::vector<double>& s, const Labels& y) {
  const std::size_t n = s.size();
  std::vector<std::size_t> rank(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (s[j] > s[i] || (s[j] == s[i] && j < i)) ++rank[i];
  std::vector<std::size_t> positive_ranks;
  for (std::size_t i = 0; i < n; ++i)
    if (y[i]) positive_ranks.push_back(rank[i]);
  if (positive_ranks.empty()) return std::nullopt;
  std::sort(positive_ranks.begin(), positive_ranks.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < positive_ranks.size(); ++k) {
    sum += static_cast<double>(k + 1) / static_cast<double>(positive_ranks[k] + 1);
  }
  return sum / static_cast<double>(positive_ranks.size());
}

TEST(AveragePrecision, HandCases) {
  EXPECT_NEAR(*average_precision(std::vector<double>{.9, .8, .7}, Labels{1, 0, 1}), (1.0 + 2.0 / 3.0) / 2.0, 1e-12);
  EXPECT_NEAR(*average_precision(std::vector<double>{.9, .8, .7}, Labels{1, 0, 1}), 0.8333, 1e-4);
  EXPECT_EQ(*average_precision(std::vector<double>{.9, .8, .1, .0}, Labels{1, 1, 0, 0}), 1.0);
  // One positive ranked last of five.
  EXPECT_DOUBLE_EQ(*average_precision(std::vector<double>{.1, .2, .3, .4, .5}, Labels{1, 0, 0, 0, 0}), 0.2);
}

TEST(AveragePrecision, TiesBrokenByIndex) {
  EXPECT_EQ(*average_precision(std::vector<double>{.5, .5}, Labels{1, 0}), 1.0);
  EXPECT_EQ(*average_precision(std::vector<double>{.5, .5}, Labels{0, 1}), 0.5);
}

TEST(AveragePrecision, NoPositivesIsUndefined) {
  EXPECT_FALSE(average_precision(std::vector<double>{.5, .1}, Labels{0, 0}).has_value());
  EXPECT_THROW(average_precision(std::vector<double>{.5}, Labels{0, 1}), DimensionError);
}

TEST(AveragePrecision, MatchesBruteForceExactly) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(80);
    std::vector<double> s(n);
    Labels y(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse scores force plenty of ties.
      s[i] = trial % 2 ? std::floor(rng.uniform() * 5.0) / 5.0 : rng.uniform();
      y[i] = rng.uniform() < 0.3;
    }
    EXPECT_EQ(average_precision(s, y), brute_force_ap(s, y));
  }
}

TEST(AveragePrecision, InvariantToMonotoneTransform) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    std::vector<double> s(n), t(n);
    Labels y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.uniform(-3, 3);
      t[i] = std::exp(2.0 * s[i]) + 1.0;
      y[i] = rng.uniform() < 0.4;
    }
    y[0] = 1;
    EXPECT_NEAR(*average_precision(t, y), *average_precision(s, y), 1e-12);
  }
}

// With index tie-breaking, the two copies of the k-th positive (original
// rank r) land at ranks 2r-1 and 2r, contributing (2k-1)/(2r-1) and k/r.
// Duplication is therefore exact only for positives with k == r.
TEST(AveragePrecision, DuplicationFollowsTiedRankAlgebra) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    std::vector<double> s(n), dup;
    Labels y(n), ydup;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.uniform();
      y[i] = rng.uniform() < 0.4;
    }
    y[0] = 1;
    for (std::size_t i = 0; i < n; ++i) {
      dup.insert(dup.end(), {s[i], s[i]});
      ydup.insert(ydup.end(), {y[i], y[i]});
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s[a] > s[b]; });
    double expected = 0.0, k = 0.0;
    for (std::size_t r = 1; r <= n; ++r) {
      if (!y[order[r - 1]]) continue;
      k += 1.0;
      const double rd = static_cast<double>(r);
      expected += (2 * k - 1) / (2 * rd - 1) + k / rd;
    }
    expected /= 2 * k;
    EXPECT_NEAR(*average_precision(dup, ydup), expected, 1e-12);
    if (*average_precision(s, y) == 1.0) EXPECT_EQ(*average_precision(dup, ydup), 1.0);
  }
}

TEST(MeanAveragePrecision, ArithmeticMeanAndExclusion) {
  // Class 0: perfect (1.0). Class 1: positive ranked second of two (0.5). Class 2: no positives.
  const std::vector<double> scores = {0.9, 0.1, 0.0, 0.2, 0.8, 0.5};
  const Labels labels = {1, 1, 0, 0, 0, 0};
  auto r = mean_average_precision(scores, labels, 2, 3);
  EXPECT_DOUBLE_EQ(r.map, 0.75);
  EXPECT_EQ(r.excluded_classes, std::vector<std::size_t>{2});
  EXPECT_FALSE(r.per_class_ap[2].has_value());
  EXPECT_EQ(r.n_samples, 2u);
}

TEST(MeanAveragePrecision, SingleClassEqualsItsAp) {
  const std::vector<double> s = {.9, .8, .7};
  auto r = mean_average_precision(s, Labels{1, 0, 1}, 3, 1);
  EXPECT_EQ(r.map, *average_precision(s, Labels{1, 0, 1}));
}

TEST(MeanAveragePrecision, AllClassesEmptyIsEvaluationError) {
  EXPECT_THROW(mean_average_precision(std::vector<double>{.1, .2}, Labels{0, 0}, 1, 2), EvaluationError);
}

TEST(MeanAveragePrecision, SeededFixtureMatchesBruteForceAndIsPermutationInvariant) {
  Rng rng(3);
  const std::size_t n = 50, c = 6;
  std::vector<double> s(n * c);
  Labels y(n * c);
  for (std::size_t i = 0; i < n * c; ++i) {
    s[i] = rng.uniform();
    y[i] = rng.uniform() < 0.3;
  }
  auto r = mean_average_precision(s, y, n, c);
  double total = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    std::vector<double> cs(n);
    Labels cy(n);
    for (std::size_t i = 0; i < n; ++i) {
      cs[i] = s[i * c + k];
      cy[i] = y[i * c + k];
    }
    EXPECT_EQ(r.per_class_ap[k], brute_force_ap(cs, cy));
    total += *r.per_class_ap[k];
  }
  EXPECT_EQ(r.map, total / static_cast<double>(c));

  const std::vector<std::size_t> perm = {3, 5, 0, 1, 4, 2};
  std::vector<double> ps(n * c);
  Labels py(n * c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k) {
      ps[i * c + k] = s[i * c + perm[k]];
      py[i * c + k] = y[i * c + perm[k]];
    }
  EXPECT_NEAR(mean_average_precision(ps, py, n, c).map, r.map, 1e-12);
}

TEST(EvalReport, JsonRoundTrip) {
  EvalReport r;
  r.per_class_ap = {0.5, std::nullopt, 1.0};
  r.excluded_classes = {1};
  r.map = 0.75;
  r.n_samples = 12;
  r.granularity = Granularity::kSequence;
  r.seed = 42;
  r.config_hash = "abc";
  r.epoch = 3;
  EXPECT_EQ(eval_report_from_json(nlohmann::json::parse(to_json(r).dump())), r);
  EXPECT_THROW(eval_report_from_json(nlohmann::json::object()), DataError);
}

}  // namespace
}  // namespace mvkd
