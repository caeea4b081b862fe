#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "mvkd/errors.hpp"
#include "mvkd/rng.hpp"
#include "mvkd/synthdata.hpp"

namespace mvkd {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mvkd_synth_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

GenConfig small_config() {
  GenConfig cfg;
  cfg.n_sequences = 20;
  cfg.frames = 8;
  return cfg;
}

TEST(GenConfig, JsonRoundTrip) {
  GenConfig cfg = small_config();
  cfg.coverage = {{0.0, 0.4}, {0.2, 0.9}, {0.5, 1.0}};
  auto back = gen_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
}

TEST(GenConfig, MissingFieldIsNamed) {
  auto j = to_json(GenConfig{});
  j.erase("sigma_a");
  try {
    gen_config_from_json(j);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("sigma_a"), std::string::npos);
  }
}

TEST(GenConfig, UnknownFieldAndBadValuesRejected) {
  auto j = to_json(GenConfig{});
  j["colour"] = 1;
  EXPECT_THROW(gen_config_from_json(j), ConfigError);
  j = to_json(GenConfig{});
  j["coverage"] = {{0.2, 1.4}, {0.0, 0.5}, {0.5, 1.0}};
  EXPECT_THROW(gen_config_from_json(j), ConfigError);
  j = to_json(GenConfig{});
  j["sigma_v"] = -1.0;
  EXPECT_THROW(gen_config_from_json(j), ConfigError);
  j = to_json(GenConfig{});
  j["views"] = "three";
  EXPECT_THROW(gen_config_from_json(j), ConfigError);
}

TEST(Generate, SameSeedGivesIdenticalBytes) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  generate(small_config(), a);
  generate(small_config(), b);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename();
    ASSERT_TRUE(fs::exists(b / name)) << name;
    EXPECT_EQ(slurp(entry.path()), slurp(b / name)) << name;
    ++files;
  }
  EXPECT_EQ(files, 1u + 4u * 20u);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Generate, DifferentSeedsDiffer) {
  auto cfg = small_config();
  const auto a = scratch("seed_a"), b = scratch("seed_b");
  generate(cfg, a);
  cfg.seed += 1;
  generate(cfg, b);
  EXPECT_NE(slurp(a / "seq_0000_visual.bin"), slurp(b / "seq_0000_visual.bin"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Generate, ManifestCountsAndSplit) {
  const auto dir = scratch("manifest");
  generate(small_config(), dir);
  auto ds = Dataset::open(dir);
  EXPECT_EQ(ds.size(), 20u);
  EXPECT_EQ(ds.train_ids().size() + ds.test_ids().size(), 20u);
  EXPECT_EQ(ds.train_ids().size(), 15u);  // ceil(20 * 12/17)
  std::ifstream in(dir / "manifest.json");
  auto m = nlohmann::json::parse(in);
  ASSERT_EQ(m["sequences"].size(), 20u);
  for (const auto& s : m["sequences"]) EXPECT_EQ(s["visual"]["shape"][0], 3);
  auto sample = ds.load(0, {});
  EXPECT_EQ(sample.visual.size(), 3u);
  EXPECT_FALSE(sample.audio.has_value());
  EXPECT_FALSE(sample.frame_labels.has_value());
  fs::remove_all(dir);
}

TEST(Generate, UnwritablePathIsIoError) {
  EXPECT_THROW(generate(small_config(), "/proc/mvkd_cannot_write_here"), IoError);
}

TEST(Generate, DefaultConfigSplitsInto120And50) {
  std::vector<std::vector<std::uint8_t>> labels;
  GenConfig cfg;
  const auto basis = make_basis(cfg);
  for (std::size_t id = 0; id < cfg.n_sequences; ++id) {
    auto seq = generate_sequence(cfg, basis, id);
    std::vector<std::uint8_t> row(cfg.classes, 0);
    for (const auto& ev : seq.events) row[ev.cls] = 1;
    labels.push_back(row);
  }
  auto split = stratified_split(labels, cfg.train_ratio);
  EXPECT_EQ(split.train.size(), 120u);
  EXPECT_EQ(split.test.size(), 50u);
}

TEST(Generate, NoiseFreeVisibleRowsEqualClassSignal) {
  GenConfig cfg;
  cfg.sigma_v = 0.0;
  cfg.sigma_a = 0.0;
  cfg.max_events = 1;
  const auto basis = make_basis(cfg);
  std::size_t checked = 0;
  for (std::size_t id = 0; id < 30; ++id) {
    const auto seq = generate_sequence(cfg, basis, id);
    ASSERT_EQ(seq.events.size(), 1u);
    const auto& ev = seq.events[0];
    const auto signal = class_signal(basis, ev.cls, false, cfg);
    for (std::size_t n = 0; n < cfg.views; ++n)
      for (std::size_t t = 0; t < seq.length; ++t) {
        const double* row = &seq.visual[(n * seq.length + t) * cfg.visual_dim];
        const bool active = t >= ev.start && t < ev.end && seq.mask.at(n, t);
        for (std::size_t d = 0; d < cfg.visual_dim; ++d) EXPECT_EQ(row[d], active ? signal[d] : 0.0);
        checked += active;
      }
  }
  EXPECT_GT(checked, 0u);
}

TEST(Generate, LabelConsistencyAndVisibilityFaithfulness) {
  GenConfig cfg;
  const auto basis = make_basis(cfg);
  std::size_t invisible_pairs = 0;
  for (std::size_t id = 0; id < cfg.n_sequences; ++id) {
    const auto seq = generate_sequence(cfg, basis, id);
    for (std::size_t t = 0; t < seq.length; ++t)
      for (std::size_t n = 0; n < cfg.views; ++n) {
        const auto [lo, hi] = cfg.coverage[n];
        EXPECT_EQ(seq.mask.at(n, t), seq.position[t] >= lo && seq.position[t] <= hi);
      }
    std::vector<int> seq_label(cfg.classes, 0), from_frames(cfg.classes, 0);
    for (const auto& ev : seq.events) seq_label[ev.cls] = 1;
    for (std::size_t t = 0; t < seq.length; ++t)
      for (std::size_t c = 0; c < cfg.classes; ++c)
        if (seq.frame_labels[t * cfg.classes + c] == 1.0) from_frames[c] = 1;
    EXPECT_EQ(seq_label, from_frames);
    for (const auto& ev : seq.events)
      for (std::size_t n = 0; n < cfg.views; ++n) {
        bool seen = false;
        for (std::size_t t = ev.start; t < ev.end; ++t) seen = seen || seq.mask.at(n, t);
        invisible_pairs += !seen;
      }
  }
  EXPECT_GT(invisible_pairs, 0u);
}

TEST(Generate, VisibleViewsCarryMoreEnergyWithoutNoise) {
  GenConfig cfg;
  cfg.sigma_v = 0.0;
  const auto basis = make_basis(cfg);
  for (std::size_t id = 0; id < 40; ++id) {
    const auto seq = generate_sequence(cfg, basis, id);
    for (std::size_t t = 0; t < seq.length; ++t) {
      bool any_active = false;
      for (const auto& ev : seq.events) any_active = any_active || (t >= ev.start && t < ev.end);
      if (!any_active) continue;
      double covering = -1.0, other = -1.0;
      for (std::size_t n = 0; n < cfg.views; ++n) {
        double energy = 0.0;
        for (std::size_t d = 0; d < cfg.visual_dim; ++d) {
          const double v = seq.visual[(n * seq.length + t) * cfg.visual_dim + d];
          energy += v * v;
        }
        if (seq.mask.at(n, t)) covering = energy;
        else other = energy;
      }
      if (covering >= 0.0 && other >= 0.0) EXPECT_GT(covering, other);
    }
  }
}

TEST(Generate, AudioIsSharedAcrossViews) {
  GenConfig cfg;
  const auto seq = generate_sequence(cfg, make_basis(cfg), 3);
  const std::size_t per_view = seq.length * cfg.audio_dim;
  for (std::size_t n = 1; n < cfg.views; ++n)
    for (std::size_t i = 0; i < per_view; ++i) EXPECT_EQ(seq.audio[n * per_view + i], seq.audio[i]);
}

TEST(Generate, ConcurrencyNeverExceedsLimit) {
  GenConfig cfg;
  cfg.max_events = 6;
  const auto basis = make_basis(cfg);
  for (std::size_t id = 0; id < 50; ++id) {
    const auto seq = generate_sequence(cfg, basis, id);
    EXPECT_GE(seq.length, cfg.frames);
    EXPECT_LE(seq.length, 2 * cfg.frames);
    for (std::size_t t = 0; t < seq.length; ++t) {
      std::size_t active = 0;
      for (const auto& ev : seq.events) active += t >= ev.start && t < ev.end;
      EXPECT_LE(active, cfg.max_concurrent);
    }
  }
}

TEST(Dataset, CountsFrameLabelAndAudioReads) {
  const auto dir = scratch("reads");
  generate(small_config(), dir);
  auto ds = Dataset::open(dir);
  EXPECT_TRUE(ds.has_audio());
  ds.load(0, {});
  ds.load(1, {.audio = true});
  EXPECT_EQ(ds.frame_label_reads(), 0u);
  EXPECT_EQ(ds.audio_reads(), 1u);
  auto s = ds.load(2, {.audio = false, .frame_labels = true});
  EXPECT_EQ(ds.frame_label_reads(), 1u);
  ASSERT_TRUE(s.frame_labels.has_value());
  EXPECT_EQ(s.frame_labels->rows(), s.length);
  fs::remove_all(dir);
}

TEST(Dataset, TruncatedArrayIsDataError) {
  const auto dir = scratch("truncated");
  generate(small_config(), dir);
  fs::resize_file(dir / "seq_0001_visual.bin", 16);
  auto ds = Dataset::open(dir);
  EXPECT_THROW(ds.load(1, {}), DataError);
  EXPECT_THROW(Dataset::open(scratch("absent")), DataError);
  fs::remove_all(dir);
}

TEST(F64Files, LittleEndianLayout) {
  const auto p = fs::temp_directory_path() / "mvkd_f64_layout.bin";
  const std::vector<double> v = {1.0, -2.5};
  write_f64(p, v);
  const auto bytes = slurp(p);
  ASSERT_EQ(bytes.size(), 16u);
  // 1.0 = 0x3FF0000000000000
  EXPECT_EQ(static_cast<unsigned char>(bytes[7]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 0xF0);
  EXPECT_EQ(read_f64(p, 2), v);
  EXPECT_THROW(read_f64(p, 3), DataError);
  fs::remove(p);
}

TEST(FrameSample, EvalUsesFloorAnchors) {
  EXPECT_EQ(frame_sample(10, 5, SampleMode::kEval, 0), (std::vector<std::size_t>{0, 2, 4, 6, 8}));
  EXPECT_EQ(frame_sample(7, 3, SampleMode::kEval, 0), (std::vector<std::size_t>{0, 2, 4}));
  EXPECT_EQ(frame_sample(2, 4, SampleMode::kEval, 0), (std::vector<std::size_t>{0, 0, 1, 1}));
}

TEST(FrameSample, EvalIdentityWhenLengthsMatch) {
  auto idx = frame_sample(9, 9, SampleMode::kEval, 123);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(idx[i], i);
}

TEST(FrameSample, TrainIsSeededJitterWithinHalfStride) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t len = 1 + rng.below(60), target = 1 + rng.below(30);
    const std::uint64_t seed = rng.next();
    auto a = frame_sample(len, target, SampleMode::kTrain, seed);
    EXPECT_EQ(a, frame_sample(len, target, SampleMode::kTrain, seed));
    ASSERT_EQ(a.size(), target);
    const double stride = static_cast<double>(len) / static_cast<double>(target);
    for (std::size_t k = 0; k < target; ++k) {
      EXPECT_LT(a[k], len);
      if (k) EXPECT_GE(a[k], a[k - 1]);
      EXPECT_LE(std::abs(static_cast<double>(a[k]) - static_cast<double>(k) * stride), stride / 2 + 1.0);
    }
  }
}

TEST(FrameSample, ZeroTargetIsContractError) {
  EXPECT_THROW(frame_sample(10, 0, SampleMode::kEval, 0), ContractError);
}

TEST(TakeRows, PicksRowsInOrder) {
  auto t = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  const std::vector<std::size_t> idx = {2, 0, 0};
  auto r = take_rows(t, idx);
  EXPECT_EQ(std::vector<double>(r.data().begin(), r.data().end()), (std::vector<double>{5, 6, 1, 2, 1, 2}));
}

TEST(StratifiedSplit, IdenticalLabelsGiveCeilSizes) {
  for (std::size_t n : {1, 2, 10, 17, 33}) {
    std::vector<std::vector<std::uint8_t>> labels(n, {1, 0, 1});
    auto s = stratified_split(labels, 0.7);
    EXPECT_EQ(s.train.size(), static_cast<std::size_t>(std::ceil(0.7 * static_cast<double>(n) - 1e-9)));
    EXPECT_EQ(s.train.size() + s.test.size(), n);
  }
}

TEST(StratifiedSplit, DisjointGroupsSplitSevenThree) {
  std::vector<std::vector<std::uint8_t>> labels;
  for (int i = 0; i < 10; ++i) labels.push_back({1, 0});
  for (int i = 0; i < 10; ++i) labels.push_back({0, 1});
  auto s = stratified_split(labels, 0.7);
  std::size_t a = 0;
  for (auto id : s.train) a += id < 10;
  EXPECT_EQ(a, 7u);
  EXPECT_EQ(s.train.size() - a, 7u);
  // Traced by hand with the greedy rule.
  EXPECT_EQ(s.test, (std::vector<std::size_t>{4, 6, 8, 14, 16, 18}));
}

TEST(StratifiedSplit, ExactPartitionAndDeterminism) {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 10 + rng.below(60), c = 1 + rng.below(5);
    std::vector<std::vector<std::uint8_t>> labels(n, std::vector<std::uint8_t>(c));
    for (auto& row : labels)
      for (auto& v : row) v = rng.uniform() < 0.3;
    auto s = stratified_split(labels, 0.7);
    EXPECT_EQ(s, stratified_split(labels, 0.7));
    EXPECT_EQ(s.train.size(), static_cast<std::size_t>(std::ceil(0.7 * static_cast<double>(n) - 1e-9)));
    std::vector<int> seen(n, 0);
    for (auto id : s.train) ++seen[id];
    for (auto id : s.test) ++seen[id];
    for (int v : seen) EXPECT_EQ(v, 1);
  }
}

TEST(StratifiedSplit, SingleLabelGroupsKeepProportionsWithinOne) {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 1 + rng.below(4);
    std::vector<std::vector<std::uint8_t>> labels;
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t i = 0, size = 10 * (1 + rng.below(3)); i < size; ++i) {
        std::vector<std::uint8_t> row(c, 0);
        row[k] = 1;
        labels.push_back(row);
      }
    for (std::size_t i = 0, extra = rng.below(8); i < extra; ++i) labels.emplace_back(c, 0);
    auto s = stratified_split(labels, 0.7);
    for (std::size_t k = 0; k < c; ++k) {
      double total = 0, in_train = 0;
      for (const auto& row : labels) total += row[k];
      for (auto id : s.train) in_train += labels[id][k];
      EXPECT_LE(std::abs(in_train - 0.7 * total), 1.0 + 1e-9);
    }
  }
}

TEST(StratifiedSplit, MultiLabelProportionsStayCloseOnAverage) {
  Rng rng(11);
  double deviation = 0.0;
  std::size_t count = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 30 + rng.below(140), c = 6;
    std::vector<std::vector<std::uint8_t>> labels(n, std::vector<std::uint8_t>(c));
    for (auto& row : labels)
      for (auto& v : row) v = rng.uniform() < 0.3;
    auto s = stratified_split(labels, 0.7);
    for (std::size_t k = 0; k < c; ++k) {
      double total = 0, in_train = 0;
      for (const auto& row : labels) total += row[k];
      for (auto id : s.train) in_train += labels[id][k];
      deviation += std::abs(in_train - 0.7 * total);
      ++count;
    }
  }
  EXPECT_LT(deviation / static_cast<double>(count), 1.0);
}

TEST(StratifiedSplit, EmptyIsContractError) {
  EXPECT_THROW(stratified_split({}, 0.7), ContractError);
}

}  // namespace
}  // namespace mvkd
