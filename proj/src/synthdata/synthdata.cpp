#include "mvkd/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "mvkd/errors.hpp"
#include "mvkd/rng.hpp"

namespace mvkd {
namespace {

using nlohmann::json;

constexpr std::uint64_t kBasisStream = 0xC1A55;
constexpr std::uint64_t kSequenceStream = 0x5E0000;
constexpr int kManifestFormat = 1;

const std::vector<std::string> kGenFields = {
    "n_sequences", "views",       "frames",         "classes",       "max_concurrent",
    "max_events",  "coverage",    "sigma_v",        "sigma_a",       "visual_dim",
    "audio_dim",   "latent_dim",  "audio_global",   "subject_speed", "train_ratio",
    "seed"};

std::string seq_stem(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seq_%04zu", id);
  return buf;
}

template <typename T>
T field(const json& j, const std::string& name) {
  try {
    return j.at(name).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("dataset config field '" + name + "': " + e.what());
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace

void GenConfig::validate() const {
  if (n_sequences < 2) throw ConfigError("n_sequences must be >= 2");
  if (views == 0) throw ConfigError("views must be >= 1");
  if (frames == 0) throw ConfigError("frames must be >= 1");
  if (classes == 0) throw ConfigError("classes must be >= 1");
  if (max_concurrent == 0) throw ConfigError("max_concurrent must be >= 1");
  if (max_events == 0) throw ConfigError("max_events must be >= 1");
  if (visual_dim == 0 || audio_dim == 0 || latent_dim == 0) throw ConfigError("feature dims must be >= 1");
  if (coverage.size() != views) {
    throw ConfigError("coverage lists " + std::to_string(coverage.size()) + " intervals for " +
                      std::to_string(views) + " views");
  }
  for (std::size_t n = 0; n < coverage.size(); ++n) {
    const auto [lo, hi] = coverage[n];
    if (!(lo >= 0.0 && hi <= 1.0 && lo <= hi)) {
      throw ConfigError("coverage[" + std::to_string(n) + "] must satisfy 0 <= lo <= hi <= 1");
    }
  }
  if (!(sigma_v >= 0.0)) throw ConfigError("sigma_v must be >= 0");
  if (!(sigma_a >= 0.0)) throw ConfigError("sigma_a must be >= 0");
  if (!(subject_speed >= 0.0)) throw ConfigError("subject_speed must be >= 0");
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw ConfigError("train_ratio must be in (0, 1)");
}

json to_json(const GenConfig& cfg) {
  json cov = json::array();
  for (const auto& c : cfg.coverage) cov.push_back({c[0], c[1]});
  return json{{"n_sequences", cfg.n_sequences},
              {"views", cfg.views},
              {"frames", cfg.frames},
              {"classes", cfg.classes},
              {"max_concurrent", cfg.max_concurrent},
              {"max_events", cfg.max_events},
              {"coverage", cov},
              {"sigma_v", cfg.sigma_v},
              {"sigma_a", cfg.sigma_a},
              {"visual_dim", cfg.visual_dim},
              {"audio_dim", cfg.audio_dim},
              {"latent_dim", cfg.latent_dim},
              {"audio_global", cfg.audio_global},
              {"subject_speed", cfg.subject_speed},
              {"train_ratio", cfg.train_ratio},
              {"seed", cfg.seed}};
}

GenConfig gen_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("dataset config must be a JSON object");
  for (const auto& name : kGenFields) {
    if (!j.contains(name)) throw ConfigError("dataset config is missing field '" + name + "'");
  }
  for (const auto& [key, value] : j.items()) {
    if (std::find(kGenFields.begin(), kGenFields.end(), key) == kGenFields.end()) {
      throw ConfigError("dataset config has unknown field '" + key + "'");
    }
  }
  GenConfig cfg;
  cfg.n_sequences = field<std::size_t>(j, "n_sequences");
  cfg.views = field<std::size_t>(j, "views");
  cfg.frames = field<std::size_t>(j, "frames");
  cfg.classes = field<std::size_t>(j, "classes");
  cfg.max_concurrent = field<std::size_t>(j, "max_concurrent");
  cfg.max_events = field<std::size_t>(j, "max_events");
  cfg.coverage = field<std::vector<std::array<double, 2>>>(j, "coverage");
  cfg.sigma_v = field<double>(j, "sigma_v");
  cfg.sigma_a = field<double>(j, "sigma_a");
  cfg.visual_dim = field<std::size_t>(j, "visual_dim");
  cfg.audio_dim = field<std::size_t>(j, "audio_dim");
  cfg.latent_dim = field<std::size_t>(j, "latent_dim");
  cfg.audio_global = field<bool>(j, "audio_global");
  cfg.subject_speed = field<double>(j, "subject_speed");
  cfg.train_ratio = field<double>(j, "train_ratio");
  cfg.seed = field<std::uint64_t>(j, "seed");
  cfg.validate();
  return cfg;
}

ClassBasis make_basis(const GenConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, kBasisStream));
  ClassBasis b;
  b.codes.resize(cfg.classes * cfg.latent_dim);
  for (auto& v : b.codes) v = rng.normal();
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
  b.visual.resize(cfg.latent_dim * cfg.visual_dim);
  for (auto& v : b.visual) v = rng.normal(0.0, scale);
  b.audio.resize(cfg.latent_dim * cfg.audio_dim);
  for (auto& v : b.audio) v = rng.normal(0.0, scale);
  return b;
}

std::vector<double> class_signal(const ClassBasis& basis, std::size_t cls, bool audio, const GenConfig& cfg) {
  const std::size_t out_dim = audio ? cfg.audio_dim : cfg.visual_dim;
  const auto& mix = audio ? basis.audio : basis.visual;
  std::vector<double> out(out_dim, 0.0);
  for (std::size_t k = 0; k < cfg.latent_dim; ++k) {
    const double e = basis.codes[cls * cfg.latent_dim + k];
    for (std::size_t d = 0; d < out_dim; ++d) out[d] += e * mix[k * out_dim + d];
  }
  return out;
}

RawSequence generate_sequence(const GenConfig& cfg, const ClassBasis& basis, std::size_t id) {
  Rng rng(mix_seed(cfg.seed, kSequenceStream + id));
  RawSequence seq;
  const std::size_t len = cfg.frames + rng.below(cfg.frames + 1);
  seq.length = len;

  // Events; a candidate that would push concurrency above K is redrawn.
  std::vector<std::size_t> active_count(len, 0);
  const std::size_t n_events = 1 + rng.below(cfg.max_events);
  for (std::size_t e = 0; e < n_events; ++e) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      Event ev;
      ev.cls = rng.below(cfg.classes);
      const std::size_t min_dur = std::max<std::size_t>(1, len / 4);
      const std::size_t max_dur = std::max(min_dur, len / 2);
      const std::size_t dur = min_dur + rng.below(max_dur - min_dur + 1);
      ev.start = rng.below(len - dur + 1);
      ev.end = ev.start + dur;
      bool fits = true;
      for (std::size_t t = ev.start; t < ev.end; ++t) fits = fits && active_count[t] < cfg.max_concurrent;
      if (!fits) continue;
      for (std::size_t t = ev.start; t < ev.end; ++t) ++active_count[t];
      seq.events.push_back(ev);
      break;
    }
  }

  // Subject wanders along the unit line, reflecting at the ends.
  seq.position.resize(len);
  double p = rng.uniform();
  for (std::size_t t = 0; t < len; ++t) {
    if (t > 0) {
      p += rng.uniform(-cfg.subject_speed, cfg.subject_speed);
      if (p < 0.0) p = -p;
      if (p > 1.0) p = 2.0 - p;
      p = std::clamp(p, 0.0, 1.0);
    }
    seq.position[t] = p;
  }

  const std::size_t n_views = cfg.views, c_count = cfg.classes;
  std::vector<std::uint8_t> mask(n_views * len);
  for (std::size_t n = 0; n < n_views; ++n)
    for (std::size_t t = 0; t < len; ++t) {
      const auto [lo, hi] = cfg.coverage[n];
      mask[n * len + t] = seq.position[t] >= lo && seq.position[t] <= hi;
    }
  seq.mask = VisibilityMask(n_views, len, mask);

  seq.frame_labels.assign(len * c_count, 0.0);
  for (const auto& ev : seq.events)
    for (std::size_t t = ev.start; t < ev.end; ++t) seq.frame_labels[t * c_count + ev.cls] = 1.0;

  std::vector<std::vector<double>> vis_sig(c_count), aud_sig(c_count);
  for (std::size_t c = 0; c < c_count; ++c) {
    vis_sig[c] = class_signal(basis, c, false, cfg);
    aud_sig[c] = class_signal(basis, c, true, cfg);
  }
  auto add_active = [&](std::size_t t, const std::vector<std::vector<double>>& sig, double* row,
                        std::size_t dim) {
    for (const auto& ev : seq.events) {
      if (t < ev.start || t >= ev.end) continue;
      for (std::size_t d = 0; d < dim; ++d) row[d] += sig[ev.cls][d];
    }
  };

  const std::size_t dv = cfg.visual_dim, fa = cfg.audio_dim;
  seq.visual.assign(n_views * len * dv, 0.0);
  for (std::size_t n = 0; n < n_views; ++n)
    for (std::size_t t = 0; t < len; ++t) {
      double* row = &seq.visual[(n * len + t) * dv];
      for (std::size_t d = 0; d < dv; ++d) row[d] = rng.normal(0.0, cfg.sigma_v);
      if (mask[n * len + t]) add_active(t, vis_sig, row, dv);
    }

  seq.audio.assign(n_views * len * fa, 0.0);
  for (std::size_t n = 0; n < n_views; ++n)
    for (std::size_t t = 0; t < len; ++t) {
      double* row = &seq.audio[(n * len + t) * fa];
      if (cfg.audio_global && n > 0) {
        std::copy_n(&seq.audio[t * fa], fa, row);
        continue;
      }
      for (std::size_t d = 0; d < fa; ++d) row[d] = rng.normal(0.0, cfg.sigma_a);
      add_active(t, aud_sig, row, fa);
    }
  return seq;
}

void write_f64(const std::filesystem::path& path, std::span<const double> values) {
  std::vector<unsigned char> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &values[i], 8);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<double> read_f64(const std::filesystem::path& path, std::size_t expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing array file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != expected * 8) {
    throw DataError(path.string() + " holds " + std::to_string(bytes.size()) + " bytes, expected " +
                    std::to_string(expected * 8));
  }
  std::vector<double> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    std::memcpy(&out[i], &bits, 8);
  }
  return out;
}

void generate(const GenConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  const auto basis = make_basis(cfg);
  json sequences = json::array();
  std::vector<std::vector<std::uint8_t>> seq_labels;
  for (std::size_t id = 0; id < cfg.n_sequences; ++id) {
    const auto seq = generate_sequence(cfg, basis, id);
    const auto stem = seq_stem(id);
    write_f64(out_dir / (stem + "_visual.bin"), seq.visual);
    write_f64(out_dir / (stem + "_audio.bin"), seq.audio);
    write_f64(out_dir / (stem + "_labels.bin"), seq.frame_labels);
    save_masks(seq.mask, out_dir / (stem + "_mask.txt"));

    std::vector<std::uint8_t> labels(cfg.classes, 0);
    for (const auto& ev : seq.events) labels[ev.cls] = 1;
    seq_labels.push_back(labels);
    json events = json::array();
    for (const auto& ev : seq.events) events.push_back({{"class", ev.cls}, {"start", ev.start}, {"end", ev.end}});
    sequences.push_back({{"id", id},
                         {"length", seq.length},
                         {"visual", {{"file", stem + "_visual.bin"}, {"shape", {cfg.views, seq.length, cfg.visual_dim}}}},
                         {"audio", {{"file", stem + "_audio.bin"}, {"shape", {cfg.views, seq.length, cfg.audio_dim}}}},
                         {"frame_labels", {{"file", stem + "_labels.bin"}, {"shape", {seq.length, cfg.classes}}}},
                         {"mask", stem + "_mask.txt"},
                         {"sequence_labels", labels},
                         {"events", events}});
  }
  const auto split = stratified_split(seq_labels, cfg.train_ratio);
  json names = json::array();
  for (std::size_t c = 0; c < cfg.classes; ++c) names.push_back("class_" + std::to_string(c));
  json manifest = {{"format", kManifestFormat},
                   {"config", to_json(cfg)},
                   {"class_names", names},
                   {"split", {{"train", split.train}, {"test", split.test}}},
                   {"sequences", sequences}};
  std::ofstream out(out_dir / "manifest.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + (out_dir / "manifest.json").string());
  out << manifest.dump(1) << '\n';
  if (!out) throw IoError("failed writing manifest in " + out_dir.string());
}

Dataset Dataset::open(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw DataError("no manifest.json in " + dir.string());
  const json m = read_json_file(manifest_path);
  Dataset ds;
  ds.dir_ = dir;
  try {
    if (m.at("format").get<int>() != kManifestFormat) throw DataError("unsupported manifest format");
    ds.config_ = gen_config_from_json(m.at("config"));
    ds.class_names_ = m.at("class_names").get<std::vector<std::string>>();
    ds.train_ = m.at("split").at("train").get<std::vector<std::size_t>>();
    ds.test_ = m.at("split").at("test").get<std::vector<std::size_t>>();
    for (const auto& s : m.at("sequences")) {
      Entry e;
      e.length = s.at("length").get<std::size_t>();
      e.visual_file = s.at("visual").at("file").get<std::string>();
      if (s.contains("audio")) e.audio_file = s.at("audio").at("file").get<std::string>();
      e.labels_file = s.at("frame_labels").at("file").get<std::string>();
      e.mask_file = s.at("mask").get<std::string>();
      const auto labels = s.at("sequence_labels").get<std::vector<double>>();
      if (labels.size() != ds.config_.classes) throw DataError("sequence label width differs from class count");
      e.sequence_labels = Tensor({1, labels.size()}, labels);
      ds.entries_.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  if (ds.entries_.size() != ds.config_.n_sequences) throw DataError("manifest sequence count mismatch");
  std::set<std::size_t> seen;
  for (auto id : ds.train_) seen.insert(id);
  for (auto id : ds.test_) seen.insert(id);
  if (seen.size() != ds.entries_.size() || ds.train_.size() + ds.test_.size() != ds.entries_.size() ||
      (!seen.empty() && *seen.rbegin() >= ds.entries_.size())) {
    throw DataError("manifest split is not a partition of the sequences");
  }
  return ds;
}

bool Dataset::has_audio() const {
  return std::all_of(entries_.begin(), entries_.end(), [&](const Entry& e) {
    return !e.audio_file.empty() && std::filesystem::exists(dir_ / e.audio_file);
  });
}

const Tensor& Dataset::sequence_labels(std::size_t id) const {
  if (id >= entries_.size()) throw ContractError("sequence id " + std::to_string(id) + " out of range");
  return entries_[id].sequence_labels;
}

MultiViewSample Dataset::load(std::size_t id, SampleAccess access) const {
  if (id >= entries_.size()) throw ContractError("sequence id " + std::to_string(id) + " out of range");
  const auto& e = entries_[id];
  const std::size_t n = config_.views, len = e.length;
  MultiViewSample s;
  s.id = id;
  s.length = len;
  s.sequence_labels = e.sequence_labels;

  auto split_views = [&](const std::vector<double>& flat, std::size_t dim) {
    std::vector<Tensor> out;
    for (std::size_t v = 0; v < n; ++v) {
      const auto first = flat.begin() + static_cast<std::ptrdiff_t>(v * len * dim);
      out.emplace_back(Shape{len, dim}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(len * dim)));
    }
    return out;
  };
  s.visual = split_views(read_f64(dir_ / e.visual_file, n * len * config_.visual_dim), config_.visual_dim);
  if (access.audio) {
    if (e.audio_file.empty()) throw ConfigError("dataset has no audio arrays");
    s.audio = split_views(read_f64(dir_ / e.audio_file, n * len * config_.audio_dim), config_.audio_dim);
    audio_reads_->fetch_add(1);
  }
  if (access.frame_labels) {
    s.frame_labels = Tensor({len, config_.classes}, read_f64(dir_ / e.labels_file, len * config_.classes));
    frame_label_reads_->fetch_add(1);
  }
  s.mask = load_masks(dir_ / e.mask_file, n, len);
  return s;
}

std::vector<std::size_t> frame_sample(std::size_t length, std::size_t target, SampleMode mode,
                                      std::uint64_t seed) {
  if (target == 0) throw ContractError("frame_sample needs a target of at least 1 frame");
  if (length == 0) throw ContractError("frame_sample needs a sequence of at least 1 frame");
  const double stride = static_cast<double>(length) / static_cast<double>(target);
  std::vector<std::size_t> out(target);
  Rng rng(seed);
  std::size_t prev = 0;
  for (std::size_t k = 0; k < target; ++k) {
    std::size_t idx = k * length / target;
    if (mode == SampleMode::kTrain) {
      const double pos = (static_cast<double>(k) + rng.uniform() - 0.5) * stride;
      idx = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0, static_cast<double>(length - 1)));
    }
    idx = std::max(idx, prev);
    out[k] = idx;
    prev = idx;
  }
  return out;
}

Tensor take_rows(const Tensor& t, std::span<const std::size_t> indices) {
  const std::size_t cols = t.cols();
  std::vector<double> out;
  out.reserve(indices.size() * cols);
  for (auto i : indices) {
    if (i >= t.rows()) throw ContractError("row index " + std::to_string(i) + " out of range");
    const auto row = t.data().subspan(i * cols, cols);
    out.insert(out.end(), row.begin(), row.end());
  }
  return Tensor({indices.size(), cols}, std::move(out));
}

Split stratified_split(const std::vector<std::vector<std::uint8_t>>& labels, double ratio) {
  if (labels.empty()) throw ContractError("stratified_split of an empty dataset");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ContractError("split ratio must be in (0, 1)");
  const std::size_t n = labels.size(), c_count = labels[0].size();
  const double ratios[2] = {ratio, 1.0 - ratio};
  // Overall integer targets; the small slack absorbs ratios like 12/17 * 170.
  const auto n_train = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
  double overall[2] = {static_cast<double>(std::min(n_train, n)), static_cast<double>(n - std::min(n_train, n))};

  std::vector<std::array<double, 2>> desired(c_count);
  std::vector<std::size_t> remaining(c_count, 0);
  for (const auto& row : labels) {
    if (row.size() != c_count) throw DimensionError("stratified_split: label rows differ in width");
    for (std::size_t c = 0; c < c_count; ++c) remaining[c] += row[c] ? 1 : 0;
  }
  for (std::size_t c = 0; c < c_count; ++c)
    for (int s = 0; s < 2; ++s) desired[c][s] = ratios[s] * static_cast<double>(remaining[c]);

  std::vector<int> side(n, -1);
  auto assign = [&](std::size_t id, int s) {
    side[id] = s;
    overall[s] -= 1.0;
    for (std::size_t c = 0; c < c_count; ++c) {
      if (!labels[id][c]) continue;
      desired[c][s] -= 1.0;
      --remaining[c];
    }
  };
  auto pick_side = [&](const double* by_label) {
    // Full splits are skipped; then largest label demand, overall demand, train.
    if (overall[0] <= 0.0) return 1;
    if (overall[1] <= 0.0) return 0;
    if (by_label) {
      if (by_label[0] != by_label[1]) return by_label[0] > by_label[1] ? 0 : 1;
    }
    if (overall[0] != overall[1]) return overall[0] > overall[1] ? 0 : 1;
    return 0;
  };

  while (true) {
    std::size_t best = c_count;
    for (std::size_t c = 0; c < c_count; ++c) {
      if (remaining[c] == 0) continue;
      if (best == c_count || remaining[c] < remaining[best]) best = c;
    }
    if (best == c_count) break;
    for (std::size_t id = 0; id < n; ++id) {
      if (side[id] != -1 || !labels[id][best]) continue;
      assign(id, pick_side(desired[best].data()));
    }
  }
  for (std::size_t id = 0; id < n; ++id)
    if (side[id] == -1) assign(id, pick_side(nullptr));

  Split out;
  for (std::size_t id = 0; id < n; ++id) (side[id] == 0 ? out.train : out.test).push_back(id);
  return out;
}

}  // namespace mvkd
