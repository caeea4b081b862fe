// Command-line driver: dataset generation, teacher training, distillation,
// evaluation, the ablation matrix and mAP-vs-epoch reports.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mvkd/errors.hpp"
#include "mvkd/training/trainer.hpp"
#include "report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mvkd {
namespace {

constexpr const char* kRunRootEnv = "MVKD_RUN_ROOT";
constexpr const char* kManifestName = "run_manifest.json";

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

fs::path run_root() {
  const char* env = std::getenv(kRunRootEnv);
  return env && *env ? fs::path(env) : fs::path("runs");
}

// Refuses directories that already hold a run so every run directory has
// exactly one manifest.
fs::path resolve_run_dir(const std::string& out, const std::string& default_name) {
  fs::path dir = out.empty() ? run_root() / default_name : fs::path(out);
  if (fs::exists(dir / kManifestName)) {
    throw UsageError(dir.string() + " already holds a run; pass a different --out");
  }
  return dir;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

struct ManifestInfo {
  std::string command;
  std::vector<std::string> argv;
  json config;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string started;
  json artifacts = json::object();
};

void write_manifest(const fs::path& dir, const ManifestInfo& m) {
  const json doc = {{"command", m.command},   {"argv", m.argv},       {"config", m.config},
                    {"config_hash", m.config_hash}, {"seed", m.seed}, {"started", m.started},
                    {"finished", utc_now()},  {"artifacts", m.artifacts}};
  write_file(dir / kManifestName, doc.dump(2) + "\n");
}

// Flags shared by the training commands.
struct TrainFlags {
  std::string config;
  std::vector<std::string> sets;
  std::string data;
  std::string teacher;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::vector<std::string> ablations;
  bool frame_labels = false;
  bool init_from_teacher = false;
  std::string out;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f, bool student) {
  cmd->add_option("-c,--config", f.config, "JSON training config, or a run manifest to repeat");
  cmd->add_option("--set", f.sets, "Override a config field, e.g. --set loss.tau=4")->allow_extra_args(false);
  cmd->add_option("-d,--data", f.data, "Dataset directory (overrides config 'dataset')");
  cmd->add_option("--seed", f.seed, "Run seed (overrides config 'seed')");
  cmd->add_option("--epochs", f.epochs, "Epoch count (overrides config 'epochs')");
  cmd->add_option("-o,--out", f.out, std::string("Run directory (default $") + kRunRootEnv + "/<name>)");
  if (student) {
    cmd->add_option("-t,--teacher", f.teacher, "Teacher checkpoint (overrides config 'teacher_checkpoint')");
    cmd->add_option("--mode", f.mode, "Student supervision: VF (frame labels) or VS (sequence labels)")
        ->check(CLI::IsMember({"VF", "VS"}));
    cmd->add_flag("--frame-labels", f.frame_labels, "Supervise with frame labels (mode VF)");
    cmd->add_option("--ablate", f.ablations,
                    "Ablation: full, no-confw, no-mask, js-to-kl, no-fd, no-ld, no-vc or none");
    cmd->add_flag("--init-from-teacher", f.init_from_teacher, "Copy the teacher's visual-path weights first");
  }
}

TrainConfig resolve_train_config(const TrainFlags& f, std::optional<SupervisionMode> forced) {
  json doc = to_json(TrainConfig{});
  if (!f.config.empty()) {
    json file = read_json_file(f.config);
    if (file.contains("command") && file.contains("config")) file = file["config"];
    doc = to_json(train_config_from_json(file));
  }
  for (const auto& s : f.sets) apply_override(doc, s);
  if (!f.data.empty()) doc["dataset"] = f.data;
  if (!f.teacher.empty()) doc["teacher_checkpoint"] = f.teacher;
  if (f.seed) doc["seed"] = *f.seed;
  if (f.epochs) doc["epochs"] = *f.epochs;
  if (f.init_from_teacher) doc["init_from_teacher"] = true;

  if (forced) {
    const auto configured = supervision_mode_from_string(doc["mode"].get<std::string>());
    if (configured != *forced) {
      throw UsageError("this command trains mode " + to_string(*forced) + " but the config says " +
                       to_string(configured));
    }
    doc["mode"] = to_string(*forced);
  } else {
    if (f.mode == "VS" && f.frame_labels) {
      throw UsageError("--mode VS trains on sequence labels only; --frame-labels is not allowed");
    }
    if (!f.mode.empty()) doc["mode"] = f.mode;
    else if (f.frame_labels) doc["mode"] = "VF";
    const auto mode = supervision_mode_from_string(doc["mode"].get<std::string>());
    if (mode == SupervisionMode::kTeacher) throw UsageError("distill needs --mode VF or VS");
    if (mode == SupervisionMode::kStudentSequence && f.frame_labels) {
      throw UsageError("mode VS trains on sequence labels only; --frame-labels is not allowed");
    }
  }
  auto cfg = train_config_from_json(doc);
  for (const auto& name : f.ablations) cfg.loss = apply_ablation(cfg.loss, name);
  if (cfg.dataset.empty()) throw UsageError("no dataset: pass --data or set 'dataset' in the config");
  cfg.dataset = fs::absolute(cfg.dataset).lexically_normal();
  if (!cfg.teacher_checkpoint.empty()) cfg.teacher_checkpoint = fs::absolute(cfg.teacher_checkpoint).lexically_normal();
  return cfg;
}

// Checks everything that can be checked before any compute.
void preflight(const TrainConfig& cfg, bool student) {
  const auto data = Dataset::open(cfg.dataset);
  const auto& g = data.config();
  if (cfg.model.visual_dim != g.visual_dim || cfg.model.audio_dim != g.audio_dim ||
      cfg.model.num_classes != g.classes) {
    throw ConfigError("model dims (d_v=" + std::to_string(cfg.model.visual_dim) + ", F=" +
                      std::to_string(cfg.model.audio_dim) + ", C=" + std::to_string(cfg.model.num_classes) +
                      ") do not match dataset " + cfg.dataset.string() + " (d_v=" + std::to_string(g.visual_dim) +
                      ", F=" + std::to_string(g.audio_dim) + ", C=" + std::to_string(g.classes) + ")");
  }
  const std::size_t frames = cfg.frames ? cfg.frames : g.frames;
  if (frames == 0) throw ConfigError("frames must be positive");
  const bool needs_teacher = student && (cfg.loss.use_fd || cfg.loss.use_ld || cfg.init_from_teacher);
  if ((!student || (cfg.loss.use_fd || cfg.loss.use_ld)) && !data.has_audio()) {
    throw ConfigError("dataset " + cfg.dataset.string() + " has no audio arrays");
  }
  if (needs_teacher) {
    if (cfg.teacher_checkpoint.empty()) throw UsageError("distillation needs --teacher");
    const auto t = load_checkpoint(cfg.teacher_checkpoint);
    if (t.kind != ModelKind::kTeacher) throw ConfigError(cfg.teacher_checkpoint.string() + " holds a student");
    if (t.model.visual_dim != cfg.model.visual_dim || t.model.embed_dim != cfg.model.embed_dim ||
        t.model.num_classes != cfg.model.num_classes) {
      throw ConfigError("teacher checkpoint dims (d_v, D, C) do not match the student config");
    }
  }
  if (cfg.eval_each_epoch && cfg.eval_granularity == Granularity::kFrame && data.test_ids().empty()) {
    throw ConfigError("dataset has an empty test split");
  }
}

std::string default_run_name(const std::string& command, const TrainConfig& cfg) {
  return command + "_" + to_string(cfg.mode) + "_" + config_hash(cfg) + "_seed" + std::to_string(cfg.seed);
}

EvalReport evaluate_test_split(const Checkpoint& ckpt, const TrainConfig& cfg, const std::string& hash) {
  const auto data = Dataset::open(cfg.dataset);
  EvalOptions opts{cfg.eval_granularity, cfg.frames, cfg.seed, hash};
  return evaluate(ckpt, data, data.test_ids(), opts);
}

int cmd_train(const std::string& command, const TrainFlags& flags, const std::vector<std::string>& argv) {
  const bool student = command == "distill";
  const auto started = utc_now();
  const auto cfg = resolve_train_config(
      flags, student ? std::nullopt : std::optional<SupervisionMode>(SupervisionMode::kTeacher));
  preflight(cfg, student);
  const auto dir = resolve_run_dir(flags.out, default_run_name(command, cfg));

  std::cerr << command << ": mode " << to_string(cfg.mode) << ", " << cfg.epochs << " epochs, seed " << cfg.seed
            << ", hash " << config_hash(cfg) << "\n";
  const auto result = student ? distill_student(cfg) : train_teacher(cfg);
  const auto report = evaluate_test_split(result.last, cfg, result.config_hash);

  make_dir(dir);
  write_run_artifacts(result, dir);
  write_file(dir / "eval.json", to_json(report).dump(2) + "\n");
  ManifestInfo m{command, argv, to_json(cfg), result.config_hash, cfg.seed, started, json::object()};
  m.artifacts = {{"checkpoint_last", (dir / "checkpoint_last.ckpt").string()},
                 {"checkpoint_best", (dir / "checkpoint_best.ckpt").string()},
                 {"losses", (dir / "losses.csv").string()},
                 {"epochs", (dir / "epochs.jsonl").string()},
                 {"eval", (dir / "eval.json").string()},
                 {"best_epoch", result.best_epoch}};
  write_manifest(dir, m);
  std::cout << dir.string() << "\n"
            << "test mAP (" << to_string(report.granularity) << ", last epoch): " << report.map << "\n";
  return 0;
}

struct GenFlags {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
};

int cmd_gen(const GenFlags& f) {
  json doc = to_json(GenConfig{});
  if (!f.config.empty()) doc = to_json(gen_config_from_json(read_json_file(f.config)));
  for (const auto& s : f.sets) apply_override(doc, s);
  const auto cfg = gen_config_from_json(doc);
  const fs::path out(f.out);
  if (fs::exists(out) && !fs::is_empty(out)) throw UsageError(out.string() + " exists and is not empty");
  const auto t0 = std::chrono::steady_clock::now();
  generate(cfg, out);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << out.string() << "\n"
            << cfg.n_sequences << " sequences in " << secs << " s\n";
  return 0;
}

struct EvalFlags {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string granularity = "frame";
  std::size_t frames = 0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_eval(const EvalFlags& f, const std::vector<std::string>& argv) {
  const auto started = utc_now();
  const auto ckpt = load_checkpoint(f.checkpoint);
  const auto data = Dataset::open(f.data);
  if (ckpt.model.visual_dim != data.config().visual_dim || ckpt.model.num_classes != data.config().classes) {
    throw ConfigError("checkpoint " + f.checkpoint + " does not match dataset " + f.data + " (d_v or C)");
  }
  if (ckpt.kind == ModelKind::kTeacher && !data.has_audio()) {
    throw ConfigError("teacher evaluation needs audio arrays in " + f.data);
  }
  std::vector<std::size_t> ids;
  if (f.split == "test") ids = data.test_ids();
  else if (f.split == "train") ids = data.train_ids();
  else {
    ids = data.train_ids();
    const auto t = data.test_ids();
    ids.insert(ids.end(), t.begin(), t.end());
  }
  EvalOptions opts{granularity_from_string(f.granularity), f.frames, f.seed, ckpt.config_hash};
  const json config = {{"checkpoint", f.checkpoint}, {"dataset", f.data}, {"split", f.split},
                       {"granularity", f.granularity}, {"frames", f.frames}, {"seed", f.seed}};
  const auto dir = resolve_run_dir(f.out, "eval_" + ckpt.config_hash + "_" + f.split + "_" + f.granularity);

  const auto report = evaluate(ckpt, data, ids, opts);
  make_dir(dir);
  write_file(dir / "eval.json", to_json(report).dump(2) + "\n");
  ManifestInfo m{"eval", argv, config, fnv1a_hex(config.dump()), f.seed, started, json::object()};
  m.artifacts = {{"eval", (dir / "eval.json").string()}};
  write_manifest(dir, m);
  std::cout << to_json(report).dump(2) << "\n";
  return 0;
}

struct AblateFlags {
  TrainFlags train;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::vector<std::string> variants;
  std::size_t jobs = 1;
};

int cmd_ablate(const AblateFlags& f, const std::vector<std::string>& argv) {
  const auto started = utc_now();
  if (!f.train.ablations.empty()) throw UsageError("ablate runs every variant; use --variants to pick a subset");
  auto base = resolve_train_config(f.train, std::nullopt);
  const auto variants = f.variants.empty() ? default_ablation_variants() : f.variants;
  for (const auto& v : variants) apply_ablation(base.loss, v);  // rejects unknown names early
  if (f.seeds.empty()) throw UsageError("--seeds needs at least one seed");
  if (f.jobs == 0) throw UsageError("--jobs must be >= 1");
  preflight(base, true);
  if (base.teacher_checkpoint.empty()) throw UsageError("ablate needs --teacher");
  const auto dir = resolve_run_dir(f.train.out, "ablate_" + to_string(base.mode) + "_" + config_hash(base));
  for (const auto& v : variants) {
    for (auto seed : f.seeds) {
      if (fs::exists(dir / (v + "_seed" + std::to_string(seed)) / kManifestName)) {
        throw UsageError((dir / (v + "_seed" + std::to_string(seed))).string() + " already holds a run");
      }
    }
  }

  const auto teacher = load_checkpoint(base.teacher_checkpoint);
  std::cerr << "ablate: " << variants.size() << " variants x " << f.seeds.size() << " seeds, " << f.jobs
            << " jobs\n";
  make_dir(dir);
  const auto table = run_ablation_suite(teacher, base, f.seeds, variants, f.jobs, dir);

  for (const auto& run : table.runs) {
    TrainConfig cfg = base;
    cfg.loss = apply_ablation(base.loss, run.variant);
    cfg.seed = run.seed;
    const auto sub = dir / (run.variant + "_seed" + std::to_string(run.seed));
    ManifestInfo m{"distill", argv, to_json(cfg), config_hash(cfg), cfg.seed, started, json::object()};
    m.artifacts = {{"checkpoint_last", (sub / "checkpoint_last.ckpt").string()},
                   {"checkpoint_best", (sub / "checkpoint_best.ckpt").string()},
                   {"losses", (sub / "losses.csv").string()},
                   {"epochs", (sub / "epochs.jsonl").string()},
                   {"eval", (sub / "eval.json").string()}};
    write_manifest(sub, m);
  }
  json runs = json::array();
  for (const auto& run : table.runs) runs.push_back(run.variant + "_seed" + std::to_string(run.seed));
  ManifestInfo m{"ablate", argv, to_json(base), config_hash(base), base.seed, started, json::object()};
  m.config["seeds"] = f.seeds;
  m.config["variants"] = variants;
  m.artifacts = {{"table", (dir / "ablation.csv").string()}, {"runs", runs}};
  write_manifest(dir, m);
  std::cout << dir.string() << "\n" << table.to_csv();
  return 0;
}

struct ReportFlags {
  std::vector<std::string> dirs;
  std::string out = "report";
};

int cmd_report(const ReportFlags& f) {
  std::vector<fs::path> dirs(f.dirs.begin(), f.dirs.end());
  const auto series = load_series(dirs);
  const fs::path prefix(f.out);
  if (prefix.has_parent_path() && !fs::exists(prefix.parent_path())) make_dir(prefix.parent_path());
  write_file(prefix.string() + ".csv", series_csv(series));
  write_file(prefix.string() + ".svg", series_svg(series));
  std::cout << prefix.string() << ".csv\n" << prefix.string() << ".svg\n";
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Multi-view audio-visual distillation experiments"};
  app.require_subcommand(1);
  const std::vector<std::string> args(argv, argv + argc);

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic multi-view dataset");
  gen_cmd->add_option("-c,--config", gen.config, "JSON generator config (every field required)");
  gen_cmd->add_option("--set", gen.sets, "Override a generator field, e.g. --set seed=3");
  gen_cmd->add_option("-o,--out", gen.out, "Output directory")->required();

  TrainFlags teacher;
  auto* teacher_cmd = app.add_subcommand("train-teacher", "Train the audio-visual teacher (mode AVF)");
  add_train_flags(teacher_cmd, teacher, false);

  TrainFlags distill;
  auto* distill_cmd = app.add_subcommand("distill", "Train a visual-only student against a frozen teacher");
  add_train_flags(distill_cmd, distill, true);

  EvalFlags eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("-d,--data", eval.data, "Dataset directory")->required();
  eval_cmd->add_option("--split", eval.split, "test, train or all")->check(CLI::IsMember({"test", "train", "all"}));
  eval_cmd->add_option("--granularity", eval.granularity, "frame or sequence")
      ->check(CLI::IsMember({"frame", "sequence"}));
  eval_cmd->add_option("--frames", eval.frames, "Sampled frames per sequence (0: dataset T)");
  eval_cmd->add_option("--seed", eval.seed, "Seed recorded in the report");
  eval_cmd->add_option("-o,--out", eval.out, "Run directory");

  AblateFlags ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "Full method plus single-toggle ablations over seeds");
  add_train_flags(ablate_cmd, ablate.train, true);
  ablate_cmd->add_option("--seeds", ablate.seeds, "Seeds (default 0 1 2)")->delimiter(',');
  ablate_cmd->add_option("--variants", ablate.variants, "Variants (default: the six table rows)")->delimiter(',');
  ablate_cmd->add_option("-j,--jobs", ablate.jobs, "Concurrent runs");

  ReportFlags report;
  auto* report_cmd = app.add_subcommand("report", "Merge per-epoch reports into CSV and an SVG chart");
  report_cmd->add_option("dirs", report.dirs, "Run directories");
  report_cmd->add_option("-o,--out", report.out, "Output prefix; writes <prefix>.csv and <prefix>.svg");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help and version requests exit 0; malformed command lines are usage errors.
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen);
    if (*teacher_cmd) return cmd_train("train-teacher", teacher, args);
    if (*distill_cmd) return cmd_train("distill", distill, args);
    if (*eval_cmd) return cmd_eval(eval, args);
    if (*ablate_cmd) return cmd_ablate(ablate, args);
    if (*report_cmd) return cmd_report(report);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace
}  // namespace mvkd

int main(int argc, char** argv) { return mvkd::run(argc, argv); }
