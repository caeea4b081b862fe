#include "mvkd/training/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <nlohmann/json.hpp>
#include <thread>

#include "mvkd/errors.hpp"
#include "mvkd/numerics/ops.hpp"
#include "mvkd/rng.hpp"

namespace mvkd {
namespace {

constexpr std::uint64_t kShuffleStream = 0x5A11;
constexpr std::uint64_t kValidationStream = 0x7A11D;

struct Prepared {
  std::vector<MultiViewSample> train;
  std::vector<MultiViewSample> val;
  std::vector<MultiViewSample> test;
  std::size_t frames = 0;
  std::size_t train_frame_label_reads = 0;
  std::size_t train_audio_reads = 0;
};

bool uses_teacher(const LossConfig& l) { return l.use_fd || l.use_ld; }

void check_compatibility(const TrainConfig& cfg, const Dataset& data) {
  const auto& g = data.config();
  if (cfg.model.visual_dim != g.visual_dim) {
    throw ConfigError("model.visual_dim is " + std::to_string(cfg.model.visual_dim) + " but the dataset has d_v = " +
                      std::to_string(g.visual_dim));
  }
  if (cfg.model.audio_dim != g.audio_dim) {
    throw ConfigError("model.audio_dim is " + std::to_string(cfg.model.audio_dim) + " but the dataset has F = " +
                      std::to_string(g.audio_dim));
  }
  if (cfg.model.num_classes != g.classes) {
    throw ConfigError("model.num_classes is " + std::to_string(cfg.model.num_classes) + " but the dataset has " +
                      std::to_string(g.classes) + " classes");
  }
}

void check_teacher(const Checkpoint& teacher, const TrainConfig& cfg) {
  if (teacher.kind != ModelKind::kTeacher) throw ConfigError("teacher checkpoint holds a student model");
  const auto& a = teacher.model;
  const auto& b = cfg.model;
  if (a.visual_dim != b.visual_dim || a.embed_dim != b.embed_dim || a.num_classes != b.num_classes) {
    throw ConfigError("teacher checkpoint dims (d_v, D, C) do not match the student config");
  }
}

Prepared prepare(const TrainConfig& cfg, const Dataset& train_loader, const Dataset& eval_loader,
                 bool teacher_mode, bool need_teacher_audio) {
  Prepared p;
  p.frames = cfg.frames ? cfg.frames : train_loader.config().frames;
  const bool frame_supervision = cfg.mode != SupervisionMode::kStudentSequence;

  std::vector<std::size_t> ids = train_loader.train_ids();
  if (ids.size() < 2 && cfg.val_fraction > 0.0) throw ConfigError("train split too small for a validation slice");
  Rng rng(kValidationStream);
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
  std::size_t n_val = static_cast<std::size_t>(std::ceil(cfg.val_fraction * static_cast<double>(ids.size())));
  if (cfg.val_fraction > 0.0) n_val = std::clamp<std::size_t>(n_val, 1, ids.size() - 1);
  std::vector<std::size_t> val(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());

  const SampleAccess train_access{.audio = teacher_mode || need_teacher_audio, .frame_labels = frame_supervision};
  for (auto id : train) p.train.push_back(train_loader.load(id, train_access));
  const SampleAccess val_access{.audio = teacher_mode, .frame_labels = frame_supervision};
  for (auto id : val) p.val.push_back(train_loader.load(id, val_access));
  p.train_frame_label_reads = train_loader.frame_label_reads();
  p.train_audio_reads = train_loader.audio_reads();

  if (cfg.eval_each_epoch) {
    const SampleAccess test_access{.audio = teacher_mode,
                                   .frame_labels = cfg.eval_granularity == Granularity::kFrame};
    for (auto id : eval_loader.test_ids()) p.test.push_back(eval_loader.load(id, test_access));
  }
  return p;
}

std::vector<ViewOutputs> teacher_views(const TeacherNet& net, const MultiViewSample& s,
                                       std::span<const std::size_t> idx) {
  if (!s.audio) throw ConfigError("teacher forward needs audio arrays");
  std::vector<ViewOutputs> out;
  for (std::size_t n = 0; n < s.visual.size(); ++n) {
    out.push_back(net.forward_view(take_rows(s.visual[n], idx), take_rows((*s.audio)[n], idx)));
  }
  return out;
}

std::vector<ViewOutputs> student_views(const StudentNet& net, const MultiViewSample& s,
                                       std::span<const std::size_t> idx) {
  std::vector<ViewOutputs> out;
  for (const auto& v : s.visual) out.push_back(net.forward_view(take_rows(v, idx)));
  return out;
}

using Forward = std::function<std::vector<ViewOutputs>(const MultiViewSample&, std::span<const std::size_t>)>;

EvalReport evaluate_samples(const Forward& forward, std::span<const MultiViewSample> samples, Granularity g,
                            std::size_t frames, std::size_t classes) {
  NoGradGuard no_grad;
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::size_t rows = 0;
  for (const auto& s : samples) {
    const auto idx = frame_sample(s.length, frames, SampleMode::kEval, 0);
    const auto views = forward(s, idx);
    const double inv_n = 1.0 / static_cast<double>(views.size());
    if (g == Granularity::kFrame) {
      if (!s.frame_labels) throw ContractError("frame-level evaluation needs frame labels");
      const auto y = take_rows(*s.frame_labels, idx);
      for (std::size_t t = 0; t < idx.size(); ++t) {
        for (std::size_t c = 0; c < classes; ++c) {
          double p = 0.0;
          for (const auto& v : views) p += 1.0 / (1.0 + std::exp(-v.frame_logits.at(t, c)));
          scores.push_back(p * inv_n);
          labels.push_back(y.at(t, c) != 0.0);
        }
        ++rows;
      }
    } else {
      for (std::size_t c = 0; c < classes; ++c) {
        double p = 0.0;
        for (const auto& v : views) p += 1.0 / (1.0 + std::exp(-v.sequence_logits.at(c)));
        scores.push_back(p * inv_n);
        labels.push_back(s.sequence_labels.at(c) != 0.0);
      }
      ++rows;
    }
  }
  auto report = mean_average_precision(scores, labels, rows, classes);
  report.granularity = g;
  return report;
}

Tensor mean_of(const std::vector<Tensor>& terms) {
  Tensor acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = ops::add(acc, terms[i]);
  return ops::scale(acc, 1.0 / static_cast<double>(terms.size()));
}

struct LoopHooks {
  NamedParams params;
  // Builds the scalar objective of one sequence at the given frame indices.
  std::function<ObjectiveTerms(const MultiViewSample&, std::span<const std::size_t>)> objective;
  std::function<Checkpoint(std::size_t epoch, const std::string& rng_state)> snapshot;
  Forward eval_forward;
};

TrainResult run_loop(const TrainConfig& cfg, const Prepared& data, LoopHooks hooks, Granularity val_granularity) {
  TrainResult result;
  result.config_hash = config_hash(cfg);
  result.train_frame_label_reads = data.train_frame_label_reads;
  result.train_audio_reads = data.train_audio_reads;
  if (data.train.empty()) throw ConfigError("no training sequences");

  const std::size_t n = data.train.size();
  const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = batches * cfg.epochs;
  std::vector<Tensor> params;
  for (auto& [name, t] : hooks.params) params.push_back(t);
  for (auto& p : params) p.zero_grad();

  AdamState adam;
  Rng rng(mix_seed(cfg.seed, kShuffleStream));
  std::vector<std::size_t> order(n);
  std::size_t step = 0;
  bool have_best = false;
  const std::size_t classes = cfg.model.num_classes;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    for (std::size_t b = 0; b < batches; ++b) {
      const double lr = cosine_lr(step, total_steps, cfg.lr, cfg.lr_min);
      const std::size_t lo = b * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
      const double inv_b = 1.0 / static_cast<double>(hi - lo);
      Tape tape;
      Tensor total;
      LossBreakdown sum;
      {
        TapeScope scope(tape);
        std::vector<Tensor> totals;
        for (std::size_t k = lo; k < hi; ++k) {
          const auto& sample = data.train[order[k]];
          const auto idx = frame_sample(sample.length, data.frames, SampleMode::kTrain, rng.next());
          auto terms = hooks.objective(sample, idx);
          totals.push_back(terms.total);
          sum.frame += terms.values.frame;
          sum.sequence += terms.values.sequence;
          sum.feature_distill += terms.values.feature_distill;
          sum.logit_distill += terms.values.logit_distill;
          sum.view_consistency += terms.values.view_consistency;
          sum.total += terms.values.total;
        }
        total = mean_of(totals);
      }
      tape.backward(total);
      std::vector<std::vector<double>> grads;
      grads.reserve(params.size());
      for (auto& p : params) grads.push_back(p.grad());
      adam_step(hooks.params, grads, adam, lr, cfg.weight_decay);
      for (auto& p : params) p.zero_grad();

      ++step;
      StepRecord rec;
      rec.step = step;
      rec.lr = lr;
      rec.loss = {sum.frame * inv_b,           sum.sequence * inv_b,         sum.feature_distill * inv_b,
                  sum.logit_distill * inv_b,   sum.view_consistency * inv_b, sum.total * inv_b};
      result.steps.push_back(rec);
    }

    if (!data.val.empty()) {
      const auto val = evaluate_samples(hooks.eval_forward, data.val, val_granularity, data.frames, classes);
      if (!have_best || val.map > result.best_val_map) {
        have_best = true;
        result.best_val_map = val.map;
        result.best_epoch = epoch;
        result.best = hooks.snapshot(epoch, rng.state());
      }
    }
    if (cfg.eval_each_epoch && !data.test.empty()) {
      auto report = evaluate_samples(hooks.eval_forward, data.test, cfg.eval_granularity, data.frames, classes);
      report.seed = cfg.seed;
      report.config_hash = result.config_hash;
      report.epoch = epoch;
      result.epoch_reports.push_back(report);
    }
  }
  result.last = hooks.snapshot(cfg.epochs, rng.state());
  if (!have_best) {
    result.best = result.last;
    result.best_epoch = cfg.epochs;
  }
  return result;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ObjectiveTerms teacher_objective(std::span<const ViewOutputs> views, const Tensor& frame_labels,
                                 const Tensor& sequence_labels, const Linear& classifier, const LossConfig& cfg) {
  std::vector<Tensor> frame, seq;
  for (const auto& v : views) {
    frame.push_back(frame_classification_loss(v.frame_logits, frame_labels, cfg.classification));
    seq.push_back(sequence_classification_loss(v.fusion, sequence_labels, classifier.weight, classifier.bias,
                                               cfg.classification));
  }
  ObjectiveTerms out;
  const auto l_f = mean_of(frame);
  const auto l_s = mean_of(seq);
  out.total = supervision_objective(l_f, l_s, cfg.lambda_t);
  out.values.frame = l_f.item();
  out.values.sequence = l_s.item();
  out.values.total = out.total.item();
  return out;
}

ObjectiveTerms student_objective(std::span<const ViewOutputs> student, std::span<const ViewOutputs> teacher,
                                 const Tensor* frame_labels, const Tensor& sequence_labels,
                                 const VisibilityMask& mask, const Linear& classifier, const LossConfig& cfg) {
  if (uses_teacher(cfg) && teacher.size() != student.size()) {
    throw ContractError("feature/logit distillation needs teacher outputs for every view");
  }
  std::vector<Tensor> seq;
  for (const auto& v : student) {
    seq.push_back(sequence_classification_loss(v.fusion, sequence_labels, classifier.weight, classifier.bias,
                                               cfg.classification));
  }
  ObjectiveTerms out;
  const auto l_s = mean_of(seq);
  out.values.sequence = l_s.item();
  Tensor total;
  if (frame_labels) {
    std::vector<Tensor> frame;
    for (const auto& v : student) {
      frame.push_back(frame_classification_loss(v.frame_logits, *frame_labels, cfg.classification));
    }
    const auto l_f = mean_of(frame);
    out.values.frame = l_f.item();
    total = supervision_objective(l_f, l_s, cfg.lambda_t);
  } else {
    total = l_s;
  }

  if (cfg.use_fd) {
    std::vector<Tensor> t_attn, s_attn, t_av, s_av;
    for (std::size_t n = 0; n < student.size(); ++n) {
      t_attn.push_back(teacher[n].attended);
      s_attn.push_back(student[n].attended);
      t_av.push_back(teacher[n].fused);
      s_av.push_back(student[n].fused);
    }
    const auto fd = feature_distillation(t_attn, s_attn, t_av, s_av);
    out.values.feature_distill = fd.item();
    total = ops::add(total, ops::scale(fd, cfg.fd_weight));
  }
  if (cfg.use_ld) {
    std::vector<Tensor> t_logits, s_logits;
    for (std::size_t n = 0; n < student.size(); ++n) {
      t_logits.push_back(teacher[n].frame_logits);
      s_logits.push_back(student[n].frame_logits);
    }
    const auto ld = cfg.ld_aggregate_first
                        ? logit_distillation_aggregated(t_logits, s_logits, cfg.tau)
                        : logit_distillation(t_logits, s_logits, cfg.tau, cfg.ld_mask_gated ? &mask : nullptr);
    out.values.logit_distill = ld.item();
    total = ops::add(total, ops::scale(ld, cfg.ld_weight));
  }
  if (cfg.use_vc) {
    std::vector<Tensor> probs;
    for (const auto& v : student) probs.push_back(ops::softmax(v.frame_logits, 1));
    const auto vc = view_consistency(probs, mask, cfg);
    out.values.view_consistency = vc.value.item();
    if (!vc.degenerate) total = ops::add(total, ops::scale(vc.value, cfg.vc_weight));
  }
  out.total = total;
  out.values.total = total.item();
  return out;
}

TrainResult train_teacher(const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.mode != SupervisionMode::kTeacher) throw ConfigError("train_teacher needs mode AVF");
  const auto train_loader = Dataset::open(cfg.dataset);
  const auto eval_loader = Dataset::open(cfg.dataset);
  check_compatibility(cfg, train_loader);
  if (!train_loader.has_audio()) throw ConfigError("teacher training needs audio arrays in " + cfg.dataset.string());
  const auto data = prepare(cfg, train_loader, eval_loader, true, false);

  auto net = TeacherNet::create(cfg.model, cfg.seed);
  const auto hash = config_hash(cfg);
  LoopHooks hooks;
  hooks.params = net.parameters();
  hooks.objective = [&](const MultiViewSample& s, std::span<const std::size_t> idx) {
    const auto views = teacher_views(net, s, idx);
    return teacher_objective(views, take_rows(*s.frame_labels, idx), s.sequence_labels, net.head.classifier,
                             cfg.loss);
  };
  hooks.snapshot = [&](std::size_t epoch, const std::string& state) { return snapshot(net, hash, epoch, state); };
  hooks.eval_forward = [&](const MultiViewSample& s, std::span<const std::size_t> idx) {
    return teacher_views(net, s, idx);
  };
  return run_loop(cfg, data, std::move(hooks), Granularity::kFrame);
}

TrainResult distill_student(const TrainConfig& cfg, const Checkpoint* teacher_ckpt) {
  cfg.validate();
  if (cfg.mode == SupervisionMode::kTeacher) throw ConfigError("distill_student needs mode VF or VS");
  const auto train_loader = Dataset::open(cfg.dataset);
  const auto eval_loader = Dataset::open(cfg.dataset);
  check_compatibility(cfg, train_loader);

  const bool need_teacher = uses_teacher(cfg.loss) || cfg.init_from_teacher;
  Checkpoint loaded;
  if (need_teacher && !teacher_ckpt) {
    if (cfg.teacher_checkpoint.empty()) {
      throw ConfigError("feature/logit distillation or init_from_teacher needs a teacher checkpoint");
    }
    loaded = load_checkpoint(cfg.teacher_checkpoint);
    teacher_ckpt = &loaded;
  }
  std::optional<TeacherNet> teacher;
  if (need_teacher) {
    check_teacher(*teacher_ckpt, cfg);
    teacher = teacher_from_checkpoint(*teacher_ckpt);
  }
  const bool teacher_forward = uses_teacher(cfg.loss);
  if (teacher_forward && !train_loader.has_audio()) {
    throw ConfigError("the teacher needs audio arrays in " + cfg.dataset.string());
  }
  const auto data = prepare(cfg, train_loader, eval_loader, false, teacher_forward);

  auto net = StudentNet::create(cfg.model, cfg.seed);
  if (cfg.init_from_teacher) net.init_from_teacher(*teacher);
  const auto hash = config_hash(cfg);
  const bool frame_supervision = cfg.mode == SupervisionMode::kStudentFrame;

  LoopHooks hooks;
  hooks.params = net.parameters();
  hooks.objective = [&](const MultiViewSample& s, std::span<const std::size_t> idx) {
    std::vector<ViewOutputs> t_views;
    if (teacher_forward) {
      NoGradGuard frozen;
      t_views = teacher_views(*teacher, s, idx);
    }
    const auto s_views = student_views(net, s, idx);
    std::optional<Tensor> labels;
    if (frame_supervision) labels = take_rows(*s.frame_labels, idx);
    return student_objective(s_views, t_views, labels ? &*labels : nullptr, s.sequence_labels,
                             s.mask.select_frames(idx), net.head.classifier, cfg.loss);
  };
  hooks.snapshot = [&](std::size_t epoch, const std::string& state) { return snapshot(net, hash, epoch, state); };
  hooks.eval_forward = [&](const MultiViewSample& s, std::span<const std::size_t> idx) {
    return student_views(net, s, idx);
  };
  return run_loop(cfg, data, std::move(hooks), frame_supervision ? Granularity::kFrame : Granularity::kSequence);
}

EvalReport evaluate(const Checkpoint& ckpt, const Dataset& data, std::span<const std::size_t> ids,
                    const EvalOptions& options) {
  if (ckpt.model.visual_dim != data.config().visual_dim || ckpt.model.num_classes != data.config().classes) {
    throw ConfigError("checkpoint and dataset disagree on d_v or class count");
  }
  const bool teacher = ckpt.kind == ModelKind::kTeacher;
  const SampleAccess access{.audio = teacher, .frame_labels = options.granularity == Granularity::kFrame};
  std::vector<MultiViewSample> samples;
  for (auto id : ids) samples.push_back(data.load(id, access));
  const std::size_t frames = options.frames ? options.frames : data.config().frames;
  EvalReport report;
  if (teacher) {
    const auto net = teacher_from_checkpoint(ckpt);
    report = evaluate_samples([&](const MultiViewSample& s, std::span<const std::size_t> idx) {
      return teacher_views(net, s, idx);
    }, samples, options.granularity, frames, ckpt.model.num_classes);
  } else {
    const auto net = student_from_checkpoint(ckpt);
    report = evaluate_samples([&](const MultiViewSample& s, std::span<const std::size_t> idx) {
      return student_views(net, s, idx);
    }, samples, options.granularity, frames, ckpt.model.num_classes);
  }
  report.seed = options.seed;
  report.config_hash = options.config_hash.empty() ? ckpt.config_hash : options.config_hash;
  report.epoch = ckpt.epoch;
  return report;
}

std::string losses_csv(std::span<const StepRecord> steps) {
  std::string out = "step,L_F,L_S,L_FD,L_LD,L_VC,total,lr\n";
  for (const auto& s : steps) {
    out += std::to_string(s.step) + "," + fmt(s.loss.frame) + "," + fmt(s.loss.sequence) + "," +
           fmt(s.loss.feature_distill) + "," + fmt(s.loss.logit_distill) + "," + fmt(s.loss.view_consistency) +
           "," + fmt(s.loss.total) + "," + fmt(s.lr) + "\n";
  }
  return out;
}

void write_run_artifacts(const TrainResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  save_checkpoint(result.last, dir / "checkpoint_last.ckpt");
  save_checkpoint(result.best, dir / "checkpoint_best.ckpt");
  write_text(dir / "losses.csv", losses_csv(result.steps));
  std::string lines;
  for (const auto& r : result.epoch_reports) lines += to_json(r).dump() + "\n";
  write_text(dir / "epochs.jsonl", lines);
}

const std::vector<std::string>& default_ablation_variants() {
  static const std::vector<std::string> names = {"full", "no-confw", "no-mask", "js-to-kl", "no-fd", "no-ld"};
  return names;
}

LossConfig apply_ablation(LossConfig base, const std::string& name) {
  if (name == "full") return base;
  if (name == "no-confw") base.use_conf_weight = false;
  else if (name == "no-mask") base.use_mask = false;
  else if (name == "js-to-kl") base.divergence = Divergence::kKullbackLeibler;
  else if (name == "no-fd") base.use_fd = false;
  else if (name == "no-ld") base.use_ld = false;
  else if (name == "no-vc") base.use_vc = false;
  else if (name == "none") base.use_fd = base.use_ld = base.use_vc = false;
  else {
    throw ConfigError("unknown ablation '" + name +
                      "'; expected full, no-confw, no-mask, js-to-kl, no-fd, no-ld, no-vc or none");
  }
  return base;
}

std::string AblationTable::to_csv() const {
  std::string out = "variant,runs,mean_map,std_map\n";
  for (const auto& r : rows) out += r.variant + "," + std::to_string(r.runs) + "," + fmt(r.mean) + "," + fmt(r.stddev) + "\n";
  return out;
}

AblationTable run_ablation_suite(const Checkpoint& teacher, const TrainConfig& base,
                                 std::span<const std::uint64_t> seeds, const std::vector<std::string>& variants,
                                 std::size_t jobs, const std::filesystem::path& out_dir) {
  if (seeds.empty()) throw ConfigError("the ablation suite needs at least one seed");
  std::vector<TrainConfig> configs;
  AblationTable table;
  for (const auto& v : variants) {
    for (auto seed : seeds) {
      TrainConfig cfg = base;
      cfg.loss = apply_ablation(base.loss, v);
      cfg.seed = seed;
      cfg.validate();
      configs.push_back(cfg);
      table.runs.push_back({v, seed, {}});
    }
  }

  const auto data = Dataset::open(base.dataset);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= configs.size()) return;
      {
        std::lock_guard lock(error_mutex);
        if (error) return;
      }
      try {
        const auto result = distill_student(configs[i], &teacher);
        EvalOptions opts{base.eval_granularity, configs[i].frames, configs[i].seed, result.config_hash};
        table.runs[i].report = evaluate(result.last, data, data.test_ids(), opts);
        if (!out_dir.empty()) {
          const auto dir = out_dir / (table.runs[i].variant + "_seed" + std::to_string(configs[i].seed));
          write_run_artifacts(result, dir);
          write_text(dir / "eval.json", to_json(table.runs[i].report).dump(2) + "\n");
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, configs.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  for (const auto& v : variants) {
    AblationRow row{v, 0.0, 0.0, 0};
    std::vector<double> maps;
    for (const auto& r : table.runs)
      if (r.variant == v) maps.push_back(r.report.map);
    row.runs = maps.size();
    for (double m : maps) row.mean += m;
    row.mean /= static_cast<double>(maps.size());
    if (maps.size() > 1) {
      double ss = 0.0;
      for (double m : maps) ss += (m - row.mean) * (m - row.mean);
      row.stddev = std::sqrt(ss / static_cast<double>(maps.size() - 1));
    }
    table.rows.push_back(row);
  }
  if (!out_dir.empty()) write_text(out_dir / "ablation.csv", table.to_csv());
  return table;
}

}  // namespace mvkd
