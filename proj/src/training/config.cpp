#include "mvkd/training/config.hpp"

#include <cstdio>

#include "mvkd/errors.hpp"

namespace mvkd {
namespace {

using nlohmann::json;

json model_to_json(const ModelConfig& m) {
  return {{"visual_dim", m.visual_dim},         {"audio_dim", m.audio_dim},
          {"embed_dim", m.embed_dim},           {"encoder_hidden", m.encoder_hidden},
          {"adapter_hidden", m.adapter_hidden}, {"ffn_dim", m.ffn_dim},
          {"temporal_layers", m.temporal_layers}, {"num_classes", m.num_classes},
          {"readd_positional", m.readd_positional}};
}

json loss_to_json(const LossConfig& l) {
  return {{"lambda_t", l.lambda_t},
          {"tau", l.tau},
          {"use_conf_weight", l.use_conf_weight},
          {"use_mask", l.use_mask},
          {"divergence", to_string(l.divergence)},
          {"use_fd", l.use_fd},
          {"use_ld", l.use_ld},
          {"use_vc", l.use_vc},
          {"classification", to_string(l.classification)},
          {"fd_weight", l.fd_weight},
          {"ld_weight", l.ld_weight},
          {"vc_weight", l.vc_weight},
          {"ld_aggregate_first", l.ld_aggregate_first},
          {"ld_mask_gated", l.ld_mask_gated}};
}

// Overlays `src` onto `dst`, refusing keys that `dst` does not define.
void overlay(json& dst, const json& src, const std::string& prefix) {
  if (!src.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (const auto& [key, value] : src.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!dst.contains(key)) throw ConfigError("unknown config field '" + path + "'");
    if (dst[key].is_object()) {
      overlay(dst[key], value, path);
    } else {
      dst[key] = value;
    }
  }
}

template <typename T>
T get(const json& j, const std::string& section, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    const auto path = section.empty() ? key : section + "." + key;
    throw ConfigError("config field '" + path + "' has the wrong type: " + e.what());
  }
}

}  // namespace

std::string to_string(SupervisionMode m) {
  switch (m) {
    case SupervisionMode::kTeacher: return "AVF";
    case SupervisionMode::kStudentFrame: return "VF";
    case SupervisionMode::kStudentSequence: return "VS";
  }
  return "?";
}

SupervisionMode supervision_mode_from_string(const std::string& s) {
  if (s == "AVF") return SupervisionMode::kTeacher;
  if (s == "VF") return SupervisionMode::kStudentFrame;
  if (s == "VS") return SupervisionMode::kStudentSequence;
  throw ConfigError("mode must be AVF, VF or VS, got '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(lr_min >= 0.0 && lr_min <= lr)) throw ConfigError("lr_min must be in [0, lr]");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must be in [0, 1)");
  loss.validate();
  model.validate();
}

json to_json(const TrainConfig& cfg) {
  return {{"mode", to_string(cfg.mode)},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"lr", cfg.lr},
          {"lr_min", cfg.lr_min},
          {"weight_decay", cfg.weight_decay},
          {"seed", cfg.seed},
          {"frames", cfg.frames},
          {"val_fraction", cfg.val_fraction},
          {"init_from_teacher", cfg.init_from_teacher},
          {"eval_each_epoch", cfg.eval_each_epoch},
          {"eval_granularity", to_string(cfg.eval_granularity)},
          {"loss", loss_to_json(cfg.loss)},
          {"model", model_to_json(cfg.model)},
          {"dataset", cfg.dataset.string()},
          {"teacher_checkpoint", cfg.teacher_checkpoint.string()}};
}

TrainConfig train_config_from_json(const json& j) {
  json doc = to_json(TrainConfig{});
  overlay(doc, j, "");
  TrainConfig cfg;
  cfg.mode = supervision_mode_from_string(get<std::string>(doc, "", "mode"));
  cfg.epochs = get<std::size_t>(doc, "", "epochs");
  cfg.batch_size = get<std::size_t>(doc, "", "batch_size");
  cfg.lr = get<double>(doc, "", "lr");
  cfg.lr_min = get<double>(doc, "", "lr_min");
  cfg.weight_decay = get<double>(doc, "", "weight_decay");
  cfg.seed = get<std::uint64_t>(doc, "", "seed");
  cfg.frames = get<std::size_t>(doc, "", "frames");
  cfg.val_fraction = get<double>(doc, "", "val_fraction");
  cfg.init_from_teacher = get<bool>(doc, "", "init_from_teacher");
  cfg.eval_each_epoch = get<bool>(doc, "", "eval_each_epoch");
  cfg.eval_granularity = granularity_from_string(get<std::string>(doc, "", "eval_granularity"));
  cfg.dataset = get<std::string>(doc, "", "dataset");
  cfg.teacher_checkpoint = get<std::string>(doc, "", "teacher_checkpoint");

  const json& l = doc["loss"];
  cfg.loss.lambda_t = get<double>(l, "loss", "lambda_t");
  cfg.loss.tau = get<double>(l, "loss", "tau");
  cfg.loss.use_conf_weight = get<bool>(l, "loss", "use_conf_weight");
  cfg.loss.use_mask = get<bool>(l, "loss", "use_mask");
  cfg.loss.divergence = divergence_from_string(get<std::string>(l, "loss", "divergence"));
  cfg.loss.use_fd = get<bool>(l, "loss", "use_fd");
  cfg.loss.use_ld = get<bool>(l, "loss", "use_ld");
  cfg.loss.use_vc = get<bool>(l, "loss", "use_vc");
  cfg.loss.classification = classification_from_string(get<std::string>(l, "loss", "classification"));
  cfg.loss.fd_weight = get<double>(l, "loss", "fd_weight");
  cfg.loss.ld_weight = get<double>(l, "loss", "ld_weight");
  cfg.loss.vc_weight = get<double>(l, "loss", "vc_weight");
  cfg.loss.ld_aggregate_first = get<bool>(l, "loss", "ld_aggregate_first");
  cfg.loss.ld_mask_gated = get<bool>(l, "loss", "ld_mask_gated");

  const json& m = doc["model"];
  cfg.model.visual_dim = get<std::size_t>(m, "model", "visual_dim");
  cfg.model.audio_dim = get<std::size_t>(m, "model", "audio_dim");
  cfg.model.embed_dim = get<std::size_t>(m, "model", "embed_dim");
  cfg.model.encoder_hidden = get<std::size_t>(m, "model", "encoder_hidden");
  cfg.model.adapter_hidden = get<std::size_t>(m, "model", "adapter_hidden");
  cfg.model.ffn_dim = get<std::size_t>(m, "model", "ffn_dim");
  cfg.model.temporal_layers = get<std::size_t>(m, "model", "temporal_layers");
  cfg.model.num_classes = get<std::size_t>(m, "model", "num_classes");
  cfg.model.readd_positional = get<bool>(m, "model", "readd_positional");
  cfg.validate();
  return cfg;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw UsageError("override '" + assignment + "' must look like key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw UsageError("unknown config field '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw UsageError("config field '" + key + "' is a section, not a value");
  *node = value;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const TrainConfig& cfg) {
  json j = to_json(cfg);
  j.erase("dataset");
  j.erase("teacher_checkpoint");
  return fnv1a_hex(j.dump());
}

}  // namespace mvkd
