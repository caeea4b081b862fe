#include "mvkd/training/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "mvkd/errors.hpp"

namespace mvkd {
namespace {

using nlohmann::json;

constexpr int kCheckpointFormat = 1;

std::vector<ParamRecord> records(NamedParams params) {
  std::vector<ParamRecord> out;
  for (auto& [name, t] : params) out.push_back({name, t.shape(), {t.data().begin(), t.data().end()}});
  return out;
}

void restore(NamedParams params, const Checkpoint& ckpt) {
  if (params.size() != ckpt.params.size()) {
    throw DataError("checkpoint holds " + std::to_string(ckpt.params.size()) + " tensors, model expects " +
                    std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, t] = params[i];
    const auto& rec = ckpt.params[i];
    if (rec.name != name || rec.shape != t.shape()) {
      throw DataError("checkpoint tensor " + rec.name + " " + shape_str(rec.shape) + " does not match model tensor " +
                      name + " " + shape_str(t.shape()));
    }
    auto dst = t.mutable_data();
    std::copy(rec.values.begin(), rec.values.end(), dst.begin());
  }
}

json model_json(const ModelConfig& m) {
  return {{"visual_dim", m.visual_dim},     {"audio_dim", m.audio_dim},           {"embed_dim", m.embed_dim},
          {"encoder_hidden", m.encoder_hidden}, {"adapter_hidden", m.adapter_hidden}, {"ffn_dim", m.ffn_dim},
          {"temporal_layers", m.temporal_layers}, {"num_classes", m.num_classes},
          {"readd_positional", m.readd_positional}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  m.visual_dim = j.at("visual_dim").get<std::size_t>();
  m.audio_dim = j.at("audio_dim").get<std::size_t>();
  m.embed_dim = j.at("embed_dim").get<std::size_t>();
  m.encoder_hidden = j.at("encoder_hidden").get<std::size_t>();
  m.adapter_hidden = j.at("adapter_hidden").get<std::size_t>();
  m.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  m.temporal_layers = j.at("temporal_layers").get<std::size_t>();
  m.num_classes = j.at("num_classes").get<std::size_t>();
  m.readd_positional = j.at("readd_positional").get<bool>();
  return m;
}

bool same_model(const ModelConfig& a, const ModelConfig& b) { return model_json(a) == model_json(b); }

}  // namespace

bool Checkpoint::operator==(const Checkpoint& o) const {
  if (kind != o.kind || !same_model(model, o.model) || config_hash != o.config_hash || epoch != o.epoch ||
      rng_state != o.rng_state || params.size() != o.params.size()) {
    return false;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& a = params[i];
    const auto& b = o.params[i];
    if (a.name != b.name || a.shape != b.shape || a.values.size() != b.values.size()) return false;
    if (std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

Checkpoint snapshot(const TeacherNet& net, const std::string& config_hash, std::size_t epoch,
                    const std::string& rng_state) {
  TeacherNet handle = net;
  return Checkpoint{ModelKind::kTeacher, net.config(), records(handle.parameters()), config_hash, epoch, rng_state};
}

Checkpoint snapshot(const StudentNet& net, const std::string& config_hash, std::size_t epoch,
                    const std::string& rng_state) {
  StudentNet handle = net;
  return Checkpoint{ModelKind::kStudent, net.config(), records(handle.parameters()), config_hash, epoch, rng_state};
}

TeacherNet teacher_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != ModelKind::kTeacher) throw ConfigError("checkpoint holds a student, expected a teacher");
  auto net = TeacherNet::create(ckpt.model, 0);
  restore(net.parameters(), ckpt);
  return net;
}

StudentNet student_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != ModelKind::kStudent) throw ConfigError("checkpoint holds a teacher, expected a student");
  auto net = StudentNet::create(ckpt.model, 0);
  restore(net.parameters(), ckpt);
  return net;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json tensors = json::array();
  std::size_t count = 0;
  for (const auto& p : ckpt.params) {
    tensors.push_back({{"name", p.name}, {"shape", p.shape}});
    count += p.values.size();
  }
  const json meta = {{"format", kCheckpointFormat},
                     {"kind", ckpt.kind == ModelKind::kTeacher ? "teacher" : "student"},
                     {"model", model_json(ckpt.model)},
                     {"tensors", tensors},
                     {"config_hash", ckpt.config_hash},
                     {"epoch", ckpt.epoch},
                     {"rng_state", ckpt.rng_state},
                     {"payload_bytes", count * 8}};
  std::string bytes = meta.dump();
  bytes.push_back('\n');
  bytes.reserve(bytes.size() + count * 8);
  for (const auto& p : ckpt.params) {
    for (double v : p.values) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint not found: " + path.string());
  std::string header;
  std::getline(in, header);
  const std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Checkpoint ckpt;
  try {
    const json meta = json::parse(header);
    if (meta.at("format").get<int>() != kCheckpointFormat) throw DataError("unsupported checkpoint format");
    const auto kind = meta.at("kind").get<std::string>();
    if (kind != "teacher" && kind != "student") throw DataError("unknown checkpoint kind " + kind);
    ckpt.kind = kind == "teacher" ? ModelKind::kTeacher : ModelKind::kStudent;
    ckpt.model = model_from_json(meta.at("model"));
    ckpt.config_hash = meta.at("config_hash").get<std::string>();
    ckpt.epoch = meta.at("epoch").get<std::size_t>();
    ckpt.rng_state = meta.at("rng_state").get<std::string>();
    const auto expected = meta.at("payload_bytes").get<std::size_t>();
    if (payload.size() != expected) {
      throw DataError(path.string() + ": payload holds " + std::to_string(payload.size()) + " bytes, header says " +
                      std::to_string(expected));
    }
    std::size_t offset = 0;
    for (const auto& t : meta.at("tensors")) {
      ParamRecord rec{t.at("name").get<std::string>(), t.at("shape").get<Shape>(), {}};
      const std::size_t n = shape_numel(rec.shape);
      if ((offset + n) * 8 > payload.size()) throw DataError(path.string() + ": payload shorter than tensor list");
      rec.values.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
          bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(payload[(offset + i) * 8 + b])) << (8 * b);
        }
        std::memcpy(&rec.values[i], &bits, 8);
      }
      offset += n;
      ckpt.params.push_back(std::move(rec));
    }
    if (offset * 8 != payload.size()) throw DataError(path.string() + ": payload longer than tensor list");
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  return ckpt;
}

}  // namespace mvkd
