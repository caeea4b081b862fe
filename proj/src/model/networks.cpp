#include "mvkd/model/networks.hpp"

#include <algorithm>

#include "mvkd/errors.hpp"
#include "mvkd/numerics/ops.hpp"

namespace mvkd {
namespace {

void copy_values(Tensor& dst, const Tensor& src, const std::string& name) {
  if (dst.shape() != src.shape()) {
    throw ConfigError("cannot copy parameter " + name + ": shape " + shape_str(src.shape()) +
                      " vs " + shape_str(dst.shape()));
  }
  auto d = dst.mutable_data();
  std::copy(src.data().begin(), src.data().end(), d.begin());
}

NamedParams collect(const std::function<void(const ParamVisitor&)>& visit_all) {
  NamedParams out;
  visit_all([&](const std::string& name, Tensor& t) { out.emplace_back(name, t); });
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* field) {
    if (v == 0) throw ConfigError(std::string("model.") + field + " must be positive");
  };
  positive(visual_dim, "visual_dim");
  positive(audio_dim, "audio_dim");
  positive(embed_dim, "embed_dim");
  positive(encoder_hidden, "encoder_hidden");
  positive(adapter_hidden, "adapter_hidden");
  positive(ffn_dim, "ffn_dim");
  positive(num_classes, "num_classes");
  if (embed_dim % 2 != 0) throw ConfigError("model.embed_dim must be even");
}

FusionHead FusionHead::create(Rng& rng, const ModelConfig& cfg) {
  FusionHead h;
  h.cross_attn = CrossAttnParams::create(rng, cfg.embed_dim);
  h.temporal = TemporalEncoderParams::create(rng, cfg.embed_dim, cfg.ffn_dim, cfg.temporal_layers);
  h.classifier = Linear::create(rng, cfg.embed_dim, cfg.num_classes);
  return h;
}

void FusionHead::visit(const ParamVisitor& f) {
  cross_attn.visit("cross_attn", f);
  temporal.visit("temporal", f);
  classifier.visit("classifier", f);
}

void FusionHead::copy_values_from(const FusionHead& other) {
  FusionHead src = other;  // handles share the underlying nodes
  NamedParams theirs = collect([&](const ParamVisitor& f) { src.visit(f); });
  NamedParams mine = collect([&](const ParamVisitor& f) { visit(f); });
  if (theirs.size() != mine.size()) throw ConfigError("fusion heads differ in layer count");
  for (std::size_t i = 0; i < mine.size(); ++i) copy_values(mine[i].second, theirs[i].second, mine[i].first);
}

ViewOutputs FusionHead::forward(Tensor visual, Tensor audio, const ModelConfig& cfg) const {
  ViewOutputs out;
  out.visual = std::move(visual);
  out.audio = std::move(audio);
  auto attn = cross_attention(out.visual, out.audio, cross_attn);
  out.attended = attn.output;
  out.attn_weights = attn.weights;
  out.fused = fuse(out.visual, out.attended);
  Tensor temporal_in = out.fused;
  if (cfg.readd_positional) {
    temporal_in = ops::add(temporal_in, positional_encoding(temporal_in.rows(), cfg.embed_dim));
  }
  out.fusion = temporal_encode(temporal_in, temporal);
  out.frame_logits = classifier.forward(out.fusion);
  out.sequence_logits = classifier.forward(ops::mean(out.fusion, 0));
  return out;
}

TeacherNet TeacherNet::create(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  TeacherNet t;
  t.cfg_ = cfg;
  Rng rng(mix_seed(seed, 0x7EAC));
  t.visual_encoder = Mlp::create(rng, cfg.visual_dim, cfg.encoder_hidden, cfg.embed_dim);
  t.audio_encoder = Mlp::create(rng, cfg.audio_dim, cfg.encoder_hidden, cfg.embed_dim);
  t.head = FusionHead::create(rng, cfg);
  return t;
}

ViewOutputs TeacherNet::forward_view(const Tensor& visual_raw, const Tensor& audio_raw) const {
  if (visual_raw.rows() != audio_raw.rows()) {
    throw ConfigError("visual and audio streams differ in length: " + shape_str(visual_raw.shape()) +
                      " vs " + shape_str(audio_raw.shape()));
  }
  const auto pe = positional_encoding(visual_raw.rows(), cfg_.embed_dim);
  auto visual = ops::add(encode_visual(visual_raw, visual_encoder), pe);
  auto audio = ops::add(encode_audio(audio_raw, audio_encoder), pe);
  return head.forward(std::move(visual), std::move(audio), cfg_);
}

NamedParams TeacherNet::parameters() {
  return collect([&](const ParamVisitor& f) {
    visual_encoder.visit("visual_encoder", f);
    audio_encoder.visit("audio_encoder", f);
    head.visit(f);
  });
}

StudentNet StudentNet::create(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  StudentNet s;
  s.cfg_ = cfg;
  Rng rng(mix_seed(seed, 0x57D7));
  s.visual_encoder = Mlp::create(rng, cfg.visual_dim, cfg.encoder_hidden, cfg.embed_dim);
  s.adapter = Mlp::create(rng, cfg.embed_dim, cfg.adapter_hidden, cfg.embed_dim);
  s.head = FusionHead::create(rng, cfg);
  return s;
}

Tensor StudentNet::embed_visual(const Tensor& visual_raw) const {
  return ops::add(encode_visual(visual_raw, visual_encoder),
                  positional_encoding(visual_raw.rows(), cfg_.embed_dim));
}

ViewOutputs StudentNet::forward_view(const Tensor& visual_raw) const {
  auto visual = embed_visual(visual_raw);
  auto pseudo_audio = adapt(visual, adapter);
  return head.forward(std::move(visual), std::move(pseudo_audio), cfg_);
}

ViewOutputs StudentNet::forward_view_with_audio(const Tensor& visual_raw,
                                                const Tensor& audio_features) const {
  return head.forward(embed_visual(visual_raw), audio_features, cfg_);
}

NamedParams StudentNet::parameters() {
  return collect([&](const ParamVisitor& f) {
    visual_encoder.visit("visual_encoder", f);
    adapter.visit("adapter", f);
    head.visit(f);
  });
}

void StudentNet::init_from_teacher(const TeacherNet& teacher) {
  TeacherNet src = teacher;
  NamedParams theirs = collect([&](const ParamVisitor& f) { src.visual_encoder.visit("visual_encoder", f); });
  NamedParams mine = collect([&](const ParamVisitor& f) { visual_encoder.visit("visual_encoder", f); });
  for (std::size_t i = 0; i < mine.size(); ++i) copy_values(mine[i].second, theirs[i].second, mine[i].first);
  head.copy_values_from(teacher.head);
}

}  // namespace mvkd
