#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mvkd/model/crossmodal.hpp"
#include "mvkd/model/encoders.hpp"

namespace mvkd {

struct ModelConfig {
  std::size_t visual_dim = 16;
  std::size_t audio_dim = 8;
  std::size_t embed_dim = 32;
  std::size_t encoder_hidden = 32;
  std::size_t adapter_hidden = 32;
  std::size_t ffn_dim = 32;
  std::size_t temporal_layers = 2;
  std::size_t num_classes = 6;
  // Add the positional table a second time in front of the temporal encoder.
  bool readd_positional = false;

  void validate() const;
};

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

// Intermediate features of one view's forward pass.
struct ViewOutputs {
  Tensor visual;           // encoded visual + PE, T x D
  Tensor audio;            // encoded (or pseudo) audio + PE, T x D
  Tensor attended;         // cross-attention output, T x D
  Tensor attn_weights;     // T x T
  Tensor fused;            // visual + attended
  Tensor fusion;           // temporal encoder output, T x D
  Tensor frame_logits;     // T x C
  Tensor sequence_logits;  // 1 x C, classifier on the time-averaged fusion
};

// The cross-attention -> fusion -> temporal encoder -> classifier path that
// teacher and student share.
struct FusionHead {
  CrossAttnParams cross_attn;
  TemporalEncoderParams temporal;
  Linear classifier;  // frame and sequence logits share this head

  static FusionHead create(Rng& rng, const ModelConfig& cfg);
  void visit(const ParamVisitor& f);
  void copy_values_from(const FusionHead& other);
  ViewOutputs forward(Tensor visual, Tensor audio, const ModelConfig& cfg) const;
};

class TeacherNet {
 public:
  static TeacherNet create(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ViewOutputs forward_view(const Tensor& visual_raw, const Tensor& audio_raw) const;
  NamedParams parameters();

  EncoderParams visual_encoder;
  EncoderParams audio_encoder;
  FusionHead head;

 private:
  ModelConfig cfg_;
};

class StudentNet {
 public:
  static StudentNet create(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  // Visual-only forward: pseudo-audio from the adapter drives cross-attention.
  ViewOutputs forward_view(const Tensor& visual_raw) const;
  // Same path with externally supplied audio features (T x D, PE included)
  // in place of the adapter output.
  ViewOutputs forward_view_with_audio(const Tensor& visual_raw, const Tensor& audio_features) const;
  NamedParams parameters();

  // Copies visual encoder, cross-attention, temporal encoder and classifier
  // values from a teacher with the same config.
  void init_from_teacher(const TeacherNet& teacher);

  EncoderParams visual_encoder;
  AdapterParams adapter;
  FusionHead head;

 private:
  Tensor embed_visual(const Tensor& visual_raw) const;
  ModelConfig cfg_;
};

}  // namespace mvkd
