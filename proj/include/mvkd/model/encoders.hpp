#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mvkd/model/layers.hpp"

namespace mvkd {

// Per-frame modality encoder (2-layer MLP). One instance per modality per
// network, shared by every view.
using EncoderParams = Mlp;

// T x d_v raw visual features -> T x D embeddings. Frames are encoded
// independently.
Tensor encode_visual(const Tensor& visual, const EncoderParams& params);
// T x F audio spectrogram frames -> T x D embeddings.
Tensor encode_audio(const Tensor& audio, const EncoderParams& params);

// Fixed sinusoidal table: PE(t, 2i) = sin(t / 10000^(2i/D)),
// PE(t, 2i+1) = cos(t / 10000^(2i/D)). Detached. D must be even.
Tensor positional_encoding(std::size_t frames, std::size_t dim);

struct TemporalBlock {
  AttentionParams attention;
  Mlp feed_forward;
};

struct TemporalEncoderParams {
  std::vector<TemporalBlock> blocks;

  static TemporalEncoderParams create(Rng& rng, std::size_t dim, std::size_t ffn_dim,
                                      std::size_t layers);
  void visit(const std::string& prefix, const ParamVisitor& f);
};

// L post-residual blocks: x += SelfAttn(x); x += FFN(x). Shape preserved.
Tensor temporal_encode(const Tensor& fused, const TemporalEncoderParams& params);

}  // namespace mvkd
