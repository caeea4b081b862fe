#include "mvkd/model/encoders.hpp"

#include <cmath>

#include "mvkd/errors.hpp"
#include "mvkd/numerics/ops.hpp"

namespace mvkd {
namespace {

Tensor encode_frames(const Tensor& frames, const EncoderParams& params, const char* modality) {
  if (frames.rank() != 2 || frames.rows() == 0) {
    throw ConfigError(std::string(modality) + " input must be a non-empty T x d matrix, got " +
                      shape_str(frames.shape()));
  }
  if (frames.cols() != params.in_dim()) {
    throw ConfigError(std::string(modality) + " encoder expects " + std::to_string(params.in_dim()) +
                      " features per frame, got " + std::to_string(frames.cols()));
  }
  return params.forward(frames);
}

}  // namespace

Tensor encode_visual(const Tensor& visual, const EncoderParams& params) {
  return encode_frames(visual, params, "visual");
}

Tensor encode_audio(const Tensor& audio, const EncoderParams& params) {
  return encode_frames(audio, params, "audio");
}

Tensor positional_encoding(std::size_t frames, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) {
    throw ConfigError("positional encoding needs an even embedding dim, got " + std::to_string(dim));
  }
  std::vector<double> pe(frames * dim);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
      const double angle = static_cast<double>(t) / freq;
      pe[t * dim + 2 * i] = std::sin(angle);
      pe[t * dim + 2 * i + 1] = std::cos(angle);
    }
  }
  return Tensor({frames, dim}, std::move(pe));
}

TemporalEncoderParams TemporalEncoderParams::create(Rng& rng, std::size_t dim, std::size_t ffn_dim,
                                                    std::size_t layers) {
  TemporalEncoderParams p;
  for (std::size_t l = 0; l < layers; ++l) {
    TemporalBlock b;
    b.attention = AttentionParams::create(rng, dim);
    b.feed_forward = Mlp::create(rng, dim, ffn_dim, dim);
    p.blocks.push_back(std::move(b));
  }
  return p;
}

void TemporalEncoderParams::visit(const std::string& prefix, const ParamVisitor& f) {
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const std::string p = prefix + ".block" + std::to_string(l);
    blocks[l].attention.visit(p + ".attn", f);
    blocks[l].feed_forward.visit(p + ".ffn", f);
  }
}

Tensor temporal_encode(const Tensor& fused, const TemporalEncoderParams& params) {
  Tensor x = fused;
  for (const auto& block : params.blocks) {
    if (x.rank() != 2 || x.cols() != block.attention.dim()) {
      throw ConfigError("temporal encoder expects T x " + std::to_string(block.attention.dim()) +
                        " input, got " + shape_str(x.shape()));
    }
    x = ops::add(x, attend(x, x, x, block.attention).output);
    x = ops::add(x, block.feed_forward.forward(x));
  }
  return x;
}

}  // namespace mvkd
