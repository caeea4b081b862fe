#pragma once

#include "mvkd/model/layers.hpp"

namespace mvkd {

// W_Q, W_K, W_V, W_O, each D x D; scores scaled by 1/sqrt(D).
using CrossAttnParams = AttentionParams;

// Visual features -> pseudo-audio features, D -> D_hidden -> D.
using AdapterParams = Mlp;

// Visual frames query audio frames (keys and values). Both inputs T x D with
// positional encodings already added.
AttentionResult cross_attention(const Tensor& visual, const Tensor& audio,
                                const CrossAttnParams& params);

// Additive fusion of visual and attended features.
Tensor fuse(const Tensor& visual, const Tensor& attended);

// Synthesizes pseudo-audio from visual features, frame by frame.
Tensor adapt(const Tensor& visual, const AdapterParams& params);

}  // namespace mvkd
