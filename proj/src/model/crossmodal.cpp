#include "mvkd/model/crossmodal.hpp"

#include "mvkd/errors.hpp"
#include "mvkd/numerics/ops.hpp"

namespace mvkd {

AttentionResult cross_attention(const Tensor& visual, const Tensor& audio,
                                const CrossAttnParams& params) {
  if (visual.shape() != audio.shape()) {
    throw ConfigError("cross attention needs aligned T x D inputs, got visual " +
                      shape_str(visual.shape()) + " and audio " + shape_str(audio.shape()));
  }
  return attend(visual, audio, audio, params);
}

Tensor fuse(const Tensor& visual, const Tensor& attended) {
  if (visual.shape() != attended.shape()) {
    throw DimensionError("fuse: shape mismatch " + shape_str(visual.shape()) + " vs " +
                         shape_str(attended.shape()));
  }
  return ops::add(visual, attended);
}

Tensor adapt(const Tensor& visual, const AdapterParams& params) {
  if (visual.rank() != 2 || visual.cols() != params.in_dim() || params.out_dim() != params.in_dim()) {
    throw ConfigError("adapter maps D -> D with D=" + std::to_string(params.in_dim()) + ", got input " +
                      shape_str(visual.shape()));
  }
  return params.forward(visual);
}

}  // namespace mvkd
