#pragma once

#include <vector>

#include "expert/autograd.hpp"
#include "expert/backbone.hpp"
#include "expert/config.hpp"
#include "expert/params.hpp"

namespace expert::decoders {

// Fuses the four pyramid stage outputs into saliency logits at stage-1
// scale: per-stage linear -> bilinear upsample -> channel concat -> 1x1
// fuse conv (+ norm + activation) -> 1x1 prediction conv.
// Parameters register under "decoder.".
class MultiScaleDecoder {
public:
  MultiScaleDecoder(const std::vector<std::int64_t>& stage_dims, const DecoderConfig& config,
                    ParamRegistry& registry, std::uint64_t seed);

  // features: exactly 4 maps with strictly halving spatial sizes.
  // Returns logits (1, H1, W1).
  Var decode(const std::vector<backbone::FeatureMap>& features) const;

private:
  DecoderConfig config_;
  std::vector<std::int64_t> stage_dims_;
  std::vector<Var> proj_w_, proj_b_;
  Var fuse_w_, fuse_b_, fuse_gamma_, fuse_beta_;
  Var pred_w_, pred_b_;
};

// Fuses four same-scale interior features (single-scale backbone) into
// logits at feature scale: channel concat -> 3x3 conv + ReLU -> 3x3 conv.
class SingleScaleDecoder {
public:
  SingleScaleDecoder(std::int64_t feature_dim, const DecoderConfig& config,
                     ParamRegistry& registry, std::uint64_t seed);

  // features: exactly 4 maps, identical shapes. Returns logits (1, h, w).
  Var decode(const std::vector<backbone::FeatureMap>& features) const;

private:
  DecoderConfig config_;
  std::int64_t feature_dim_ = 0;
  Var conv1_w_, conv1_b_, conv2_w_, conv2_b_;
};

// Logits (1, h, w) -> probabilities resized to (out_h, out_w), returned as
// a rank-2 (out_h, out_w) map. Sigmoid first, then bilinear resize, so the
// output stays in [0, 1].
Var finalize_mask(const Var& logits, std::int64_t out_h, std::int64_t out_w);

}  // namespace expert::decoders
