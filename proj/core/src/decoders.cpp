#include "expert/decoders.hpp"

#include "expert/errors.hpp"
#include "expert/ops.hpp"

namespace expert::decoders {

namespace {
constexpr double kInitStd = 0.02;

void check_four(const std::vector<backbone::FeatureMap>& features, const char* who) {
  if (features.size() != 4) {
    throw ShapeError(std::string(who) + ": expected exactly 4 feature maps, got " +
                     std::to_string(features.size()));
  }
  for (const auto& f : features) {
    if (f.data.value().rank() != 3) {
      throw ShapeError(std::string(who) + ": feature maps must be rank 3, got " +
                       f.data.value().shape_str());
    }
  }
}
}  // namespace

MultiScaleDecoder::MultiScaleDecoder(const std::vector<std::int64_t>& stage_dims,
                                     const DecoderConfig& config, ParamRegistry& registry,
                                     std::uint64_t seed)
    : config_(config), stage_dims_(stage_dims) {
  config_.validate();
  if (stage_dims_.size() != 4) {
    throw ConfigError("multi-scale decoder requires 4 stage dims, got " +
                      std::to_string(stage_dims_.size()));
  }
  const std::int64_t c = config_.common_dim;
  const std::int64_t f = config_.fuse_dim;
  for (std::size_t s = 0; s < stage_dims_.size(); ++s) {
    const std::string prefix = "decoder.stage" + std::to_string(s) + ".proj";
    proj_w_.push_back(registry.create(prefix + ".weight", {c, stage_dims_[s]},
                                      Init::truncated_normal(kInitStd), seed));
    proj_b_.push_back(registry.create(prefix + ".bias", {c}, Init::zeros(), seed));
  }
  fuse_w_ = registry.create("decoder.fuse.weight", {f, 4 * c}, Init::truncated_normal(kInitStd),
                            seed);
  fuse_b_ = registry.create("decoder.fuse.bias", {f}, Init::zeros(), seed);
  if (config_.fuse_norm == DecoderConfig::Norm::layer) {
    fuse_gamma_ = registry.create("decoder.fuse.norm.gamma", {f}, Init::ones(), seed);
    fuse_beta_ = registry.create("decoder.fuse.norm.beta", {f}, Init::zeros(), seed);
  }
  pred_w_ = registry.create("decoder.pred.weight", {1, f}, Init::truncated_normal(kInitStd), seed);
  pred_b_ = registry.create("decoder.pred.bias", {1}, Init::zeros(), seed);
}

Var MultiScaleDecoder::decode(const std::vector<backbone::FeatureMap>& features) const {
  using namespace ops;
  check_four(features, "multi-scale decoder");
  const std::int64_t h1 = features[0].data.value().dim(1);
  const std::int64_t w1 = features[0].data.value().dim(2);
  std::vector<Var> upsampled;
  for (std::size_t s = 0; s < 4; ++s) {
    const Tensor& fv = features[s].data.value();
    if (fv.dim(0) != stage_dims_[s]) {
      throw ShapeError("multi-scale decoder: stage " + std::to_string(s) + " has " +
                       std::to_string(fv.dim(0)) + " channels, expected " +
                       std::to_string(stage_dims_[s]));
    }
    const std::int64_t expected = h1 >> s;
    if (expected < 1 || fv.dim(1) != expected || fv.dim(2) != (w1 >> s)) {
      throw ShapeError("multi-scale decoder: stage " + std::to_string(s) + " scale " +
                       fv.shape_str() + " does not halve the stage-1 scale (" +
                       std::to_string(h1) + "," + std::to_string(w1) + ")");
    }
    Var proj = linear_pointwise(features[s].data, proj_w_[s], proj_b_[s]);
    upsampled.push_back(s == 0 ? proj : bilinear_resize(proj, h1, w1));
  }
  Var fused = linear_pointwise(concat_rank3_dim0(upsampled), fuse_w_, fuse_b_);
  if (config_.fuse_norm == DecoderConfig::Norm::layer) {
    fused = layer_norm_channels(fused, fuse_gamma_, fuse_beta_);
  }
  if (config_.fuse_activation == DecoderConfig::Activation::relu) {
    fused = relu(fused);
  }
  return linear_pointwise(fused, pred_w_, pred_b_);
}

SingleScaleDecoder::SingleScaleDecoder(std::int64_t feature_dim, const DecoderConfig& config,
                                       ParamRegistry& registry, std::uint64_t seed)
    : config_(config), feature_dim_(feature_dim) {
  config_.validate();
  const std::int64_t f = config_.fuse_dim;
  conv1_w_ = registry.create("decoder.fuse.conv1.weight", {f, 4 * feature_dim, 3, 3},
                             Init::truncated_normal(kInitStd), seed);
  conv1_b_ = registry.create("decoder.fuse.conv1.bias", {f}, Init::zeros(), seed);
  conv2_w_ = registry.create("decoder.fuse.conv2.weight", {1, f, 3, 3},
                             Init::truncated_normal(kInitStd), seed);
  conv2_b_ = registry.create("decoder.fuse.conv2.bias", {1}, Init::zeros(), seed);
}

Var SingleScaleDecoder::decode(const std::vector<backbone::FeatureMap>& features) const {
  using namespace ops;
  check_four(features, "single-scale decoder");
  for (const auto& f : features) {
    if (!f.data.value().same_shape(features[0].data.value()) ||
        f.data.value().dim(0) != feature_dim_) {
      throw ShapeError("single-scale decoder: feature " + f.data.value().shape_str() +
                       " does not match expected uniform shape");
    }
  }
  std::vector<Var> parts;
  for (const auto& f : features) parts.push_back(f.data);
  const Var cat = concat_rank3_dim0(parts);
  const Var hidden = relu(conv2d(cat, conv1_w_, conv1_b_, /*stride=*/1, /*padding=*/1));
  return conv2d(hidden, conv2_w_, conv2_b_, /*stride=*/1, /*padding=*/1);
}

Var finalize_mask(const Var& logits, std::int64_t out_h, std::int64_t out_w) {
  using namespace ops;
  if (logits.value().rank() != 3 || logits.value().dim(0) != 1) {
    throw ShapeError("finalize_mask: expected (1,h,w) logits, got " + logits.value().shape_str());
  }
  const Var probs = sigmoid(logits);
  const Var resized = bilinear_resize(probs, out_h, out_w);
  return reshape(resized, {out_h, out_w});
}

}  // namespace expert::decoders
