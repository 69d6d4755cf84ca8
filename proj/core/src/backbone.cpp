#include "expert/backbone.hpp"

#include "expert/errors.hpp"
#include "expert/ops.hpp"

namespace expert::backbone {

namespace {
constexpr double kInitStd = 0.02;
}

TransformerBlock TransformerBlock::create(ParamRegistry& reg, const std::string& prefix,
                                          std::uint64_t seed, std::int64_t dim, int heads) {
  TransformerBlock b;
  b.dim = dim;
  b.ln1_gamma = reg.create(prefix + ".ln1.gamma", {dim}, Init::ones(), seed);
  b.ln1_beta = reg.create(prefix + ".ln1.beta", {dim}, Init::zeros(), seed);
  b.attn = MultiHeadAttention::create(reg, prefix + ".attn", seed, heads, dim, dim, dim);
  b.ln2_gamma = reg.create(prefix + ".ln2.gamma", {dim}, Init::ones(), seed);
  b.ln2_beta = reg.create(prefix + ".ln2.beta", {dim}, Init::zeros(), seed);
  b.mlp_w1 = reg.create(prefix + ".mlp.w1", {4 * dim, dim}, Init::truncated_normal(kInitStd), seed);
  b.mlp_b1 = reg.create(prefix + ".mlp.b1", {4 * dim}, Init::zeros(), seed);
  b.mlp_w2 = reg.create(prefix + ".mlp.w2", {dim, 4 * dim}, Init::truncated_normal(kInitStd), seed);
  b.mlp_b2 = reg.create(prefix + ".mlp.b2", {dim}, Init::zeros(), seed);
  return b;
}

Var TransformerBlock::forward(const Var& tokens) const {
  using namespace ops;
  if (tokens.value().rank() != 2 || tokens.value().dim(1) != dim) {
    throw ShapeError("transformer block expects (T," + std::to_string(dim) + ") tokens, got " +
                     tokens.value().shape_str());
  }
  const Var normed = layer_norm_rows(tokens, ln1_gamma, ln1_beta);
  const Var h = add(tokens, attn.forward(normed, normed));
  const Var mlp_in = layer_norm_rows(h, ln2_gamma, ln2_beta);
  const Var mlp_out = linear_rows(gelu(linear_rows(mlp_in, mlp_w1, mlp_b1)), mlp_w2, mlp_b2);
  return add(h, mlp_out);
}

Backbone::Backbone(const BackboneConfig& config, ParamRegistry& registry) : config_(config) {
  config_.validate();
  const std::uint64_t seed = config_.seed;
  int prev_reduction = 1;
  std::int64_t prev_dim = 3;
  for (std::size_t s = 0; s < config_.stages.size(); ++s) {
    const StageSpec& spec = config_.stages[s];
    const std::string prefix = "backbone.stage" + std::to_string(s);
    Stage stage;
    stage.patch_stride = spec.reduction / prev_reduction;
    const std::int64_t k = stage.patch_stride;
    const std::int64_t dim = spec.embed_dim;
    stage.patch_w =
        registry.create(prefix + ".patch.weight", {dim, prev_dim, k, k},
                        Init::truncated_normal(kInitStd), seed);
    stage.patch_b = registry.create(prefix + ".patch.bias", {dim}, Init::zeros(), seed);
    const std::int64_t side = config_.stage_size(static_cast<int>(s));
    stage.pos = registry.create(prefix + ".patch.pos", {dim, side, side},
                                config_.zero_positional_embedding
                                    ? Init::zeros()
                                    : Init::truncated_normal(kInitStd),
                                seed);
    stage.norm_gamma = registry.create(prefix + ".patch.norm.gamma", {dim}, Init::ones(), seed);
    stage.norm_beta = registry.create(prefix + ".patch.norm.beta", {dim}, Init::zeros(), seed);
    for (int b = 0; b < spec.depth; ++b) {
      stage.blocks.push_back(TransformerBlock::create(
          registry, prefix + ".block" + std::to_string(b), seed, dim, spec.num_heads));
    }
    stages_.push_back(std::move(stage));
    prev_reduction = spec.reduction;
    prev_dim = dim;
  }
}

Var Backbone::embed(const Stage& st, const Var& x, int stage_index) const {
  using namespace ops;
  Var f = conv2d(x, st.patch_w, st.patch_b, st.patch_stride, /*padding=*/0);
  f = add(f, st.pos);
  (void)stage_index;
  return layer_norm_channels(f, st.norm_gamma, st.norm_beta);
}

std::vector<FeatureMap> Backbone::forward(const Tensor& image, const TransitionHook& hook) const {
  return forward_all(image, hook).stage_outputs;
}

ForwardResult Backbone::forward_all(const Tensor& image, const TransitionHook& hook) const {
  const std::int64_t r = config_.input_resolution;
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != r || image.dim(2) != r) {
    throw ShapeError("backbone expects a (3," + std::to_string(r) + "," + std::to_string(r) +
                     ") image, got " + image.shape_str());
  }
  if (!image.all_finite()) {
    throw InputError("backbone input image contains non-finite values");
  }

  ForwardResult result;
  Var x = Var::constant(image);
  for (int s = 0; s < num_stages(); ++s) {
    const Stage& stage = stages_[static_cast<std::size_t>(s)];
    Var f = embed(stage, x, s);
    for (int b = 0; b < static_cast<int>(stage.blocks.size()); ++b) {
      if (hook) {
        Var residual = hook(f, b, s);
        if (residual.defined()) {
          if (!residual.value().same_shape(f.value())) {
            throw HookContractError("transition residual shape " + residual.value().shape_str() +
                                    " does not match features " + f.value().shape_str() +
                                    " at stage " + std::to_string(s) + " block " + std::to_string(b));
          }
          if (!residual.value().all_finite()) {
            throw HookContractError("transition residual is not finite at stage " +
                                    std::to_string(s) + " block " + std::to_string(b));
          }
          f = ops::add(f, residual);
        }
      }
      const std::int64_t c = f.value().dim(0), h = f.value().dim(1), w = f.value().dim(2);
      Var tokens = ops::chw_to_tokens(f);
      tokens = stage.blocks[static_cast<std::size_t>(b)].forward(tokens);
      f = ops::tokens_to_chw(tokens, c, h, w);
      if (config_.kind == BackboneConfig::Kind::single_scale) {
        result.block_outputs.push_back(FeatureMap{f, s});
      }
    }
    result.stage_outputs.push_back(FeatureMap{f, s});
    x = f;
  }
  return result;
}

std::vector<int> Backbone::selected_feature_indices() const {
  if (config_.kind != BackboneConfig::Kind::single_scale) {
    throw ConfigError("selected_feature_indices is only defined for single_scale backbones");
  }
  const int depth = config_.stages[0].depth;
  const int step = depth / 4;
  std::vector<int> idx;
  for (int k = 0; k < 4; ++k) idx.push_back((k + 1) * step - 1);
  return idx;
}

ParamPartition freeze_partition(ParamRegistry& registry) {
  static const std::vector<std::string> trainable_prefixes = {"adapter.", "injector.",
                                                              "cross_attention.", "decoder."};
  ParamPartition part;
  for (const Parameter& p : registry.all()) {
    if (p.name.rfind("backbone.", 0) == 0) {
      part.frozen.push_back(p.name);
      continue;
    }
    bool matched = false;
    for (const std::string& prefix : trainable_prefixes) {
      if (p.name.rfind(prefix, 0) == 0) {
        matched = true;
        break;
      }
    }
    if (!matched) {
      throw PartitionError("parameter '" + p.name + "' belongs to no known frozen/trainable group");
    }
    part.trainable.push_back(p.name);
  }
  for (const std::string& name : part.frozen) {
    Node& n = *registry.get(name).var.node();
    n.requires_grad = false;
    n.needs_grad = false;
  }
  for (const std::string& name : part.trainable) {
    Node& n = *registry.get(name).var.node();
    n.requires_grad = true;
    n.needs_grad = true;
  }
  return part;
}

}  // namespace expert::backbone
