#pragma once

#include <functional>
#include <vector>

#include "expert/attention.hpp"
#include "expert/autograd.hpp"
#include "expert/config.hpp"
#include "expert/params.hpp"

namespace expert::backbone {

// A feature map produced at some point of the backbone: (C, H, W) with
// H = W = input_resolution / reduction(stage).
struct FeatureMap {
  Var data;
  int stage_index = 0;
};

// Called at every block boundary (including each stage input) with the
// incoming features. A defined return value is added to the features before
// the block runs; an undefined Var means "no residual here". The residual
// must match the feature shape and be finite, else HookContractError.
using TransitionHook = std::function<Var(const Var& features, int block_index, int stage_index)>;

// Pre-norm transformer block (MHSA + MLP, expansion 4) on (T, D) tokens.
// Exposed so tests can drive it against hand-rolled oracles.
struct TransformerBlock {
  std::int64_t dim = 0;
  Var ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
  MultiHeadAttention attn;
  Var mlp_w1, mlp_b1, mlp_w2, mlp_b2;

  static TransformerBlock create(ParamRegistry& reg, const std::string& prefix, std::uint64_t seed,
                                 std::int64_t dim, int heads);
  Var forward(const Var& tokens) const;
};

struct ForwardResult {
  std::vector<FeatureMap> stage_outputs;  // one per stage
  // single_scale only: output of every block of the single stage
  std::vector<FeatureMap> block_outputs;
};

// Frozen feature extractor. Parameters register under "backbone." and are
// initialized from config.seed; construction is deterministic in
// (config, seed) regardless of what else lives in the registry.
class Backbone {
public:
  Backbone(const BackboneConfig& config, ParamRegistry& registry);

  const BackboneConfig& config() const { return config_; }

  // image: (3, R, R) with R = config.input_resolution.
  std::vector<FeatureMap> forward(const Tensor& image, const TransitionHook& hook = {}) const;
  ForwardResult forward_all(const Tensor& image, const TransitionHook& hook = {}) const;

  int num_stages() const { return static_cast<int>(config_.stages.size()); }
  int num_blocks(int stage) const { return config_.stages[static_cast<std::size_t>(stage)].depth; }

  // single_scale: block indices whose outputs feed the decoder,
  // (k+1)*depth/4 - 1 for k = 0..3.
  std::vector<int> selected_feature_indices() const;

private:
  struct Stage {
    Var patch_w, patch_b;      // strided conv, kernel == stride
    Var pos;                   // positional embedding (C, h, w)
    Var norm_gamma, norm_beta; // channel layer norm after embedding
    int patch_stride = 1;
    std::vector<TransformerBlock> blocks;
  };

  Var embed(const Stage& st, const Var& x, int stage_index) const;

  BackboneConfig config_;
  std::vector<Stage> stages_;
};

// Splits a registry into frozen ("backbone.") and trainable ("adapter.",
// "injector.", "cross_attention.", "decoder.") name sets, flips the
// requires_grad flags accordingly, and verifies full coverage. A parameter
// matching no known group throws PartitionError.
ParamPartition freeze_partition(ParamRegistry& registry);

}  // namespace expert::backbone
