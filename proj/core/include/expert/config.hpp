#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace expert {

// ---------------------------------------------------------------- backbone

struct StageSpec {
  int depth = 2;
  int embed_dim = 16;
  int num_heads = 1;
  int reduction = 4;  // spatial downscale of this stage's features vs. input
};

struct BackboneConfig {
  enum class Kind { multi_scale, single_scale };
  Kind kind = Kind::multi_scale;
  int input_resolution = 64;
  std::uint64_t seed = 7;
  // Test hook: zero the (frozen) positional embeddings so block outputs can
  // be checked against hand-rolled oracles.
  bool zero_positional_embedding = false;
  std::vector<StageSpec> stages;

  void validate() const;  // throws ConfigError naming the offending field

  // Spatial side length of stage s features.
  std::int64_t stage_size(int s) const;

  static BackboneConfig desk_multi_scale();
  static BackboneConfig desk_single_scale();
};

// ------------------------------------------------------------------- peft

struct PeftConfig {
  // bottleneck = max(1, round(embed_dim * bottleneck_ratio))
  double adapter_bottleneck_ratio = 0.25;
  bool adapter_bias = true;
  // Empty means "every block boundary of every stage, including each stage
  // input". Otherwise, explicit (stage, block) pairs.
  bool attach_all_sites = true;
  std::vector<std::pair<int, int>> attachment_sites;
  double alpha_init = 0.1;
  // Ablation/test mode: pin the injector gates at alpha_init (they leave
  // the trainable set). With alpha_init = 0 this makes injectors inert for
  // entire training runs, reducing Eq. 5 to Eq. 3 exactly.
  bool alpha_trainable = true;

  void validate(const BackboneConfig& bb) const;
};

// ---------------------------------------------------------------- prompts

struct PromptSourceConfig {
  std::string name;        // directory / parameter name component
  int dim = 32;            // channel dim of the prompt feature
  enum class Layout { tokens, grid } layout = Layout::tokens;
  int tokens = 64;         // token count (square) for tokens layout
  int grid = 8;            // side length for grid layout
  enum class Provider { file, synthetic } provider = Provider::synthetic;
  // synthetic flavor: "pooled" derives features from the image itself,
  // "noise" draws them from an id-seeded stream.
  enum class SyntheticMode { pooled, noise } synthetic_mode = SyntheticMode::pooled;
  // Route this source through the text cross-attention interaction.
  bool cross_attention = false;
};

struct TextConfig {
  enum class Provider { file, synthetic } provider = Provider::synthetic;
  int dim = 24;
  int tokens = 6;  // token count for the synthetic provider
};

struct CrossAttentionConfig {
  int layers = 1;
  int heads = 2;
  int width = 32;  // internal attention width
};

struct PromptsConfig {
  std::string dir;  // root for file providers: <dir>/<source>/<id>.ten, <dir>/text/<id>.ten
  std::vector<PromptSourceConfig> sources;
  TextConfig text;
  CrossAttentionConfig cross_attention;

  bool any_cross_attention() const;
  void validate() const;
};

// --------------------------------------------------------------- decoders

struct DecoderConfig {
  int common_dim = 32;  // per-stage projection width (multi-scale)
  int fuse_dim = 32;    // fusion width
  // Test hooks: the linearity property of the multi-scale decoder only
  // holds with norm and activation disabled.
  enum class Norm { layer, none } fuse_norm = Norm::layer;
  enum class Activation { relu, identity } fuse_activation = Activation::relu;

  void validate() const;
};

// -------------------------------------------------------------- objective

struct LossWeights {
  double bce = 1.0;
  double iou = 1.0;
};

// ---------------------------------------------------------------- harness

struct OptimizerConfig {
  double learning_rate = 2e-4;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  std::string data_root;
  std::string out_dir = "runs/default";
  int steps = 2000;
  int batch_size = 8;
  int resolution = 64;       // images and masks are resized to this for training
  int log_every = 10;        // csv flush cadence
  int checkpoint_every = 0;  // 0 = only final
  bool skip_undecodable = false;
};

struct RunConfig {
  std::uint64_t seed = 7;
  BackboneConfig backbone;
  PeftConfig peft;
  PromptsConfig prompts;
  DecoderConfig decoder;
  LossWeights loss;
  OptimizerConfig optimizer;
  TrainConfig train;

  void validate() const;
  static RunConfig desk_default();
};

}  // namespace expert
