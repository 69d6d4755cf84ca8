#include "expert/config.hpp"

#include <cmath>

#include "expert/errors.hpp"

namespace expert {

namespace {

void check_positive(long v, const char* field) {
  if (v < 1) {
    throw ConfigError(std::string(field) + " must be >= 1, got " + std::to_string(v));
  }
}

}  // namespace

void BackboneConfig::validate() const {
  if (stages.empty()) throw ConfigError("backbone.stages must not be empty");
  if (kind == Kind::multi_scale && stages.size() != 4) {
    throw ConfigError("backbone.stages: multi_scale requires exactly 4 stages, got " +
                      std::to_string(stages.size()));
  }
  if (kind == Kind::single_scale) {
    if (stages.size() != 1) {
      throw ConfigError("backbone.stages: single_scale requires exactly 1 stage, got " +
                        std::to_string(stages.size()));
    }
    if (stages[0].depth % 4 != 0) {
      throw ConfigError("backbone.stages[0].depth: single_scale depth must be divisible by 4, got " +
                        std::to_string(stages[0].depth));
    }
  }
  check_positive(input_resolution, "backbone.input_resolution");
  int prev_reduction = 0;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const StageSpec& st = stages[s];
    const std::string at = "backbone.stages[" + std::to_string(s) + "].";
    check_positive(st.depth, (at + "depth").c_str());
    check_positive(st.embed_dim, (at + "embed_dim").c_str());
    check_positive(st.num_heads, (at + "num_heads").c_str());
    check_positive(st.reduction, (at + "reduction").c_str());
    if (st.embed_dim % st.num_heads != 0) {
      throw ConfigError(at + "num_heads: must divide embed_dim (" + std::to_string(st.embed_dim) +
                        " % " + std::to_string(st.num_heads) + " != 0)");
    }
    if (s > 0) {
      if (st.reduction <= prev_reduction || st.reduction % prev_reduction != 0) {
        throw ConfigError(at + "reduction: must be an increasing multiple of the previous stage's " +
                          std::to_string(prev_reduction) + ", got " + std::to_string(st.reduction));
      }
    }
    if (input_resolution % st.reduction != 0) {
      throw ConfigError(at + "reduction: must divide input_resolution " +
                        std::to_string(input_resolution));
    }
    prev_reduction = st.reduction;
  }
}

std::int64_t BackboneConfig::stage_size(int s) const {
  return input_resolution / stages[static_cast<std::size_t>(s)].reduction;
}

BackboneConfig BackboneConfig::desk_multi_scale() {
  BackboneConfig c;
  c.kind = Kind::multi_scale;
  c.input_resolution = 64;
  c.stages = {
      {2, 16, 1, 4},
      {2, 32, 2, 8},
      {2, 64, 4, 16},
      {2, 128, 8, 32},
  };
  return c;
}

BackboneConfig BackboneConfig::desk_single_scale() {
  BackboneConfig c;
  c.kind = Kind::single_scale;
  c.input_resolution = 64;
  c.stages = {{4, 48, 4, 8}};
  return c;
}

void PeftConfig::validate(const BackboneConfig& bb) const {
  if (adapter_bottleneck_ratio <= 0.0) {
    throw ConfigError("peft.adapter_bottleneck_ratio must be positive");
  }
  if (alpha_init < 0.0) {
    throw ConfigError("peft.alpha_init must be non-negative");
  }
  if (!attach_all_sites) {
    for (const auto& [stage, block] : attachment_sites) {
      if (stage < 0 || stage >= static_cast<int>(bb.stages.size())) {
        throw ConfigError("peft.attachment_sites: stage " + std::to_string(stage) +
                          " out of range");
      }
      if (block < 0 || block >= bb.stages[static_cast<std::size_t>(stage)].depth) {
        throw ConfigError("peft.attachment_sites: block " + std::to_string(block) +
                          " out of range for stage " + std::to_string(stage));
      }
    }
  }
}

bool PromptsConfig::any_cross_attention() const {
  for (const auto& s : sources) {
    if (s.cross_attention) return true;
  }
  return false;
}

void PromptsConfig::validate() const {
  for (std::size_t j = 0; j < sources.size(); ++j) {
    const PromptSourceConfig& s = sources[j];
    const std::string at = "prompts.sources[" + std::to_string(j) + "].";
    if (s.name.empty()) throw ConfigError(at + "name must not be empty");
    check_positive(s.dim, (at + "dim").c_str());
    if (s.layout == PromptSourceConfig::Layout::tokens) {
      check_positive(s.tokens, (at + "tokens").c_str());
      const auto side = static_cast<int>(std::llround(std::sqrt(static_cast<double>(s.tokens))));
      if (side * side != s.tokens) {
        throw ConfigError(at + "tokens: must be a perfect square to form a grid, got " +
                          std::to_string(s.tokens));
      }
    } else {
      check_positive(s.grid, (at + "grid").c_str());
      if (s.cross_attention) {
        throw ConfigError(at + "cross_attention: requires tokens layout");
      }
    }
    for (std::size_t k = 0; k < j; ++k) {
      if (sources[k].name == s.name) {
        throw ConfigError(at + "name: duplicate source name '" + s.name + "'");
      }
    }
    if (s.provider == PromptSourceConfig::Provider::file && dir.empty()) {
      throw ConfigError(at + "provider: file provider requires prompts.dir");
    }
  }
  check_positive(text.dim, "prompts.text.dim");
  check_positive(text.tokens, "prompts.text.tokens");
  if (any_cross_attention()) {
    check_positive(cross_attention.layers, "prompts.cross_attention.layers");
    check_positive(cross_attention.heads, "prompts.cross_attention.heads");
    check_positive(cross_attention.width, "prompts.cross_attention.width");
    if (cross_attention.width % cross_attention.heads != 0) {
      throw ConfigError("prompts.cross_attention.heads: must divide width");
    }
  }
}

void DecoderConfig::validate() const {
  check_positive(common_dim, "decoder.common_dim");
  check_positive(fuse_dim, "decoder.fuse_dim");
}

void RunConfig::validate() const {
  backbone.validate();
  peft.validate(backbone);
  prompts.validate();
  decoder.validate();
  if (loss.bce < 0.0 || loss.iou < 0.0) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (optimizer.learning_rate <= 0.0) throw ConfigError("optimizer.learning_rate must be positive");
  if (optimizer.weight_decay < 0.0) throw ConfigError("optimizer.weight_decay must be non-negative");
  check_positive(train.steps, "train.steps");
  check_positive(train.batch_size, "train.batch_size");
  check_positive(train.resolution, "train.resolution");
  if (train.resolution % backbone.stages.back().reduction != 0 ||
      train.resolution != backbone.input_resolution) {
    throw ConfigError("train.resolution must equal backbone.input_resolution");
  }
}

RunConfig RunConfig::desk_default() {
  RunConfig c;
  c.seed = 7;
  c.backbone = BackboneConfig::desk_multi_scale();
  c.backbone.seed = 7;

  PromptSourceConfig vit;
  vit.name = "vit";
  vit.dim = 32;
  vit.layout = PromptSourceConfig::Layout::tokens;
  vit.tokens = 256;
  vit.provider = PromptSourceConfig::Provider::synthetic;
  vit.synthetic_mode = PromptSourceConfig::SyntheticMode::pooled;
  vit.cross_attention = false;

  PromptSourceConfig blip;
  blip.name = "blip";
  blip.dim = 32;
  blip.layout = PromptSourceConfig::Layout::tokens;
  blip.tokens = 64;
  blip.provider = PromptSourceConfig::Provider::synthetic;
  blip.synthetic_mode = PromptSourceConfig::SyntheticMode::pooled;
  blip.cross_attention = true;

  c.prompts.sources = {vit, blip};
  c.prompts.text = TextConfig{TextConfig::Provider::synthetic, 24, 6};
  c.prompts.cross_attention = CrossAttentionConfig{1, 2, 32};
  return c;
}

}  // namespace expert
