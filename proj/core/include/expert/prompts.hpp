#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "expert/attention.hpp"
#include "expert/autograd.hpp"
#include "expert/config.hpp"
#include "expert/params.hpp"

namespace expert::prompts {

// An external feature for one image from one source: token layout (T, D)
// or grid layout (C, h, w).
struct PromptFeature {
  std::string source;
  Tensor data;
  bool is_tokens() const { return data.rank() == 2; }
};

// Square-token block (T, D) -> grid (D, s, s) with s = sqrt(T).
Tensor tokens_to_grid_value(const Tensor& tokens);
Var tokens_to_grid(const Var& tokens);

class PromptProvider {
public:
  virtual ~PromptProvider() = default;
  // image is the loaded (3, H, W) input in [0, 1].
  virtual PromptFeature provide(const std::string& image_id, const Tensor& image) const = 0;
  virtual const std::string& source_name() const = 0;
};

// Reads <dir>/<source>/<image_id>.ten and validates its declared layout.
// The synthetic provider derives features either from the image itself
// (average-pooled patches, channels cycled to the requested dim) or from an
// (seed, image_id)-keyed noise stream.
std::unique_ptr<PromptProvider> make_provider(const PromptSourceConfig& config,
                                              const std::filesystem::path& prompts_dir,
                                              std::uint64_t seed);

// Text embeddings (K, text_dim) per image; file provider reads
// <dir>/text/<image_id>.ten.
class TextProvider {
public:
  TextProvider(const TextConfig& config, std::filesystem::path prompts_dir, std::uint64_t seed);
  Tensor provide(const std::string& image_id) const;

private:
  TextConfig config_;
  std::filesystem::path dir_;
  std::uint64_t seed_;
};

// Residual cross-attention stack: vision tokens attend to text tokens
// (pre-norm, feed-forward expansion 4). Output keeps the vision token
// layout and width. Parameters register under "cross_attention.<source>.".
class CrossAttentionInteraction {
public:
  CrossAttentionInteraction(const CrossAttentionConfig& config, const std::string& source_name,
                            std::int64_t vision_dim, std::int64_t text_dim,
                            ParamRegistry& registry, std::uint64_t seed);

  // vision (Tv, vision_dim), text (Tt, text_dim) -> (Tv, vision_dim)
  Var forward(const Var& vision_tokens, const Var& text_tokens) const;

  int layers() const { return static_cast<int>(layers_.size()); }

private:
  struct Layer {
    Var ln_attn_gamma, ln_attn_beta;
    MultiHeadAttention attn;
    Var ln_ffn_gamma, ln_ffn_beta;
    Var ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  };
  std::int64_t vision_dim_ = 0;
  std::int64_t text_dim_ = 0;
  std::vector<Layer> layers_;
};

}  // namespace expert::prompts
