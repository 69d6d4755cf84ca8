#include "expert/prompts.hpp"

#include <cmath>

#include "expert/errors.hpp"
#include "expert/harness/tensor_io.hpp"
#include "expert/ops.hpp"
#include "expert/rng.hpp"

namespace expert::prompts {

namespace {

constexpr double kInitStd = 0.02;

std::int64_t square_side(std::int64_t tokens, const std::string& what) {
  const auto side = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(tokens))));
  if (side * side != tokens) {
    throw ShapeError(what + ": token count " + std::to_string(tokens) + " is not a perfect square");
  }
  return side;
}

class FileProvider final : public PromptProvider {
public:
  FileProvider(PromptSourceConfig config, std::filesystem::path dir)
      : config_(std::move(config)), dir_(std::move(dir)) {}

  PromptFeature provide(const std::string& image_id, const Tensor&) const override {
    const std::filesystem::path path = dir_ / config_.name / (image_id + ".ten");
    Tensor data = harness::read_tensor(path);
    if (config_.layout == PromptSourceConfig::Layout::tokens) {
      if (data.rank() != 2 || data.dim(0) != config_.tokens || data.dim(1) != config_.dim) {
        throw InputError(path.string() + ": expected (" + std::to_string(config_.tokens) + "," +
                         std::to_string(config_.dim) + ") tokens, got " + data.shape_str());
      }
    } else {
      if (data.rank() != 3 || data.dim(0) != config_.dim || data.dim(1) != config_.grid ||
          data.dim(2) != config_.grid) {
        throw InputError(path.string() + ": expected (" + std::to_string(config_.dim) + "," +
                         std::to_string(config_.grid) + "," + std::to_string(config_.grid) +
                         ") grid, got " + data.shape_str());
      }
    }
    return PromptFeature{config_.name, std::move(data)};
  }

  const std::string& source_name() const override { return config_.name; }

private:
  PromptSourceConfig config_;
  std::filesystem::path dir_;
};

class SyntheticProvider final : public PromptProvider {
public:
  SyntheticProvider(PromptSourceConfig config, std::uint64_t seed)
      : config_(std::move(config)), seed_(seed) {}

  PromptFeature provide(const std::string& image_id, const Tensor& image) const override {
    const std::int64_t side = config_.layout == PromptSourceConfig::Layout::tokens
                                  ? square_side(config_.tokens, "prompt source " + config_.name)
                                  : config_.grid;
    Tensor grid;
    if (config_.synthetic_mode == PromptSourceConfig::SyntheticMode::pooled) {
      grid = pooled_grid(image, side);
    } else {
      grid = noise_grid(image_id, side);
    }
    if (config_.layout == PromptSourceConfig::Layout::grid) {
      return PromptFeature{config_.name, std::move(grid)};
    }
    // Flatten the grid into row-major tokens: token (y*side + x) -> dim d.
    Tensor tokens({side * side, static_cast<std::int64_t>(config_.dim)});
    for (std::int64_t d = 0; d < config_.dim; ++d) {
      for (std::int64_t p = 0; p < side * side; ++p) {
        tokens.at(p, d) = grid[d * side * side + p];
      }
    }
    return PromptFeature{config_.name, std::move(tokens)};
  }

  const std::string& source_name() const override { return config_.name; }

private:
  // Average-pooled image patches, channels cycled up to the requested dim.
  Tensor pooled_grid(const Tensor& image, std::int64_t side) const {
    if (image.rank() != 3 || image.dim(0) != 3) {
      throw InputError("pooled prompt source '" + config_.name + "' requires a (3,H,W) image");
    }
    const Tensor small = ops::bilinear_resize_value(image, side, side);
    Tensor grid({static_cast<std::int64_t>(config_.dim), side, side});
    for (std::int64_t d = 0; d < config_.dim; ++d) {
      const std::int64_t c = d % 3;
      for (std::int64_t p = 0; p < side * side; ++p) {
        grid[d * side * side + p] = small[c * side * side + p];
      }
    }
    return grid;
  }

  Tensor noise_grid(const std::string& image_id, std::int64_t side) const {
    Rng rng(seed_, config_.name + "/" + image_id);
    Tensor grid({static_cast<std::int64_t>(config_.dim), side, side});
    for (std::int64_t i = 0; i < grid.numel(); ++i) grid[i] = rng.normal();
    return grid;
  }

  PromptSourceConfig config_;
  std::uint64_t seed_;
};

}  // namespace

Tensor tokens_to_grid_value(const Tensor& tokens) {
  if (tokens.rank() != 2) {
    throw ShapeError("tokens_to_grid: expected rank-2 tokens, got " + tokens.shape_str());
  }
  const std::int64_t side = square_side(tokens.dim(0), "tokens_to_grid");
  const std::int64_t d = tokens.dim(1);
  Tensor grid({d, side, side});
  for (std::int64_t c = 0; c < d; ++c) {
    for (std::int64_t p = 0; p < side * side; ++p) {
      grid[c * side * side + p] = tokens.at(p, c);
    }
  }
  return grid;
}

Var tokens_to_grid(const Var& tokens) {
  if (tokens.value().rank() != 2) {
    throw ShapeError("tokens_to_grid: expected rank-2 tokens, got " + tokens.value().shape_str());
  }
  const std::int64_t side = square_side(tokens.value().dim(0), "tokens_to_grid");
  const std::int64_t d = tokens.value().dim(1);
  return ops::tokens_to_chw(tokens, d, side, side);
}

std::unique_ptr<PromptProvider> make_provider(const PromptSourceConfig& config,
                                              const std::filesystem::path& prompts_dir,
                                              std::uint64_t seed) {
  if (config.provider == PromptSourceConfig::Provider::file) {
    if (prompts_dir.empty()) {
      throw ConfigError("prompt source '" + config.name + "': file provider requires prompts.dir");
    }
    return std::make_unique<FileProvider>(config, prompts_dir);
  }
  return std::make_unique<SyntheticProvider>(config, seed);
}

TextProvider::TextProvider(const TextConfig& config, std::filesystem::path prompts_dir,
                           std::uint64_t seed)
    : config_(config), dir_(std::move(prompts_dir)), seed_(seed) {
  if (config_.provider == TextConfig::Provider::file && dir_.empty()) {
    throw ConfigError("prompts.text: file provider requires prompts.dir");
  }
}

Tensor TextProvider::provide(const std::string& image_id) const {
  if (config_.provider == TextConfig::Provider::file) {
    const std::filesystem::path path = dir_ / "text" / (image_id + ".ten");
    Tensor data = harness::read_tensor(path);
    if (data.rank() != 2 || data.dim(1) != config_.dim) {
      throw InputError(path.string() + ": expected (K," + std::to_string(config_.dim) +
                       ") text embedding, got " + data.shape_str());
    }
    return data;
  }
  Rng rng(seed_, "text/" + image_id);
  Tensor data({static_cast<std::int64_t>(config_.tokens), static_cast<std::int64_t>(config_.dim)});
  for (std::int64_t i = 0; i < data.numel(); ++i) data[i] = rng.normal();
  return data;
}

CrossAttentionInteraction::CrossAttentionInteraction(const CrossAttentionConfig& config,
                                                     const std::string& source_name,
                                                     std::int64_t vision_dim, std::int64_t text_dim,
                                                     ParamRegistry& registry, std::uint64_t seed)
    : vision_dim_(vision_dim), text_dim_(text_dim) {
  for (int l = 0; l < config.layers; ++l) {
    const std::string prefix =
        "cross_attention." + source_name + ".layer" + std::to_string(l);
    Layer layer;
    layer.ln_attn_gamma = registry.create(prefix + ".ln_attn.gamma", {vision_dim}, Init::ones(), seed);
    layer.ln_attn_beta = registry.create(prefix + ".ln_attn.beta", {vision_dim}, Init::zeros(), seed);
    layer.attn = MultiHeadAttention::create(registry, prefix + ".attn", seed, config.heads,
                                            vision_dim, text_dim, config.width);
    layer.ln_ffn_gamma = registry.create(prefix + ".ln_ffn.gamma", {vision_dim}, Init::ones(), seed);
    layer.ln_ffn_beta = registry.create(prefix + ".ln_ffn.beta", {vision_dim}, Init::zeros(), seed);
    layer.ffn_w1 = registry.create(prefix + ".ffn.w1", {4 * vision_dim, vision_dim},
                                   Init::truncated_normal(kInitStd), seed);
    layer.ffn_b1 = registry.create(prefix + ".ffn.b1", {4 * vision_dim}, Init::zeros(), seed);
    layer.ffn_w2 = registry.create(prefix + ".ffn.w2", {vision_dim, 4 * vision_dim},
                                   Init::truncated_normal(kInitStd), seed);
    layer.ffn_b2 = registry.create(prefix + ".ffn.b2", {vision_dim}, Init::zeros(), seed);
    layers_.push_back(std::move(layer));
  }
}

Var CrossAttentionInteraction::forward(const Var& vision_tokens, const Var& text_tokens) const {
  using namespace ops;
  if (vision_tokens.value().rank() != 2 || vision_tokens.value().dim(1) != vision_dim_) {
    throw ShapeError("cross-attention expects (T," + std::to_string(vision_dim_) +
                     ") vision tokens, got " + vision_tokens.value().shape_str());
  }
  if (text_tokens.value().rank() != 2 || text_tokens.value().dim(1) != text_dim_) {
    throw ShapeError("cross-attention expects (K," + std::to_string(text_dim_) +
                     ") text tokens, got " + text_tokens.value().shape_str());
  }
  Var x = vision_tokens;
  for (const Layer& layer : layers_) {
    const Var q = layer_norm_rows(x, layer.ln_attn_gamma, layer.ln_attn_beta);
    x = add(x, layer.attn.forward(q, text_tokens));
    const Var f = layer_norm_rows(x, layer.ln_ffn_gamma, layer.ln_ffn_beta);
    x = add(x, linear_rows(gelu(linear_rows(f, layer.ffn_w1, layer.ffn_b1)), layer.ffn_w2,
                           layer.ffn_b2));
  }
  return x;
}

}  // namespace expert::prompts
