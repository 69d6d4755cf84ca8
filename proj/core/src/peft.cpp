#include "expert/peft.hpp"

#include <algorithm>
#include <cmath>

#include "expert/errors.hpp"
#include "expert/ops.hpp"

namespace expert::peft {

namespace {
constexpr double kInitStd = 0.02;
constexpr double kNormEps = 1e-6;
}  // namespace

std::int64_t adapter_bottleneck(std::int64_t embed_dim, double ratio) {
  const auto b = static_cast<std::int64_t>(std::llround(static_cast<double>(embed_dim) * ratio));
  return std::max<std::int64_t>(1, b);
}

Var adapter_forward(const Var& features, const AdapterSiteParams& site) {
  using namespace ops;
  const Var down = linear_pointwise(features, site.down_w, site.down_b);
  const Var mid = linear_pointwise(down, site.mid_w, site.mid_b);
  return linear_pointwise(relu(mid), site.up_w, site.up_b);
}

AdapterStack::AdapterStack(const BackboneConfig& backbone, const PeftConfig& peft,
                           ParamRegistry& registry, std::uint64_t seed) {
  peft.validate(backbone);
  const int num_stages = static_cast<int>(backbone.stages.size());
  sites_.resize(static_cast<std::size_t>(num_stages));
  for (int s = 0; s < num_stages; ++s) {
    const int depth = backbone.stages[static_cast<std::size_t>(s)].depth;
    sites_[static_cast<std::size_t>(s)].resize(static_cast<std::size_t>(depth));
    const std::int64_t dim = backbone.stages[static_cast<std::size_t>(s)].embed_dim;
    const std::int64_t bott = adapter_bottleneck(dim, peft.adapter_bottleneck_ratio);
    bottlenecks_.push_back(bott);

    std::vector<int> attached_blocks;
    for (int b = 0; b < depth; ++b) {
      const bool on = peft.attach_all_sites ||
                      std::count(peft.attachment_sites.begin(), peft.attachment_sites.end(),
                                 std::make_pair(s, b)) > 0;
      if (on) attached_blocks.push_back(b);
    }
    if (attached_blocks.empty()) continue;

    // One down-projection per stage, shared by every site in it.
    const std::string stage_prefix = "adapter.stage" + std::to_string(s);
    Var down_w = registry.create(stage_prefix + ".down.weight", {bott, dim},
                                 Init::truncated_normal(kInitStd), seed);
    Var down_b;
    if (peft.adapter_bias) {
      down_b = registry.create(stage_prefix + ".down.bias", {bott}, Init::zeros(), seed);
    }
    for (int b : attached_blocks) {
      const std::string site_prefix = stage_prefix + ".site" + std::to_string(b);
      AdapterSiteParams site;
      site.down_w = down_w;
      site.down_b = down_b;
      site.mid_w = registry.create(site_prefix + ".mid.weight", {bott, bott},
                                   Init::truncated_normal(kInitStd), seed);
      site.up_w = registry.create(site_prefix + ".up.weight", {dim, bott},
                                  Init::truncated_normal(kInitStd), seed);
      if (peft.adapter_bias) {
        site.mid_b = registry.create(site_prefix + ".mid.bias", {bott}, Init::zeros(), seed);
        site.up_b = registry.create(site_prefix + ".up.bias", {dim}, Init::zeros(), seed);
      }
      sites_[static_cast<std::size_t>(s)][static_cast<std::size_t>(b)] = site;
    }
  }
}

bool AdapterStack::attached(int stage, int block) const {
  return sites_[static_cast<std::size_t>(stage)][static_cast<std::size_t>(block)].has_value();
}

const AdapterSiteParams* AdapterStack::site(int stage, int block) const {
  const auto& slot = sites_[static_cast<std::size_t>(stage)][static_cast<std::size_t>(block)];
  return slot ? &*slot : nullptr;
}

std::int64_t AdapterStack::bottleneck(int stage) const {
  return bottlenecks_[static_cast<std::size_t>(stage)];
}

InjectorSet::InjectorSet(const BackboneConfig& backbone, const std::vector<std::string>& source_names,
                         const std::vector<std::int64_t>& source_dims, double alpha_init,
                         ParamRegistry& registry, std::uint64_t seed) {
  if (source_names.size() != source_dims.size()) {
    throw ConfigError("injector sources: name/dim count mismatch");
  }
  const int num_stages = static_cast<int>(backbone.stages.size());
  for (std::size_t j = 0; j < source_names.size(); ++j) {
    std::vector<InjectorParams> per_stage;
    for (int s = 0; s < num_stages; ++s) {
      const std::int64_t dim = backbone.stages[static_cast<std::size_t>(s)].embed_dim;
      const std::string prefix =
          "injector." + source_names[j] + ".stage" + std::to_string(s);
      InjectorParams p;
      p.proj_w = registry.create(prefix + ".proj.weight", {dim, source_dims[j]},
                                 Init::truncated_normal(kInitStd), seed);
      p.proj_b = registry.create(prefix + ".proj.bias", {dim}, Init::zeros(), seed);
      p.alpha = registry.create(prefix + ".alpha", {dim}, Init::constant(alpha_init), seed);
      per_stage.push_back(std::move(p));
    }
    params_.push_back(std::move(per_stage));
  }
}

const InjectorParams& InjectorSet::at(int source, int stage) const {
  return params_[static_cast<std::size_t>(source)][static_cast<std::size_t>(stage)];
}

Var injector_forward(const Var& prompt_grid, std::int64_t target_h, std::int64_t target_w,
                     const InjectorParams& params) {
  using namespace ops;
  const Var normalized = standardize_channels(prompt_grid, kNormEps);
  const Var resized = bilinear_resize(normalized, target_h, target_w);
  return linear_pointwise(resized, params.proj_w, params.proj_b);
}

Var transition_residual(const Var& adapter_residual, const std::vector<Var>& injector_residuals,
                        const std::vector<Var>& alphas) {
  if (injector_residuals.size() != alphas.size()) {
    throw HookContractError("transition: " + std::to_string(injector_residuals.size()) +
                            " injector residuals but " + std::to_string(alphas.size()) + " gates");
  }
  std::vector<Var> terms;
  if (adapter_residual.defined()) terms.push_back(adapter_residual);
  for (std::size_t j = 0; j < injector_residuals.size(); ++j) {
    terms.push_back(ops::scale_channels(injector_residuals[j], alphas[j]));
  }
  if (terms.empty()) return Var();
  return terms.size() == 1 ? terms[0] : ops::add_n(terms);
}

Var block_transition(const Var& features, const Var& adapter_residual,
                     const std::vector<Var>& injector_residuals, const std::vector<Var>& alphas) {
  const Var residual = transition_residual(adapter_residual, injector_residuals, alphas);
  if (!residual.defined()) return features;
  check_same_shape(features.value(), residual.value(), "block_transition");
  return ops::add(features, residual);
}

TrainedParamReport count_trained_params(const RunConfig& config) {
  config.validate();
  const BackboneConfig& bb = config.backbone;
  const int num_stages = static_cast<int>(bb.stages.size());

  std::int64_t adapters = 0;
  for (int s = 0; s < num_stages; ++s) {
    const std::int64_t dim = bb.stages[static_cast<std::size_t>(s)].embed_dim;
    const std::int64_t bott = adapter_bottleneck(dim, config.peft.adapter_bottleneck_ratio);
    std::int64_t n_sites = 0;
    if (config.peft.attach_all_sites) {
      n_sites = bb.stages[static_cast<std::size_t>(s)].depth;
    } else {
      for (const auto& [stage, block] : config.peft.attachment_sites) {
        if (stage == s) ++n_sites;
      }
    }
    if (n_sites == 0) continue;
    const std::int64_t bias = config.peft.adapter_bias ? 1 : 0;
    adapters += bott * dim + bias * bott;                          // shared down
    adapters += n_sites * (bott * bott + bias * bott);             // mid per site
    adapters += n_sites * (dim * bott + bias * dim);               // up per site
  }

  std::int64_t injectors = 0;
  for (const PromptSourceConfig& src : config.prompts.sources) {
    for (int s = 0; s < num_stages; ++s) {
      const std::int64_t dim = bb.stages[static_cast<std::size_t>(s)].embed_dim;
      injectors += dim * src.dim + dim;                  // projection + bias
      if (config.peft.alpha_trainable) injectors += dim; // alpha gate
    }
  }

  std::int64_t cross = 0;
  for (const PromptSourceConfig& src : config.prompts.sources) {
    if (!src.cross_attention) continue;
    const std::int64_t dv = src.dim;
    const std::int64_t dt = config.prompts.text.dim;
    const std::int64_t w = config.prompts.cross_attention.width;
    for (int l = 0; l < config.prompts.cross_attention.layers; ++l) {
      cross += 2 * dv;                       // attention layer norm
      cross += w * dv + w;                   // wq
      cross += 2 * (w * dt + w);             // wk, wv
      cross += dv * w + dv;                  // wo
      cross += 2 * dv;                       // ffn layer norm
      cross += 4 * dv * dv + 4 * dv;         // ffn w1
      cross += dv * 4 * dv + dv;             // ffn w2
    }
  }

  std::int64_t decoder = 0;
  const std::int64_t c = config.decoder.common_dim;
  const std::int64_t f = config.decoder.fuse_dim;
  if (bb.kind == BackboneConfig::Kind::multi_scale) {
    for (int s = 0; s < num_stages; ++s) {
      decoder += c * bb.stages[static_cast<std::size_t>(s)].embed_dim + c;  // per-stage proj
    }
    decoder += f * (4 * c) + f;  // fuse 1x1
    if (config.decoder.fuse_norm == DecoderConfig::Norm::layer) decoder += 2 * f;
    decoder += f + 1;  // pred 1x1 -> 1 channel
  } else {
    const std::int64_t d = bb.stages[0].embed_dim;
    decoder += f * (4 * d) * 9 + f;  // 3x3 fuse conv
    decoder += f * 9 + 1;            // 3x3 pred conv -> 1 channel
  }

  TrainedParamReport report;
  report.groups = {{"adapters", adapters},
                   {"injectors", injectors},
                   {"cross_attention", cross},
                   {"decoder", decoder}};
  report.total = adapters + injectors + cross + decoder;
  report.bytes_fp32 = report.total * 4;
  return report;
}

}  // namespace expert::peft
