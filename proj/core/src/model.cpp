#include "expert/model.hpp"

#include "expert/errors.hpp"
#include "expert/ops.hpp"

namespace expert {

Model::Model(const RunConfig& config) : config_(config) {
  config_.validate();
  backbone_ = std::make_unique<backbone::Backbone>(config_.backbone, registry_);
  adapters_ = std::make_unique<peft::AdapterStack>(config_.backbone, config_.peft, registry_,
                                                   config_.seed);
  std::vector<std::string> source_names;
  std::vector<std::int64_t> source_dims;
  for (const PromptSourceConfig& src : config_.prompts.sources) {
    source_names.push_back(src.name);
    source_dims.push_back(src.dim);
  }
  injectors_ = std::make_unique<peft::InjectorSet>(config_.backbone, source_names, source_dims,
                                                   config_.peft.alpha_init, registry_, config_.seed);
  for (std::size_t j = 0; j < config_.prompts.sources.size(); ++j) {
    const PromptSourceConfig& src = config_.prompts.sources[j];
    if (!src.cross_attention) continue;
    interactions_.emplace(
        static_cast<int>(j),
        prompts::CrossAttentionInteraction(config_.prompts.cross_attention, src.name, src.dim,
                                           config_.prompts.text.dim, registry_, config_.seed));
  }
  if (config_.backbone.kind == BackboneConfig::Kind::multi_scale) {
    std::vector<std::int64_t> dims;
    for (const StageSpec& st : config_.backbone.stages) dims.push_back(st.embed_dim);
    multi_decoder_ = std::make_unique<decoders::MultiScaleDecoder>(dims, config_.decoder, registry_,
                                                                   config_.seed);
  } else {
    single_decoder_ = std::make_unique<decoders::SingleScaleDecoder>(
        config_.backbone.stages[0].embed_dim, config_.decoder, registry_, config_.seed);
  }
  partition_ = backbone::freeze_partition(registry_);
  if (!config_.peft.alpha_trainable) {
    // Pinned gates move to the frozen side so the optimizer never sees them.
    auto& trainable = partition_.trainable;
    for (auto it = trainable.begin(); it != trainable.end();) {
      const bool is_alpha = it->rfind("injector.", 0) == 0 &&
                            it->size() >= 6 && it->compare(it->size() - 6, 6, ".alpha") == 0;
      if (is_alpha) {
        Node& n = *registry_.get(*it).var.node();
        n.requires_grad = false;
        n.needs_grad = false;
        partition_.frozen.push_back(*it);
        it = trainable.erase(it);
      } else {
        ++it;
      }
    }
  }
}

Var Model::forward_logits(const Tensor& image, const PromptBundle& bundle) const {
  const std::size_t n_sources = config_.prompts.sources.size();
  if (bundle.features.size() != n_sources) {
    throw InputError("prompt bundle has " + std::to_string(bundle.features.size()) +
                     " features, config declares " + std::to_string(n_sources) + " sources");
  }

  // Per-source prompt grids, cross-attended where configured.
  std::vector<Var> grids;
  for (std::size_t j = 0; j < n_sources; ++j) {
    const PromptSourceConfig& src = config_.prompts.sources[j];
    const prompts::PromptFeature& feat = bundle.features[j];
    if (feat.source != src.name) {
      throw InputError("prompt bundle order mismatch: expected source '" + src.name + "', got '" +
                       feat.source + "'");
    }
    if (feat.is_tokens()) {
      Var tokens = Var::constant(feat.data);
      auto it = interactions_.find(static_cast<int>(j));
      if (it != interactions_.end()) {
        if (!bundle.text.defined()) {
          throw InputError("prompt source '" + src.name +
                           "' uses cross-attention but the bundle has no text embedding");
        }
        tokens = it->second.forward(tokens, Var::constant(bundle.text));
      }
      grids.push_back(prompts::tokens_to_grid(tokens));
    } else {
      if (interactions_.count(static_cast<int>(j))) {
        throw InputError("prompt source '" + src.name + "' is grid-shaped; cross-attention "
                         "requires token layout");
      }
      grids.push_back(Var::constant(feat.data));
    }
  }

  // Injector residuals are a function of the prompt and the stage geometry
  // only, so compute them once per stage and reuse at every boundary.
  const int n_stages = backbone_->num_stages();
  std::vector<std::vector<Var>> residuals(static_cast<std::size_t>(n_stages));
  std::vector<std::vector<Var>> alphas(static_cast<std::size_t>(n_stages));
  for (int s = 0; s < n_stages; ++s) {
    const std::int64_t side = config_.backbone.stage_size(s);
    for (std::size_t j = 0; j < n_sources; ++j) {
      const peft::InjectorParams& ip = injectors_->at(static_cast<int>(j), s);
      residuals[static_cast<std::size_t>(s)].push_back(
          peft::injector_forward(grids[j], side, side, ip));
      alphas[static_cast<std::size_t>(s)].push_back(ip.alpha);
    }
  }

  const backbone::TransitionHook hook = [&](const Var& f, int block, int stage) -> Var {
    Var adapter_res;
    if (const peft::AdapterSiteParams* site = adapters_->site(stage, block)) {
      adapter_res = peft::adapter_forward(f, *site);
    }
    return peft::transition_residual(adapter_res, residuals[static_cast<std::size_t>(stage)],
                                     alphas[static_cast<std::size_t>(stage)]);
  };

  const backbone::ForwardResult result = backbone_->forward_all(image, hook);
  if (multi_decoder_) {
    return multi_decoder_->decode(result.stage_outputs);
  }
  std::vector<backbone::FeatureMap> selected;
  for (int idx : backbone_->selected_feature_indices()) {
    selected.push_back(result.block_outputs[static_cast<std::size_t>(idx)]);
  }
  return single_decoder_->decode(selected);
}

Var Model::forward_mask(const Tensor& image, const PromptBundle& bundle, std::int64_t out_h,
                        std::int64_t out_w) const {
  return decoders::finalize_mask(forward_logits(image, bundle), out_h, out_w);
}

std::map<std::string, std::int64_t> Model::enumerate_trained_params() const {
  std::map<std::string, std::int64_t> groups{{"adapters", 0},
                                             {"injectors", 0},
                                             {"cross_attention", 0},
                                             {"decoder", 0}};
  for (const std::string& name : partition_.trainable) {
    const std::int64_t n = registry_.get(name).var.value().numel();
    if (name.rfind("adapter.", 0) == 0) {
      groups["adapters"] += n;
    } else if (name.rfind("injector.", 0) == 0) {
      groups["injectors"] += n;
    } else if (name.rfind("cross_attention.", 0) == 0) {
      groups["cross_attention"] += n;
    } else if (name.rfind("decoder.", 0) == 0) {
      groups["decoder"] += n;
    }
  }
  return groups;
}

}  // namespace expert
