#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "expert/backbone.hpp"
#include "expert/config.hpp"
#include "expert/decoders.hpp"
#include "expert/peft.hpp"
#include "expert/prompts.hpp"

namespace expert {

// Everything externally provided for one image, in prompt-source config
// order. text is required iff any source uses the cross-attention
// interaction.
struct PromptBundle {
  std::vector<prompts::PromptFeature> features;
  Tensor text;
};

// The full tuned model: frozen backbone, adapters at block boundaries,
// prompt injectors, optional text cross-attention, and a mask decoder.
// Construction is deterministic in (config, seeds); the frozen/trainable
// partition is applied immediately.
class Model {
public:
  explicit Model(const RunConfig& config);

  const RunConfig& config() const { return config_; }
  ParamRegistry& params() { return registry_; }
  const ParamRegistry& params() const { return registry_; }
  const ParamPartition& partition() const { return partition_; }
  const backbone::Backbone& feature_backbone() const { return *backbone_; }

  // Saliency logits at decoder scale, (1, h, w).
  Var forward_logits(const Tensor& image, const PromptBundle& bundle) const;
  // Probabilities resized to (out_h, out_w), rank 2.
  Var forward_mask(const Tensor& image, const PromptBundle& bundle, std::int64_t out_h,
                   std::int64_t out_w) const;

  // Trainable counts per group as actually registered, keyed like the
  // analytic report ("adapters", "injectors", "cross_attention", "decoder").
  std::map<std::string, std::int64_t> enumerate_trained_params() const;

private:
  RunConfig config_;
  ParamRegistry registry_;
  ParamPartition partition_;
  std::unique_ptr<backbone::Backbone> backbone_;
  std::unique_ptr<peft::AdapterStack> adapters_;
  std::unique_ptr<peft::InjectorSet> injectors_;
  // One interaction per cross-attending source, keyed by source index.
  std::map<int, prompts::CrossAttentionInteraction> interactions_;
  std::unique_ptr<decoders::MultiScaleDecoder> multi_decoder_;
  std::unique_ptr<decoders::SingleScaleDecoder> single_decoder_;
};

}  // namespace expert
