#pragma once

#include <optional>
#include <string>
#include <vector>

#include "expert/autograd.hpp"
#include "expert/config.hpp"
#include "expert/params.hpp"

namespace expert::peft {

// One adapter attachment site. down_w/down_b alias the stage-shared
// down-projection Var (same node identity for every site of a stage).
struct AdapterSiteParams {
  Var down_w, down_b;
  Var mid_w, mid_b;
  Var up_w, up_b;
};

// bottleneck width used for a stage of the given embedding dim
std::int64_t adapter_bottleneck(std::int64_t embed_dim, double ratio);

// Bottleneck residual: up(relu(mid(down(f)))), all position-wise linears
// over a (C, H, W) feature map. Output shape equals input shape.
Var adapter_forward(const Var& features, const AdapterSiteParams& site);

// All adapters of a model. Parameters register under "adapter.".
class AdapterStack {
public:
  AdapterStack(const BackboneConfig& backbone, const PeftConfig& peft, ParamRegistry& registry,
               std::uint64_t seed);

  bool attached(int stage, int block) const;
  // Null when no adapter sits at this boundary.
  const AdapterSiteParams* site(int stage, int block) const;
  std::int64_t bottleneck(int stage) const;

private:
  std::vector<std::vector<std::optional<AdapterSiteParams>>> sites_;  // [stage][block]
  std::vector<std::int64_t> bottlenecks_;
};

// Per (source, stage) injector parameters: channel projection to the stage
// dim plus the per-channel gate alpha.
struct InjectorParams {
  Var proj_w, proj_b;
  Var alpha;
};

class InjectorSet {
public:
  // source_names/dims describe the prompt sources, in config order.
  InjectorSet(const BackboneConfig& backbone, const std::vector<std::string>& source_names,
              const std::vector<std::int64_t>& source_dims, double alpha_init,
              ParamRegistry& registry, std::uint64_t seed);

  int num_sources() const { return static_cast<int>(params_.size()); }
  const InjectorParams& at(int source, int stage) const;

private:
  std::vector<std::vector<InjectorParams>> params_;  // [source][stage]
};

// Prompt grid (C_src, h, w) -> stage-shaped residual (C_stage, th, tw):
// per-channel standardization, bilinear resize, channel projection.
// The gate alpha is NOT applied here; block_transition owns it.
Var injector_forward(const Var& prompt_grid, std::int64_t target_h, std::int64_t target_w,
                     const InjectorParams& params);

// Sum of adapter residual and alpha-gated injector residuals. Undefined
// adapter_residual and empty injector list are allowed; returns an
// undefined Var when there is nothing to add.
Var transition_residual(const Var& adapter_residual, const std::vector<Var>& injector_residuals,
                        const std::vector<Var>& alphas);

// features + transition_residual(...), the Eq.-style block transition.
Var block_transition(const Var& features, const Var& adapter_residual,
                     const std::vector<Var>& injector_residuals, const std::vector<Var>& alphas);

// ------------------------------------------------------------ accounting

struct TrainedParamGroup {
  std::string name;  // "adapters", "injectors", "cross_attention", "decoder"
  std::int64_t count = 0;
};

struct TrainedParamReport {
  std::vector<TrainedParamGroup> groups;
  std::int64_t total = 0;
  std::int64_t bytes_fp32 = 0;  // total * 4
};

// Closed-form trainable parameter count from the configuration alone (no
// model is built). Must agree exactly with enumerating a constructed
// model's trainable partition.
TrainedParamReport count_trained_params(const RunConfig& config);

}  // namespace expert::peft
