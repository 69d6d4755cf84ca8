#pragma once

#include <map>
#include <string>
#include <vector>

#include "expert/config.hpp"
#include "expert/params.hpp"

namespace expert::harness {

// Decoupled-weight-decay Adam over exactly the trainable partition.
// Parameters with no accumulated gradient in a step receive the standard
// zero-gradient update, which is an exact no-op at weight_decay = 0.
class AdamW {
public:
  struct Slot {
    Tensor m, v;
  };

  AdamW(ParamRegistry& registry, std::vector<std::string> trainable_names,
        const OptimizerConfig& config);

  void zero_grad();
  void step();

  std::int64_t step_count() const { return t_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }

  // Checkpoint restore: plugs back moment tensors and the step counter.
  void restore(std::int64_t t, std::map<std::string, Slot> slots);

private:
  ParamRegistry& registry_;
  std::vector<std::string> names_;
  OptimizerConfig config_;
  std::map<std::string, Slot> slots_;
  std::int64_t t_ = 0;
};

}  // namespace expert::harness
