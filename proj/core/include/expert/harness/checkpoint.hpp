#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "expert/config.hpp"
#include "expert/harness/optimizer.hpp"
#include "expert/tensor.hpp"

namespace expert::harness {

// Serialized training state. The frozen backbone is reconstructed from the
// config snapshot's seed; only trainable tensors (and optimizer moments)
// are stored, at full double precision, so reload reproduces evaluation
// outputs bit for bit.
struct Checkpoint {
  RunConfig config;
  std::int64_t step = 0;
  std::map<std::string, Tensor> trainable;
  bool has_optimizer = false;
  std::int64_t adam_step = 0;
  std::map<std::string, AdamW::Slot> optimizer;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace expert::harness
