#include "expert/harness/optimizer.hpp"

#include <cassert>
#include <cmath>

#include "expert/errors.hpp"

namespace expert::harness {

AdamW::AdamW(ParamRegistry& registry, std::vector<std::string> trainable_names,
             const OptimizerConfig& config)
    : registry_(registry), names_(std::move(trainable_names)), config_(config) {
  for (const std::string& name : names_) {
    const Parameter& p = registry_.get(name);
    if (!p.var.node()->requires_grad) {
      throw PartitionError("optimizer given non-trainable parameter '" + name + "'");
    }
    slots_.emplace(name, Slot{Tensor::zeros(p.var.value().shape()),
                              Tensor::zeros(p.var.value().shape())});
  }
}

void AdamW::zero_grad() {
  for (const std::string& name : names_) {
    registry_.get(name).var.clear_grad();
  }
}

void AdamW::step() {
  ++t_;
  const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (const std::string& name : names_) {
    Parameter& p = registry_.get(name);
    assert(p.var.node()->requires_grad && "optimizer must only touch trainable parameters");
    Slot& slot = slots_.at(name);
    Tensor& value = p.var.mutable_value();
    const bool has_grad = p.var.has_grad();
    const Tensor& grad = p.var.grad();
    for (std::int64_t i = 0; i < value.numel(); ++i) {
      const double g = has_grad ? grad[i] : 0.0;
      slot.m[i] = config_.beta1 * slot.m[i] + (1.0 - config_.beta1) * g;
      slot.v[i] = config_.beta2 * slot.v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = slot.m[i] / bias1;
      const double v_hat = slot.v[i] / bias2;
      value[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.eps);
      if (config_.weight_decay != 0.0) {
        value[i] -= config_.learning_rate * config_.weight_decay * value[i];
      }
    }
  }
}

void AdamW::restore(std::int64_t t, std::map<std::string, Slot> slots) {
  if (slots.size() != slots_.size()) {
    throw InputError("optimizer state has " + std::to_string(slots.size()) +
                     " slots, model expects " + std::to_string(slots_.size()));
  }
  for (const auto& [name, slot] : slots) {
    auto it = slots_.find(name);
    if (it == slots_.end()) {
      throw InputError("optimizer state names unknown parameter '" + name + "'");
    }
    if (!slot.m.same_shape(it->second.m)) {
      throw InputError("optimizer state shape mismatch for '" + name + "'");
    }
  }
  t_ = t;
  slots_ = std::move(slots);
}

}  // namespace expert::harness
