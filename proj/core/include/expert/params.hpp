#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "expert/autograd.hpp"

namespace expert {

// How a parameter tensor is filled at registration time.
struct Init {
  enum class Kind { zeros, ones, constant, truncated_normal };
  Kind kind = Kind::zeros;
  double value = 0.0;  // constant value or normal std

  static Init zeros() { return {Kind::zeros, 0.0}; }
  static Init ones() { return {Kind::ones, 0.0}; }
  static Init constant(double v) { return {Kind::constant, v}; }
  static Init truncated_normal(double std_dev) { return {Kind::truncated_normal, std_dev}; }
};

struct Parameter {
  std::string name;
  Var var;
};

// Owns every parameter of a model, keyed by hierarchical dotted names
// ("backbone.stage0.block1.attn.wq"). Each tensor is initialized from an
// RNG stream derived from (seed, name), so two models sharing a name and
// seed hold identical values regardless of what else they contain.
class ParamRegistry {
public:
  // Registers a new parameter; throws ConfigError on duplicate names.
  Var create(const std::string& name, std::vector<std::int64_t> shape, Init init,
             std::uint64_t seed);

  bool has(const std::string& name) const { return index_.count(name) != 0; }
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;

  const std::vector<Parameter>& all() const { return ordered_; }
  std::size_t size() const { return ordered_.size(); }

  // Element count across parameters whose name starts with prefix.
  std::int64_t count_elements(const std::string& prefix) const;

private:
  std::vector<Parameter> ordered_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Frozen/trainable split over a registry, by name.
struct ParamPartition {
  std::vector<std::string> frozen;
  std::vector<std::string> trainable;
};

// FNV-1a over the raw bytes of every parameter listed in names, in list
// order. Used to prove frozen tensors never move during training.
std::uint64_t hash_param_bytes(const ParamRegistry& reg, const std::vector<std::string>& names);

}  // namespace expert
