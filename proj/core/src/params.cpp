#include "expert/params.hpp"

#include <cstring>

#include "expert/errors.hpp"
#include "expert/rng.hpp"

namespace expert {

Var ParamRegistry::create(const std::string& name, std::vector<std::int64_t> shape, Init init,
                          std::uint64_t seed) {
  if (index_.count(name)) {
    throw ConfigError("duplicate parameter name: " + name);
  }
  Tensor value(std::move(shape));
  switch (init.kind) {
    case Init::Kind::zeros:
      break;
    case Init::Kind::ones:
      for (std::int64_t i = 0; i < value.numel(); ++i) value[i] = 1.0;
      break;
    case Init::Kind::constant:
      for (std::int64_t i = 0; i < value.numel(); ++i) value[i] = init.value;
      break;
    case Init::Kind::truncated_normal: {
      Rng rng(seed, name);
      for (std::int64_t i = 0; i < value.numel(); ++i) value[i] = rng.truncated_normal(init.value);
      break;
    }
  }
  Var var = Var::leaf(std::move(value), /*requires_grad=*/false);
  index_.emplace(name, ordered_.size());
  ordered_.push_back(Parameter{name, var});
  return var;
}

Parameter& ParamRegistry::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return ordered_[it->second];
}

const Parameter& ParamRegistry::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return ordered_[it->second];
}

std::int64_t ParamRegistry::count_elements(const std::string& prefix) const {
  std::int64_t n = 0;
  for (const Parameter& p : ordered_) {
    if (p.name.rfind(prefix, 0) == 0) n += p.var.value().numel();
  }
  return n;
}

std::uint64_t hash_param_bytes(const ParamRegistry& reg, const std::vector<std::string>& names) {
  std::uint64_t h = 14695981039346656037ull;
  for (const std::string& name : names) {
    const Tensor& t = reg.get(name).var.value();
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    const std::size_t n = static_cast<std::size_t>(t.numel()) * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace expert
