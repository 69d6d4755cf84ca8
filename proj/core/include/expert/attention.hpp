#pragma once

#include <string>

#include "expert/autograd.hpp"
#include "expert/params.hpp"

namespace expert {

// Multi-head scaled dot-product attention. Queries come from one token
// block, keys/values from another (equal blocks for self-attention).
// Output width equals the query dim; the internal width may differ.
struct MultiHeadAttention {
  int heads = 1;
  std::int64_t width = 0;  // internal q/k/v width, divisible by heads
  Var wq, bq, wk, bk, wv, bv, wo, bo;

  static MultiHeadAttention create(ParamRegistry& reg, const std::string& prefix,
                                   std::uint64_t seed, int heads, std::int64_t q_dim,
                                   std::int64_t kv_dim, std::int64_t width);

  // q_tokens (Tq, q_dim), kv_tokens (Tk, kv_dim) -> (Tq, q_dim)
  Var forward(const Var& q_tokens, const Var& kv_tokens) const;
};

}  // namespace expert
