#include "expert/attention.hpp"

#include <cmath>

#include "expert/errors.hpp"
#include "expert/ops.hpp"

namespace expert {

namespace {
constexpr double kInitStd = 0.02;
}

MultiHeadAttention MultiHeadAttention::create(ParamRegistry& reg, const std::string& prefix,
                                              std::uint64_t seed, int heads, std::int64_t q_dim,
                                              std::int64_t kv_dim, std::int64_t width) {
  if (width % heads != 0) {
    throw ConfigError(prefix + ": attention width " + std::to_string(width) +
                      " not divisible by heads " + std::to_string(heads));
  }
  MultiHeadAttention a;
  a.heads = heads;
  a.width = width;
  a.wq = reg.create(prefix + ".wq", {width, q_dim}, Init::truncated_normal(kInitStd), seed);
  a.bq = reg.create(prefix + ".bq", {width}, Init::zeros(), seed);
  a.wk = reg.create(prefix + ".wk", {width, kv_dim}, Init::truncated_normal(kInitStd), seed);
  a.bk = reg.create(prefix + ".bk", {width}, Init::zeros(), seed);
  a.wv = reg.create(prefix + ".wv", {width, kv_dim}, Init::truncated_normal(kInitStd), seed);
  a.bv = reg.create(prefix + ".bv", {width}, Init::zeros(), seed);
  a.wo = reg.create(prefix + ".wo", {q_dim, width}, Init::truncated_normal(kInitStd), seed);
  a.bo = reg.create(prefix + ".bo", {q_dim}, Init::zeros(), seed);
  return a;
}

Var MultiHeadAttention::forward(const Var& q_tokens, const Var& kv_tokens) const {
  using namespace ops;
  const Var q = linear_rows(q_tokens, wq, bq);
  const Var k = linear_rows(kv_tokens, wk, bk);
  const Var v = linear_rows(kv_tokens, wv, bv);
  const std::int64_t head_dim = width / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(head_dim));

  std::vector<Var> head_outs;
  head_outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const std::int64_t c0 = h * head_dim, c1 = (h + 1) * head_dim;
    const Var qh = slice_cols(q, c0, c1);
    const Var kh = slice_cols(k, c0, c1);
    const Var vh = slice_cols(v, c0, c1);
    const Var scores = scale(matmul(qh, transpose(kh)), scale_factor);
    head_outs.push_back(matmul(softmax_rows(scores), vh));
  }
  const Var merged = heads == 1 ? head_outs[0] : concat_cols(head_outs);
  return linear_rows(merged, wo, bo);
}

}  // namespace expert
