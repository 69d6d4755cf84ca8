#pragma once

#include <vector>

#include "expert/autograd.hpp"

namespace expert::ops {

// Elementwise / scalar ---------------------------------------------------

Var add(const Var& a, const Var& b);            // same shape
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);            // Hadamard
Var scale(const Var& a, double s);
Var add_n(const std::vector<Var>& terms);       // n-ary same-shape sum

Var relu(const Var& x);
Var gelu(const Var& x);                         // exact erf form
Var sigmoid(const Var& x);

// Reductions -------------------------------------------------------------

Var sum_all(const Var& x);                      // -> scalar
Var mean_all(const Var& x);                     // -> scalar

// Shape ------------------------------------------------------------------

Var reshape(const Var& x, std::vector<std::int64_t> shape);
Var transpose(const Var& x);                    // rank 2
// (C,H,W) -> (H*W, C) token view and back.
Var chw_to_tokens(const Var& x);
Var tokens_to_chw(const Var& x, std::int64_t c, std::int64_t h, std::int64_t w);

Var concat_rank3_dim0(const std::vector<Var>& parts);   // channel concat
Var concat_cols(const std::vector<Var>& parts);         // rank 2, along dim 1
Var slice_cols(const Var& x, std::int64_t c0, std::int64_t c1);  // [c0, c1)

// Linear algebra ---------------------------------------------------------

Var matmul(const Var& a, const Var& b);         // (M,K)x(K,N)
// Row-wise linear: x (T,Din) -> (T,Dout) with w (Dout,Din), optional b (Dout).
Var linear_rows(const Var& x, const Var& w, const Var& b = Var());
// Position-wise linear over a feature map: x (Cin,H,W) -> (Cout,H,W).
Var linear_pointwise(const Var& x, const Var& w, const Var& b = Var());

// Per-channel scaling of a feature map: x (C,H,W) * alpha (C).
Var scale_channels(const Var& x, const Var& alpha);

// Normalization ----------------------------------------------------------

// Zero-mean / unit-variance per row (population variance + eps).
Var standardize_rows(const Var& x, double eps);
// Per-column affine on a (T,D) block: x * gamma + beta, gamma/beta (D).
Var affine_cols(const Var& x, const Var& gamma, const Var& beta);
// Layer norm over the last axis of a (T,D) block.
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);
// Layer norm over the channel axis of a (C,H,W) map (per position).
Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);
// Zero-mean / unit-variance per channel across spatial positions of (C,H,W).
Var standardize_channels(const Var& x, double eps = 1e-6);

Var softmax_rows(const Var& x);

// Spatial ----------------------------------------------------------------

// Convolution on (Cin,H,W) with w (Cout,Cin,kh,kw), symmetric zero padding.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int padding);
// Bilinear interpolation to (out_h, out_w), align_corners = false.
Var bilinear_resize(const Var& x, std::int64_t out_h, std::int64_t out_w);

// Value-level bilinear resize used outside the graph (data pipeline).
Tensor bilinear_resize_value(const Tensor& x, std::int64_t out_h, std::int64_t out_w);

}  // namespace expert::ops
