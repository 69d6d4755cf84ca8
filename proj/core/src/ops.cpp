#include "expert/ops.hpp"

#include <Eigen/Core>

#include <cmath>
#include <utility>

#include "expert/errors.hpp"

namespace expert::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap map2(const Tensor& t, std::int64_t rows, std::int64_t cols) {
  return ConstMap(t.data(), rows, cols);
}

MutMap map2(Tensor& t, std::int64_t rows, std::int64_t cols) {
  return MutMap(t.data(), rows, cols);
}

void require_rank(const Var& v, int rank, const char* op) {
  if (v.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + " tensor, got " +
                     v.value().shape_str());
  }
}

// Bilinear sampling plan for one axis, align_corners = false.
struct AxisMap {
  std::vector<std::int64_t> lo, hi;
  std::vector<double> frac;  // weight of hi; lo gets (1 - frac)
};

AxisMap axis_map(std::int64_t in, std::int64_t out) {
  AxisMap m;
  m.lo.resize(static_cast<std::size_t>(out));
  m.hi.resize(static_cast<std::size_t>(out));
  m.frac.resize(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    const double max_src = static_cast<double>(in - 1);
    if (src > max_src) src = max_src;
    const auto lo = static_cast<std::int64_t>(std::floor(src));
    m.lo[static_cast<std::size_t>(o)] = lo;
    m.hi[static_cast<std::size_t>(o)] = std::min(lo + 1, in - 1);
    m.frac[static_cast<std::size_t>(o)] = src - static_cast<double>(lo);
  }
  return m;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const double* bp = b.value().data();
  double* op = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) op[i] += bp[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    accumulate_grad(*self.inputs[0], self.grad);
    accumulate_grad(*self.inputs[1], self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const double* bp = b.value().data();
  double* op = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) op[i] -= bp[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    accumulate_grad(*self.inputs[0], self.grad);
    if (self.inputs[1]->needs_grad) {
      Tensor neg = self.grad;
      double* p = neg.data();
      for (std::int64_t i = 0; i < neg.numel(); ++i) p[i] = -p[i];
      accumulate_grad(*self.inputs[1], neg);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const double* bp = b.value().data();
  double* op = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) op[i] *= bp[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = self.inputs[0]->value;
    const Tensor& bv = self.inputs[1]->value;
    const double* g = self.grad.data();
    if (self.inputs[0]->needs_grad) {
      Tensor da(av.shape());
      for (std::int64_t i = 0; i < da.numel(); ++i) da[i] = g[i] * bv[i];
      accumulate_grad(*self.inputs[0], da);
    }
    if (self.inputs[1]->needs_grad) {
      Tensor db(bv.shape());
      for (std::int64_t i = 0; i < db.numel(); ++i) db[i] = g[i] * av[i];
      accumulate_grad(*self.inputs[1], db);
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  double* op = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) op[i] *= s;
  return make_op(std::move(out), {a}, [s](Node& self) {
    Tensor da = self.grad;
    double* p = da.data();
    for (std::int64_t i = 0; i < da.numel(); ++i) p[i] *= s;
    accumulate_grad(*self.inputs[0], da);
  });
}

Var add_n(const std::vector<Var>& terms) {
  if (terms.empty()) throw ShapeError("add_n: no terms");
  Tensor out = terms[0].value();
  for (std::size_t k = 1; k < terms.size(); ++k) {
    check_same_shape(out, terms[k].value(), "add_n");
    const double* p = terms[k].value().data();
    double* op = out.data();
    for (std::int64_t i = 0; i < out.numel(); ++i) op[i] += p[i];
  }
  return make_op(std::move(out), terms, [](Node& self) {
    for (auto& in : self.inputs) accumulate_grad(*in, self.grad);
  });
}

Var relu(const Var& x) {
  Tensor out(x.value().shape());
  const double* xp = x.value().data();
  double* op = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) op[i] = xp[i] > 0.0 ? xp[i] : 0.0;
  return make_op(std::move(out), {x}, [](Node& self) {
    const Tensor& xv = self.inputs[0]->value;
    Tensor dx(xv.shape());
    const double* g = self.grad.data();
    for (std::int64_t i = 0; i < dx.numel(); ++i) dx[i] = xv[i] > 0.0 ? g[i] : 0.0;
    accumulate_grad(*self.inputs[0], dx);
  });
}

Var gelu(const Var& x) {
  static constexpr double inv_sqrt2 = 0.70710678118654752440;
  Tensor out(x.value().shape());
  const double* xp = x.value().data();
  double* op = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    op[i] = 0.5 * xp[i] * (1.0 + std::erf(xp[i] * inv_sqrt2));
  }
  return make_op(std::move(out), {x}, [](Node& self) {
    static constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    const Tensor& xv = self.inputs[0]->value;
    Tensor dx(xv.shape());
    const double* g = self.grad.data();
    for (std::int64_t i = 0; i < dx.numel(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      dx[i] = g[i] * (cdf + v * pdf);
    }
    accumulate_grad(*self.inputs[0], dx);
  });
}

Var sigmoid(const Var& x) {
  Tensor out(x.value().shape());
  const double* xp = x.value().data();
  double* op = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) op[i] = 1.0 / (1.0 + std::exp(-xp[i]));
  return make_op(std::move(out), {x}, [](Node& self) {
    const Tensor& s = self.value;
    Tensor dx(s.shape());
    const double* g = self.grad.data();
    for (std::int64_t i = 0; i < dx.numel(); ++i) dx[i] = g[i] * s[i] * (1.0 - s[i]);
    accumulate_grad(*self.inputs[0], dx);
  });
}

Var sum_all(const Var& x) {
  double acc = 0.0;
  const double* xp = x.value().data();
  for (std::int64_t i = 0; i < x.value().numel(); ++i) acc += xp[i];
  return make_op(Tensor::scalar(acc), {x}, [](Node& self) {
    const double g = self.grad[0];
    accumulate_grad(*self.inputs[0], Tensor::full(self.inputs[0]->value.shape(), g));
  });
}

Var mean_all(const Var& x) {
  const auto n = static_cast<double>(x.value().numel());
  double acc = 0.0;
  const double* xp = x.value().data();
  for (std::int64_t i = 0; i < x.value().numel(); ++i) acc += xp[i];
  return make_op(Tensor::scalar(acc / n), {x}, [n](Node& self) {
    const double g = self.grad[0] / n;
    accumulate_grad(*self.inputs[0], Tensor::full(self.inputs[0]->value.shape(), g));
  });
}

Var reshape(const Var& x, std::vector<std::int64_t> shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_op(std::move(out), {x}, [](Node& self) {
    accumulate_grad(*self.inputs[0], self.grad.reshaped(self.inputs[0]->value.shape()));
  });
}

Var transpose(const Var& x) {
  require_rank(x, 2, "transpose");
  const std::int64_t r = x.value().dim(0), c = x.value().dim(1);
  Tensor out({c, r});
  map2(out, c, r) = map2(x.value(), r, c).transpose();
  return make_op(std::move(out), {x}, [r, c](Node& self) {
    Tensor dx({r, c});
    map2(dx, r, c) = map2(self.grad, c, r).transpose();
    accumulate_grad(*self.inputs[0], dx);
  });
}

Var chw_to_tokens(const Var& x) {
  require_rank(x, 3, "chw_to_tokens");
  const std::int64_t c = x.value().dim(0);
  const std::int64_t p = x.value().dim(1) * x.value().dim(2);
  Tensor out({p, c});
  map2(out, p, c) = map2(x.value(), c, p).transpose();
  return make_op(std::move(out), {x}, [c, p](Node& self) {
    Tensor dx(self.inputs[0]->value.shape());
    map2(dx, c, p) = map2(self.grad, p, c).transpose();
    accumulate_grad(*self.inputs[0], dx);
  });
}

Var tokens_to_chw(const Var& x, std::int64_t c, std::int64_t h, std::int64_t w) {
  require_rank(x, 2, "tokens_to_chw");
  if (x.value().dim(0) != h * w || x.value().dim(1) != c) {
    throw ShapeError("tokens_to_chw: tokens " + x.value().shape_str() + " do not form a (" +
                     std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ") map");
  }
  Tensor out({c, h, w});
  map2(out, c, h * w) = map2(x.value(), h * w, c).transpose();
  return make_op(std::move(out), {x}, [c, h, w](Node& self) {
    Tensor dx({h * w, c});
    map2(dx, h * w, c) = map2(self.grad, c, h * w).transpose();
    accumulate_grad(*self.inputs[0], dx);
  });
}

Var concat_rank3_dim0(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rank3_dim0: no inputs");
  const std::int64_t h = parts[0].value().dim(1), w = parts[0].value().dim(2);
  std::int64_t total_c = 0;
  for (const Var& p : parts) {
    require_rank(p, 3, "concat_rank3_dim0");
    if (p.value().dim(1) != h || p.value().dim(2) != w) {
      throw ShapeError("concat_rank3_dim0: spatial mismatch " + p.value().shape_str());
    }
    total_c += p.value().dim(0);
  }
  Tensor out({total_c, h, w});
  std::int64_t off = 0;
  for (const Var& p : parts) {
    const std::int64_t n = p.value().numel();
    std::copy(p.value().data(), p.value().data() + n, out.data() + off);
    off += n;
  }
  return make_op(std::move(out), parts, [](Node& self) {
    std::int64_t off = 0;
    for (auto& in : self.inputs) {
      const std::int64_t n = in->value.numel();
      if (in->needs_grad) {
        Tensor dx(in->value.shape());
        std::copy(self.grad.data() + off, self.grad.data() + off + n, dx.data());
        accumulate_grad(*in, dx);
      }
      off += n;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::int64_t rows = parts[0].value().dim(0);
  std::int64_t total = 0;
  for (const Var& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.value().dim(0) != rows) {
      throw ShapeError("concat_cols: row mismatch " + p.value().shape_str());
    }
    total += p.value().dim(1);
  }
  Tensor out({rows, total});
  std::int64_t off = 0;
  for (const Var& p : parts) {
    const std::int64_t c = p.value().dim(1);
    for (std::int64_t r = 0; r < rows; ++r) {
      std::copy(p.value().data() + r * c, p.value().data() + (r + 1) * c,
                out.data() + r * total + off);
    }
    off += c;
  }
  return make_op(std::move(out), parts, [rows, total](Node& self) {
    std::int64_t off = 0;
    for (auto& in : self.inputs) {
      const std::int64_t c = in->value.dim(1);
      if (in->needs_grad) {
        Tensor dx(in->value.shape());
        for (std::int64_t r = 0; r < rows; ++r) {
          std::copy(self.grad.data() + r * total + off, self.grad.data() + r * total + off + c,
                    dx.data() + r * c);
        }
        accumulate_grad(*in, dx);
      }
      off += c;
    }
  });
}

Var slice_cols(const Var& x, std::int64_t c0, std::int64_t c1) {
  require_rank(x, 2, "slice_cols");
  const std::int64_t rows = x.value().dim(0), cols = x.value().dim(1);
  if (c0 < 0 || c1 > cols || c0 >= c1) {
    throw ShapeError("slice_cols: invalid range [" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") for " + x.value().shape_str());
  }
  const std::int64_t width = c1 - c0;
  Tensor out({rows, width});
  for (std::int64_t r = 0; r < rows; ++r) {
    std::copy(x.value().data() + r * cols + c0, x.value().data() + r * cols + c1,
              out.data() + r * width);
  }
  return make_op(std::move(out), {x}, [c0, width, cols, rows](Node& self) {
    Tensor dx(self.inputs[0]->value.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
      std::copy(self.grad.data() + r * width, self.grad.data() + (r + 1) * width,
                dx.data() + r * cols + c0);
    }
    accumulate_grad(*self.inputs[0], dx);
  });
}

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::int64_t m = a.value().dim(0), k = a.value().dim(1), n = b.value().dim(1);
  if (b.value().dim(0) != k) {
    throw ShapeError("matmul: inner dims " + a.value().shape_str() + " x " + b.value().shape_str());
  }
  Tensor out({m, n});
  map2(out, m, n).noalias() = map2(a.value(), m, k) * map2(b.value(), k, n);
  return make_op(std::move(out), {a, b}, [m, k, n](Node& self) {
    auto g = map2(self.grad, m, n);
    if (self.inputs[0]->needs_grad) {
      Tensor da({m, k});
      map2(da, m, k).noalias() = g * map2(self.inputs[1]->value, k, n).transpose();
      accumulate_grad(*self.inputs[0], da);
    }
    if (self.inputs[1]->needs_grad) {
      Tensor db({k, n});
      map2(db, k, n).noalias() = map2(self.inputs[0]->value, m, k).transpose() * g;
      accumulate_grad(*self.inputs[1], db);
    }
  });
}

Var linear_rows(const Var& x, const Var& w, const Var& b) {
  require_rank(x, 2, "linear_rows");
  require_rank(w, 2, "linear_rows");
  const std::int64_t t = x.value().dim(0), din = x.value().dim(1), dout = w.value().dim(0);
  if (w.value().dim(1) != din) {
    throw ShapeError("linear_rows: weight " + w.value().shape_str() + " does not accept input " +
                     x.value().shape_str());
  }
  const bool has_bias = b.defined();
  if (has_bias && (b.value().rank() != 1 || b.value().dim(0) != dout)) {
    throw ShapeError("linear_rows: bias " + b.value().shape_str() + " does not match out dim " +
                     std::to_string(dout));
  }
  Tensor out({t, dout});
  map2(out, t, dout).noalias() = map2(x.value(), t, din) * map2(w.value(), dout, din).transpose();
  if (has_bias) {
    double* op = out.data();
    const double* bp = b.value().data();
    for (std::int64_t r = 0; r < t; ++r)
      for (std::int64_t c = 0; c < dout; ++c) op[r * dout + c] += bp[c];
  }
  std::vector<Var> inputs = has_bias ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  return make_op(std::move(out), std::move(inputs), [t, din, dout, has_bias](Node& self) {
    auto g = map2(self.grad, t, dout);
    if (self.inputs[0]->needs_grad) {
      Tensor dx({t, din});
      map2(dx, t, din).noalias() = g * map2(self.inputs[1]->value, dout, din);
      accumulate_grad(*self.inputs[0], dx);
    }
    if (self.inputs[1]->needs_grad) {
      Tensor dw({dout, din});
      map2(dw, dout, din).noalias() = g.transpose() * map2(self.inputs[0]->value, t, din);
      accumulate_grad(*self.inputs[1], dw);
    }
    if (has_bias && self.inputs[2]->needs_grad) {
      Tensor db({dout});
      const double* gp = self.grad.data();
      for (std::int64_t r = 0; r < t; ++r)
        for (std::int64_t c = 0; c < dout; ++c) db[c] += gp[r * dout + c];
      accumulate_grad(*self.inputs[2], db);
    }
  });
}

Var linear_pointwise(const Var& x, const Var& w, const Var& b) {
  require_rank(x, 3, "linear_pointwise");
  require_rank(w, 2, "linear_pointwise");
  const std::int64_t cin = x.value().dim(0), h = x.value().dim(1), wd = x.value().dim(2);
  const std::int64_t p = h * wd;
  const std::int64_t cout = w.value().dim(0);
  if (w.value().dim(1) != cin) {
    throw ShapeError("linear_pointwise: weight " + w.value().shape_str() +
                     " does not accept input " + x.value().shape_str());
  }
  const bool has_bias = b.defined();
  if (has_bias && (b.value().rank() != 1 || b.value().dim(0) != cout)) {
    throw ShapeError("linear_pointwise: bias " + b.value().shape_str() +
                     " does not match out channels " + std::to_string(cout));
  }
  Tensor out({cout, h, wd});
  map2(out, cout, p).noalias() = map2(w.value(), cout, cin) * map2(x.value(), cin, p);
  if (has_bias) {
    double* op = out.data();
    const double* bp = b.value().data();
    for (std::int64_t c = 0; c < cout; ++c)
      for (std::int64_t i = 0; i < p; ++i) op[c * p + i] += bp[c];
  }
  std::vector<Var> inputs = has_bias ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  return make_op(std::move(out), std::move(inputs), [cin, cout, p, has_bias](Node& self) {
    auto g = map2(self.grad, cout, p);
    if (self.inputs[0]->needs_grad) {
      Tensor dx(self.inputs[0]->value.shape());
      map2(dx, cin, p).noalias() = map2(self.inputs[1]->value, cout, cin).transpose() * g;
      accumulate_grad(*self.inputs[0], dx);
    }
    if (self.inputs[1]->needs_grad) {
      Tensor dw({cout, cin});
      map2(dw, cout, cin).noalias() = g * map2(self.inputs[0]->value, cin, p).transpose();
      accumulate_grad(*self.inputs[1], dw);
    }
    if (has_bias && self.inputs[2]->needs_grad) {
      Tensor db({cout});
      const double* gp = self.grad.data();
      for (std::int64_t c = 0; c < cout; ++c)
        for (std::int64_t i = 0; i < p; ++i) db[c] += gp[c * p + i];
      accumulate_grad(*self.inputs[2], db);
    }
  });
}

Var scale_channels(const Var& x, const Var& alpha) {
  require_rank(x, 3, "scale_channels");
  require_rank(alpha, 1, "scale_channels");
  const std::int64_t c = x.value().dim(0), p = x.value().dim(1) * x.value().dim(2);
  if (alpha.value().dim(0) != c) {
    throw ShapeError("scale_channels: alpha " + alpha.value().shape_str() +
                     " does not match channels " + std::to_string(c));
  }
  Tensor out = x.value();
  double* op = out.data();
  const double* ap = alpha.value().data();
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t i = 0; i < p; ++i) op[ch * p + i] *= ap[ch];
  return make_op(std::move(out), {x, alpha}, [c, p](Node& self) {
    const double* g = self.grad.data();
    const Tensor& xv = self.inputs[0]->value;
    const Tensor& av = self.inputs[1]->value;
    if (self.inputs[0]->needs_grad) {
      Tensor dx(xv.shape());
      for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < p; ++i) dx[ch * p + i] = g[ch * p + i] * av[ch];
      accumulate_grad(*self.inputs[0], dx);
    }
    if (self.inputs[1]->needs_grad) {
      Tensor da({c});
      for (std::int64_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < p; ++i) acc += g[ch * p + i] * xv[ch * p + i];
        da[ch] = acc;
      }
      accumulate_grad(*self.inputs[1], da);
    }
  });
}

Var standardize_rows(const Var& x, double eps) {
  require_rank(x, 2, "standardize_rows");
  const std::int64_t rows = x.value().dim(0), d = x.value().dim(1);
  Tensor out({rows, d});
  std::vector<double> inv_sigma(static_cast<std::size_t>(rows));
  const double* xp = x.value().data();
  double* op = out.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = xp + r * d;
    double mean = 0.0;
    for (std::int64_t i = 0; i < d; ++i) mean += row[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::int64_t i = 0; i < d; ++i) {
      const double c = row[i] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_sigma[static_cast<std::size_t>(r)] = inv;
    for (std::int64_t i = 0; i < d; ++i) op[r * d + i] = (row[i] - mean) * inv;
  }
  return make_op(std::move(out), {x}, [rows, d, inv_sigma = std::move(inv_sigma)](Node& self) {
    Tensor dx({rows, d});
    const double* g = self.grad.data();
    const double* y = self.value.data();
    for (std::int64_t r = 0; r < rows; ++r) {
      double mean_g = 0.0, mean_gy = 0.0;
      for (std::int64_t i = 0; i < d; ++i) {
        mean_g += g[r * d + i];
        mean_gy += g[r * d + i] * y[r * d + i];
      }
      mean_g /= static_cast<double>(d);
      mean_gy /= static_cast<double>(d);
      const double inv = inv_sigma[static_cast<std::size_t>(r)];
      for (std::int64_t i = 0; i < d; ++i) {
        dx[r * d + i] = inv * (g[r * d + i] - mean_g - y[r * d + i] * mean_gy);
      }
    }
    accumulate_grad(*self.inputs[0], dx);
  });
}

Var affine_cols(const Var& x, const Var& gamma, const Var& beta) {
  require_rank(x, 2, "affine_cols");
  const std::int64_t rows = x.value().dim(0), d = x.value().dim(1);
  if (gamma.value().rank() != 1 || gamma.value().dim(0) != d || beta.value().rank() != 1 ||
      beta.value().dim(0) != d) {
    throw ShapeError("affine_cols: gamma/beta must be rank-1 of dim " + std::to_string(d));
  }
  Tensor out({rows, d});
  const double* xp = x.value().data();
  const double* gp = gamma.value().data();
  const double* bp = beta.value().data();
  double* op = out.data();
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t i = 0; i < d; ++i) op[r * d + i] = xp[r * d + i] * gp[i] + bp[i];
  return make_op(std::move(out), {x, gamma, beta}, [rows, d](Node& self) {
    const double* g = self.grad.data();
    const Tensor& xv = self.inputs[0]->value;
    const Tensor& gv = self.inputs[1]->value;
    if (self.inputs[0]->needs_grad) {
      Tensor dx({rows, d});
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t i = 0; i < d; ++i) dx[r * d + i] = g[r * d + i] * gv[i];
      accumulate_grad(*self.inputs[0], dx);
    }
    if (self.inputs[1]->needs_grad) {
      Tensor dg({d});
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t i = 0; i < d; ++i) dg[i] += g[r * d + i] * xv[r * d + i];
      accumulate_grad(*self.inputs[1], dg);
    }
    if (self.inputs[2]->needs_grad) {
      Tensor db({d});
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t i = 0; i < d; ++i) db[i] += g[r * d + i];
      accumulate_grad(*self.inputs[2], db);
    }
  });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  return affine_cols(standardize_rows(x, eps), gamma, beta);
}

Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require_rank(x, 3, "layer_norm_channels");
  const std::int64_t c = x.value().dim(0), h = x.value().dim(1), w = x.value().dim(2);
  return tokens_to_chw(layer_norm_rows(chw_to_tokens(x), gamma, beta, eps), c, h, w);
}

Var standardize_channels(const Var& x, double eps) {
  require_rank(x, 3, "standardize_channels");
  const auto shape = x.value().shape();
  const std::int64_t c = shape[0], p = shape[1] * shape[2];
  return reshape(standardize_rows(reshape(x, {c, p}), eps), {c, shape[1], shape[2]});
}

Var softmax_rows(const Var& x) {
  require_rank(x, 2, "softmax_rows");
  const std::int64_t rows = x.value().dim(0), d = x.value().dim(1);
  Tensor out({rows, d});
  const double* xp = x.value().data();
  double* op = out.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    double mx = xp[r * d];
    for (std::int64_t i = 1; i < d; ++i) mx = std::max(mx, xp[r * d + i]);
    double denom = 0.0;
    for (std::int64_t i = 0; i < d; ++i) {
      const double e = std::exp(xp[r * d + i] - mx);
      op[r * d + i] = e;
      denom += e;
    }
    for (std::int64_t i = 0; i < d; ++i) op[r * d + i] /= denom;
  }
  return make_op(std::move(out), {x}, [rows, d](Node& self) {
    Tensor dx({rows, d});
    const double* g = self.grad.data();
    const double* s = self.value.data();
    for (std::int64_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::int64_t i = 0; i < d; ++i) dot += g[r * d + i] * s[r * d + i];
      for (std::int64_t i = 0; i < d; ++i) dx[r * d + i] = s[r * d + i] * (g[r * d + i] - dot);
    }
    accumulate_grad(*self.inputs[0], dx);
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int padding) {
  require_rank(x, 3, "conv2d");
  require_rank(w, 4, "conv2d");
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: invalid stride/padding");
  const std::int64_t cin = x.value().dim(0), h = x.value().dim(1), wd = x.value().dim(2);
  const std::int64_t cout = w.value().dim(0), kh = w.value().dim(2), kw = w.value().dim(3);
  if (w.value().dim(1) != cin) {
    throw ShapeError("conv2d: weight " + w.value().shape_str() + " does not accept input " +
                     x.value().shape_str());
  }
  const std::int64_t oh = (h + 2 * padding - kh) / stride + 1;
  const std::int64_t ow = (wd + 2 * padding - kw) / stride + 1;
  if (oh < 1 || ow < 1) {
    throw ShapeError("conv2d: kernel " + w.value().shape_str() + " too large for input " +
                     x.value().shape_str());
  }
  const bool has_bias = b.defined();
  if (has_bias && (b.value().rank() != 1 || b.value().dim(0) != cout)) {
    throw ShapeError("conv2d: bias does not match out channels");
  }

  Tensor out({cout, oh, ow});
  const double* xp = x.value().data();
  const double* wp = w.value().data();
  for (std::int64_t co = 0; co < cout; ++co) {
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        double acc = has_bias ? b.value()[co] : 0.0;
        const std::int64_t iy0 = oy * stride - padding;
        const std::int64_t ix0 = ox * stride - padding;
        for (std::int64_t ci = 0; ci < cin; ++ci) {
          for (std::int64_t ky = 0; ky < kh; ++ky) {
            const std::int64_t iy = iy0 + ky;
            if (iy < 0 || iy >= h) continue;
            for (std::int64_t kx = 0; kx < kw; ++kx) {
              const std::int64_t ix = ix0 + kx;
              if (ix < 0 || ix >= wd) continue;
              acc += xp[(ci * h + iy) * wd + ix] * wp[((co * cin + ci) * kh + ky) * kw + kx];
            }
          }
        }
        out[(co * oh + oy) * ow + ox] = acc;
      }
    }
  }

  std::vector<Var> inputs = has_bias ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  return make_op(std::move(out), std::move(inputs),
                 [cin, h, wd, cout, kh, kw, oh, ow, stride, padding, has_bias](Node& self) {
    const double* g = self.grad.data();
    const double* xp = self.inputs[0]->value.data();
    const double* wp = self.inputs[1]->value.data();
    const bool need_x = self.inputs[0]->needs_grad;
    const bool need_w = self.inputs[1]->needs_grad;
    Tensor dx = need_x ? Tensor(self.inputs[0]->value.shape()) : Tensor();
    Tensor dw = need_w ? Tensor(self.inputs[1]->value.shape()) : Tensor();
    for (std::int64_t co = 0; co < cout; ++co) {
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          const double go = g[(co * oh + oy) * ow + ox];
          if (go == 0.0) continue;
          const std::int64_t iy0 = oy * stride - padding;
          const std::int64_t ix0 = ox * stride - padding;
          for (std::int64_t ci = 0; ci < cin; ++ci) {
            for (std::int64_t ky = 0; ky < kh; ++ky) {
              const std::int64_t iy = iy0 + ky;
              if (iy < 0 || iy >= h) continue;
              for (std::int64_t kx = 0; kx < kw; ++kx) {
                const std::int64_t ix = ix0 + kx;
                if (ix < 0 || ix >= wd) continue;
                const std::int64_t xi = (ci * h + iy) * wd + ix;
                const std::int64_t wi = ((co * cin + ci) * kh + ky) * kw + kx;
                if (need_x) dx[xi] += go * wp[wi];
                if (need_w) dw[wi] += go * xp[xi];
              }
            }
          }
        }
      }
    }
    if (need_x) accumulate_grad(*self.inputs[0], dx);
    if (need_w) accumulate_grad(*self.inputs[1], dw);
    if (has_bias && self.inputs[2]->needs_grad) {
      Tensor db({cout});
      for (std::int64_t co = 0; co < cout; ++co) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < oh * ow; ++i) acc += g[co * oh * ow + i];
        db[co] = acc;
      }
      accumulate_grad(*self.inputs[2], db);
    }
  });
}

Var bilinear_resize(const Var& x, std::int64_t out_h, std::int64_t out_w) {
  require_rank(x, 3, "bilinear_resize");
  if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: non-positive output size");
  const std::int64_t c = x.value().dim(0), h = x.value().dim(1), w = x.value().dim(2);
  Tensor out = bilinear_resize_value(x.value(), out_h, out_w);
  return make_op(std::move(out), {x}, [c, h, w, out_h, out_w](Node& self) {
    const AxisMap ym = axis_map(h, out_h);
    const AxisMap xm = axis_map(w, out_w);
    Tensor dx(self.inputs[0]->value.shape());
    const double* g = self.grad.data();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const std::int64_t in_base = ch * h * w;
      const std::int64_t out_base = ch * out_h * out_w;
      for (std::int64_t oy = 0; oy < out_h; ++oy) {
        const double fy = ym.frac[static_cast<std::size_t>(oy)];
        const std::int64_t y0 = ym.lo[static_cast<std::size_t>(oy)];
        const std::int64_t y1 = ym.hi[static_cast<std::size_t>(oy)];
        for (std::int64_t ox = 0; ox < out_w; ++ox) {
          const double fx = xm.frac[static_cast<std::size_t>(ox)];
          const std::int64_t x0 = xm.lo[static_cast<std::size_t>(ox)];
          const std::int64_t x1 = xm.hi[static_cast<std::size_t>(ox)];
          const double go = g[out_base + oy * out_w + ox];
          dx[in_base + y0 * w + x0] += go * (1.0 - fy) * (1.0 - fx);
          dx[in_base + y0 * w + x1] += go * (1.0 - fy) * fx;
          dx[in_base + y1 * w + x0] += go * fy * (1.0 - fx);
          dx[in_base + y1 * w + x1] += go * fy * fx;
        }
      }
    }
    accumulate_grad(*self.inputs[0], dx);
  });
}

Tensor bilinear_resize_value(const Tensor& x, std::int64_t out_h, std::int64_t out_w) {
  if (x.rank() != 3) {
    throw ShapeError("bilinear_resize: expected rank 3 tensor, got " + x.shape_str());
  }
  const std::int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const AxisMap ym = axis_map(h, out_h);
  const AxisMap xm = axis_map(w, out_w);
  Tensor out({c, out_h, out_w});
  const double* xp = x.data();
  double* op = out.data();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const std::int64_t in_base = ch * h * w;
    const std::int64_t out_base = ch * out_h * out_w;
    for (std::int64_t oy = 0; oy < out_h; ++oy) {
      const double fy = ym.frac[static_cast<std::size_t>(oy)];
      const std::int64_t y0 = ym.lo[static_cast<std::size_t>(oy)];
      const std::int64_t y1 = ym.hi[static_cast<std::size_t>(oy)];
      for (std::int64_t ox = 0; ox < out_w; ++ox) {
        const double fx = xm.frac[static_cast<std::size_t>(ox)];
        const std::int64_t x0 = xm.lo[static_cast<std::size_t>(ox)];
        const std::int64_t x1 = xm.hi[static_cast<std::size_t>(ox)];
        const double top = xp[in_base + y0 * w + x0] * (1.0 - fx) + xp[in_base + y0 * w + x1] * fx;
        const double bot = xp[in_base + y1 * w + x0] * (1.0 - fx) + xp[in_base + y1 * w + x1] * fx;
        op[out_base + oy * out_w + ox] = top * (1.0 - fy) + bot * fy;
      }
    }
  }
  return out;
}

}  // namespace expert::ops
