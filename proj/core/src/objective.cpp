#include "expert/objective.hpp"

#include <cmath>

#include "expert/errors.hpp"
#include "expert/ops.hpp"

namespace expert::objective {

namespace {
constexpr double kEps = 1e-7;
}

Var bce_loss(const Var& pred, const Var& gt) {
  check_same_shape(pred.value(), gt.value(), "bce_loss");
  const std::int64_t n = pred.value().numel();
  const double* p = pred.value().data();
  const double* g = gt.value().data();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double m = std::min(1.0 - kEps, std::max(kEps, p[i]));
    acc += -(g[i] * std::log(m) + (1.0 - g[i]) * std::log(1.0 - m));
  }
  return make_op(Tensor::scalar(acc / static_cast<double>(n)), {pred, gt}, [n](Node& self) {
    if (!self.inputs[0]->needs_grad) return;
    const double* p = self.inputs[0]->value.data();
    const double* g = self.inputs[1]->value.data();
    const double go = self.grad[0] / static_cast<double>(n);
    Tensor dp(self.inputs[0]->value.shape());
    for (std::int64_t i = 0; i < n; ++i) {
      // Clamp acts as a pass-through with zero slope outside [eps, 1-eps].
      if (p[i] < kEps || p[i] > 1.0 - kEps) {
        dp[i] = 0.0;
        continue;
      }
      dp[i] = go * (-g[i] / p[i] + (1.0 - g[i]) / (1.0 - p[i]));
    }
    accumulate_grad(*self.inputs[0], dp);
  });
}

Var iou_loss(const Var& pred, const Var& gt) {
  check_same_shape(pred.value(), gt.value(), "iou_loss");
  const std::int64_t n = pred.value().numel();
  const double* p = pred.value().data();
  const double* g = gt.value().data();
  double inter = 0.0, uni = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    inter += p[i] * g[i];
    uni += p[i] + g[i] - p[i] * g[i];
  }
  const double num = inter + kEps;
  const double den = uni + kEps;
  return make_op(Tensor::scalar(1.0 - num / den), {pred, gt}, [n, num, den](Node& self) {
    if (!self.inputs[0]->needs_grad) return;
    const double* g = self.inputs[1]->value.data();
    const double go = self.grad[0];
    Tensor dp(self.inputs[0]->value.shape());
    const double den2 = den * den;
    for (std::int64_t i = 0; i < n; ++i) {
      // d/dp_i of -(I+eps)/(U+eps): dI = g_i, dU = 1 - g_i.
      dp[i] = go * (-(g[i] * den - num * (1.0 - g[i])) / den2);
    }
    accumulate_grad(*self.inputs[0], dp);
  });
}

Var total_loss(const Var& pred, const Var& gt, const LossWeights& weights,
               LossBreakdown* breakdown) {
  const Var bce = bce_loss(pred, gt);
  const Var iou = iou_loss(pred, gt);
  const Var total = ops::add(ops::scale(bce, weights.bce), ops::scale(iou, weights.iou));
  if (breakdown) {
    breakdown->bce = bce.value()[0];
    breakdown->iou = iou.value()[0];
    breakdown->total = total.value()[0];
  }
  return total;
}

}  // namespace expert::objective
