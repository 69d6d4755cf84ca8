#pragma once

#include "expert/autograd.hpp"
#include "expert/config.hpp"

namespace expert::objective {

// Scalar losses over a predicted mask (values in [0,1]) and a binary
// ground-truth mask of the same shape.

// Mean binary cross-entropy; probabilities are clamped to
// [eps, 1 - eps] with eps = 1e-7 before the logs.
Var bce_loss(const Var& pred, const Var& gt);

// Soft IoU loss: 1 - (sum(p*g) + eps) / (sum(p + g - p*g) + eps).
Var iou_loss(const Var& pred, const Var& gt);

struct LossBreakdown {
  double bce = 0.0;
  double iou = 0.0;
  double total = 0.0;
};

// weights.bce * bce + weights.iou * iou. When breakdown is non-null it
// receives the three scalar values of this evaluation.
Var total_loss(const Var& pred, const Var& gt, const LossWeights& weights,
               LossBreakdown* breakdown = nullptr);

}  // namespace expert::objective
