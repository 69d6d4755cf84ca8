#pragma once

#include <array>
#include <vector>

#include "expert/tensor.hpp"

namespace expert::metrics {

inline constexpr int kNumThresholds = 256;
inline constexpr double kFBetaSquared = 0.3;

// One evaluation pair: continuous prediction in [0,1] and a binary ground
// truth, both rank-2 of equal shape.
struct EvalPair {
  Tensor pred;
  Tensor gt;
};

// Throws InputError on rank/shape mismatch, prediction values outside
// [0,1], or non-binary ground truth.
void validate(const EvalPair& pair);

bool has_foreground(const Tensor& gt);

// Mean absolute error.
double mae(const EvalPair& pair);

// Precision/recall at the 256 binarization thresholds t = 0..255
// (pixel counts, binarized as pred*255 >= t). Requires at least one
// foreground ground-truth pixel. Precision at zero detections is 0.
struct PrCurve {
  std::array<double, kNumThresholds> precision{};
  std::array<double, kNumThresholds> recall{};
};
PrCurve pr_at_thresholds(const EvalPair& pair);

// F_beta = (1+b2)*P*R / (b2*P + R), defined as 0 where the denominator is 0.
std::array<double, kNumThresholds> f_beta(const std::array<double, kNumThresholds>& precision,
                                          const std::array<double, kNumThresholds>& recall,
                                          double beta_squared = kFBetaSquared);

// Enhanced-alignment measure at every threshold. Degenerate ground truths
// use the pinned conventions: all-background -> mean(1 - FM),
// all-foreground -> mean(FM).
std::array<double, kNumThresholds> e_measure_curve(const EvalPair& pair);
double e_measure(const EvalPair& pair, int threshold);

// Structure measure: 0.5 * object + 0.5 * region similarity on the
// continuous prediction; degenerate ground truths fall back to
// 1 - mean(pred) / mean(pred). Result is clamped to [0, 1].
double s_measure(const EvalPair& pair);

// All per-image quantities the aggregator needs.
struct ImageEval {
  double mae = 0.0;
  bool has_foreground = false;
  PrCurve pr;  // meaningful only when has_foreground
  std::array<double, kNumThresholds> e{};
  double s = 0.0;
};
ImageEval evaluate_pair(const EvalPair& pair);

struct MetricsReport {
  double mae = 0.0;
  std::array<double, kNumThresholds> precision{};
  std::array<double, kNumThresholds> recall{};
  std::array<double, kNumThresholds> f{};
  double max_f = 0.0;
  double max_e = 0.0;
  double s = 0.0;
  int n_images = 0;
  // Images without foreground ground truth; excluded from the P/R/F
  // averages but still counted in MAE, E, and S.
  int n_empty_gt = 0;
};

// MAE/S/E average over all images (E per threshold, then maxed); P and R
// average per threshold over foreground images, with F computed from the
// averaged curves.
MetricsReport aggregate(const std::vector<ImageEval>& evals);

}  // namespace expert::metrics
