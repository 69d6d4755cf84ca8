#include "expert/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "expert/errors.hpp"

namespace expert::metrics {

namespace {

// Suffix-summed histograms of floor(pred*255) over foreground and
// background pixels; bin b counts pixels binarized positive at threshold b.
struct ThresholdCounts {
  std::array<std::int64_t, kNumThresholds> tp{};  // foreground pixels predicted positive
  std::array<std::int64_t, kNumThresholds> pp{};  // all pixels predicted positive
  std::int64_t n_fg = 0;
  std::int64_t n_total = 0;
};

int bin_of(double pred) {
  const int b = static_cast<int>(std::floor(pred * 255.0));
  return std::clamp(b, 0, 255);
}

ThresholdCounts threshold_counts(const EvalPair& pair) {
  ThresholdCounts c;
  std::array<std::int64_t, kNumThresholds> fg_hist{};
  std::array<std::int64_t, kNumThresholds> all_hist{};
  const std::int64_t n = pair.pred.numel();
  c.n_total = n;
  for (std::int64_t i = 0; i < n; ++i) {
    const int b = bin_of(pair.pred[i]);
    ++all_hist[static_cast<std::size_t>(b)];
    if (pair.gt[i] == 1.0) {
      ++fg_hist[static_cast<std::size_t>(b)];
      ++c.n_fg;
    }
  }
  std::int64_t tp_acc = 0, pp_acc = 0;
  for (int t = 255; t >= 0; --t) {
    tp_acc += fg_hist[static_cast<std::size_t>(t)];
    pp_acc += all_hist[static_cast<std::size_t>(t)];
    c.tp[static_cast<std::size_t>(t)] = tp_acc;
    c.pp[static_cast<std::size_t>(t)] = pp_acc;
  }
  return c;
}

double enhanced_term(double d_gt, double d_fm) {
  const double den = d_gt * d_gt + d_fm * d_fm;
  const double align = den == 0.0 ? 0.0 : 2.0 * d_gt * d_fm / den;
  const double plus1 = align + 1.0;
  return plus1 * plus1 / 4.0;
}

// Object-level similarity of a region's values x against a full-on target:
// 2*mean / (mean^2 + 1 + std), sample std over the region.
double object_score(const std::vector<double>& values) {
  const auto n = static_cast<double>(values.size());
  if (values.empty()) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  if (values.size() > 1) {
    for (double v : values) var += (v - mean) * (v - mean);
    var /= (n - 1.0);
  }
  return 2.0 * mean / (mean * mean + 1.0 + std::sqrt(var));
}

struct RegionStats {
  double mean_p = 0.0, mean_g = 0.0, var_p = 0.0, var_g = 0.0, cov = 0.0;
  std::int64_t n = 0;
};

RegionStats region_stats(const EvalPair& pair, std::int64_t y0, std::int64_t y1, std::int64_t x0,
                         std::int64_t x1) {
  RegionStats st;
  const std::int64_t w = pair.pred.dim(1);
  st.n = (y1 - y0) * (x1 - x0);
  if (st.n == 0) return st;
  for (std::int64_t y = y0; y < y1; ++y) {
    for (std::int64_t x = x0; x < x1; ++x) {
      st.mean_p += pair.pred[y * w + x];
      st.mean_g += pair.gt[y * w + x];
    }
  }
  const auto n = static_cast<double>(st.n);
  st.mean_p /= n;
  st.mean_g /= n;
  if (st.n > 1) {
    for (std::int64_t y = y0; y < y1; ++y) {
      for (std::int64_t x = x0; x < x1; ++x) {
        const double dp = pair.pred[y * w + x] - st.mean_p;
        const double dg = pair.gt[y * w + x] - st.mean_g;
        st.var_p += dp * dp;
        st.var_g += dg * dg;
        st.cov += dp * dg;
      }
    }
    st.var_p /= (n - 1.0);
    st.var_g /= (n - 1.0);
    st.cov /= (n - 1.0);
  }
  return st;
}

double ssim_score(const RegionStats& st) {
  const double alpha = 4.0 * st.mean_p * st.mean_g * st.cov;
  const double beta =
      (st.mean_p * st.mean_p + st.mean_g * st.mean_g) * (st.var_p + st.var_g);
  if (alpha != 0.0) return alpha / beta;  // beta > 0 whenever alpha != 0
  return beta == 0.0 ? 1.0 : 0.0;
}

}  // namespace

void validate(const EvalPair& pair) {
  if (pair.pred.rank() != 2 || pair.gt.rank() != 2) {
    throw InputError("evaluation pair must hold rank-2 masks, got pred " + pair.pred.shape_str() +
                     " gt " + pair.gt.shape_str());
  }
  if (!pair.pred.same_shape(pair.gt)) {
    throw InputError("evaluation pair shape mismatch: pred " + pair.pred.shape_str() + " vs gt " +
                     pair.gt.shape_str());
  }
  for (std::int64_t i = 0; i < pair.pred.numel(); ++i) {
    const double p = pair.pred[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw InputError("prediction value " + std::to_string(p) + " outside [0,1]");
    }
    const double g = pair.gt[i];
    if (g != 0.0 && g != 1.0) {
      throw InputError("ground truth value " + std::to_string(g) + " is not binary");
    }
  }
}

bool has_foreground(const Tensor& gt) {
  for (std::int64_t i = 0; i < gt.numel(); ++i) {
    if (gt[i] == 1.0) return true;
  }
  return false;
}

double mae(const EvalPair& pair) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < pair.pred.numel(); ++i) {
    acc += std::fabs(pair.pred[i] - pair.gt[i]);
  }
  return acc / static_cast<double>(pair.pred.numel());
}

PrCurve pr_at_thresholds(const EvalPair& pair) {
  const ThresholdCounts c = threshold_counts(pair);
  if (c.n_fg == 0) {
    throw InputError("pr_at_thresholds: ground truth has no foreground pixels");
  }
  PrCurve curve;
  for (int t = 0; t < kNumThresholds; ++t) {
    const auto tp = static_cast<double>(c.tp[static_cast<std::size_t>(t)]);
    const auto pp = static_cast<double>(c.pp[static_cast<std::size_t>(t)]);
    curve.precision[static_cast<std::size_t>(t)] = pp == 0.0 ? 0.0 : tp / pp;
    curve.recall[static_cast<std::size_t>(t)] = tp / static_cast<double>(c.n_fg);
  }
  return curve;
}

std::array<double, kNumThresholds> f_beta(const std::array<double, kNumThresholds>& precision,
                                          const std::array<double, kNumThresholds>& recall,
                                          double beta_squared) {
  std::array<double, kNumThresholds> f{};
  for (int t = 0; t < kNumThresholds; ++t) {
    const double p = precision[static_cast<std::size_t>(t)];
    const double r = recall[static_cast<std::size_t>(t)];
    const double den = beta_squared * p + r;
    f[static_cast<std::size_t>(t)] = den == 0.0 ? 0.0 : (1.0 + beta_squared) * p * r / den;
  }
  return f;
}

std::array<double, kNumThresholds> e_measure_curve(const EvalPair& pair) {
  const ThresholdCounts c = threshold_counts(pair);
  const auto n = static_cast<double>(c.n_total);
  std::array<double, kNumThresholds> e{};
  if (c.n_fg == 0) {
    // All-background ground truth: score the complement of the prediction.
    for (int t = 0; t < kNumThresholds; ++t) {
      e[static_cast<std::size_t>(t)] =
          (n - static_cast<double>(c.pp[static_cast<std::size_t>(t)])) / n;
    }
    return e;
  }
  if (c.n_fg == c.n_total) {
    for (int t = 0; t < kNumThresholds; ++t) {
      e[static_cast<std::size_t>(t)] = static_cast<double>(c.pp[static_cast<std::size_t>(t)]) / n;
    }
    return e;
  }
  const double mu_g = static_cast<double>(c.n_fg) / n;
  const double d_gt_fg = 1.0 - mu_g;
  const double d_gt_bg = -mu_g;
  for (int t = 0; t < kNumThresholds; ++t) {
    const auto tp = static_cast<double>(c.tp[static_cast<std::size_t>(t)]);
    const auto pp = static_cast<double>(c.pp[static_cast<std::size_t>(t)]);
    const double fp = pp - tp;
    const double fn = static_cast<double>(c.n_fg) - tp;
    const double tn = n - static_cast<double>(c.n_fg) - fp;
    const double mu_f = pp / n;
    const double d_fm_on = 1.0 - mu_f;
    const double d_fm_off = -mu_f;
    const double sum = tp * enhanced_term(d_gt_fg, d_fm_on) +  //
                       fn * enhanced_term(d_gt_fg, d_fm_off) +
                       fp * enhanced_term(d_gt_bg, d_fm_on) +
                       tn * enhanced_term(d_gt_bg, d_fm_off);
    e[static_cast<std::size_t>(t)] = sum / n;
  }
  return e;
}

double e_measure(const EvalPair& pair, int threshold) {
  if (threshold < 0 || threshold >= kNumThresholds) {
    throw InputError("e_measure: threshold " + std::to_string(threshold) + " out of range");
  }
  return e_measure_curve(pair)[static_cast<std::size_t>(threshold)];
}

double s_measure(const EvalPair& pair) {
  const std::int64_t h = pair.pred.dim(0), w = pair.pred.dim(1);
  const std::int64_t n = h * w;
  std::int64_t n_fg = 0;
  double pred_sum = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (pair.gt[i] == 1.0) ++n_fg;
    pred_sum += pair.pred[i];
  }
  const double pred_mean = pred_sum / static_cast<double>(n);
  if (n_fg == 0) return 1.0 - pred_mean;
  if (n_fg == n) return pred_mean;

  // Object similarity: foreground scored on pred, background on 1 - pred.
  const double mu = static_cast<double>(n_fg) / static_cast<double>(n);
  std::vector<double> fg_vals, bg_vals;
  fg_vals.reserve(static_cast<std::size_t>(n_fg));
  bg_vals.reserve(static_cast<std::size_t>(n - n_fg));
  for (std::int64_t i = 0; i < n; ++i) {
    if (pair.gt[i] == 1.0) {
      fg_vals.push_back(pair.pred[i]);
    } else {
      bg_vals.push_back(1.0 - pair.pred[i]);
    }
  }
  const double s_object = mu * object_score(fg_vals) + (1.0 - mu) * object_score(bg_vals);

  // Region similarity: split at the (1-based, rounded) foreground centroid.
  double row_sum = 0.0, col_sum = 0.0;
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      if (pair.gt[y * w + x] == 1.0) {
        row_sum += static_cast<double>(y + 1);
        col_sum += static_cast<double>(x + 1);
      }
    }
  }
  const auto cy = static_cast<std::int64_t>(std::llround(row_sum / static_cast<double>(n_fg)));
  const auto cx = static_cast<std::int64_t>(std::llround(col_sum / static_cast<double>(n_fg)));

  const double total = static_cast<double>(n);
  double s_region = 0.0;
  const std::int64_t ys[3] = {0, cy, h};
  const std::int64_t xs[3] = {0, cx, w};
  for (int qy = 0; qy < 2; ++qy) {
    for (int qx = 0; qx < 2; ++qx) {
      const std::int64_t y0 = ys[qy], y1 = ys[qy + 1];
      const std::int64_t x0 = xs[qx], x1 = xs[qx + 1];
      const RegionStats st = region_stats(pair, y0, y1, x0, x1);
      if (st.n == 0) continue;
      const double weight = static_cast<double>(st.n) / total;
      s_region += weight * ssim_score(st);
    }
  }

  const double s = 0.5 * s_object + 0.5 * s_region;
  return std::clamp(s, 0.0, 1.0);
}

ImageEval evaluate_pair(const EvalPair& pair) {
  validate(pair);
  ImageEval ev;
  ev.mae = mae(pair);
  ev.has_foreground = has_foreground(pair.gt);
  if (ev.has_foreground) ev.pr = pr_at_thresholds(pair);
  ev.e = e_measure_curve(pair);
  ev.s = s_measure(pair);
  return ev;
}

MetricsReport aggregate(const std::vector<ImageEval>& evals) {
  if (evals.empty()) {
    throw InputError("aggregate: no evaluations");
  }
  MetricsReport report;
  report.n_images = static_cast<int>(evals.size());
  std::array<double, kNumThresholds> e_sum{};
  int n_fg_images = 0;
  for (const ImageEval& ev : evals) {
    report.mae += ev.mae;
    report.s += ev.s;
    for (int t = 0; t < kNumThresholds; ++t) {
      e_sum[static_cast<std::size_t>(t)] += ev.e[static_cast<std::size_t>(t)];
    }
    if (!ev.has_foreground) {
      ++report.n_empty_gt;
      continue;
    }
    ++n_fg_images;
    for (int t = 0; t < kNumThresholds; ++t) {
      report.precision[static_cast<std::size_t>(t)] += ev.pr.precision[static_cast<std::size_t>(t)];
      report.recall[static_cast<std::size_t>(t)] += ev.pr.recall[static_cast<std::size_t>(t)];
    }
  }
  const auto n = static_cast<double>(evals.size());
  report.mae /= n;
  report.s /= n;
  for (int t = 0; t < kNumThresholds; ++t) {
    const double e = e_sum[static_cast<std::size_t>(t)] / n;
    report.max_e = std::max(report.max_e, e);
    if (n_fg_images > 0) {
      report.precision[static_cast<std::size_t>(t)] /= static_cast<double>(n_fg_images);
      report.recall[static_cast<std::size_t>(t)] /= static_cast<double>(n_fg_images);
    }
  }
  report.f = f_beta(report.precision, report.recall);
  for (double f : report.f) report.max_f = std::max(report.max_f, f);
  return report;
}

}  // namespace expert::metrics
