// End-to-end acceptance checks. Each criterion prints exactly one
// [PASS]/[FAIL] line; the exit code is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "expert/autograd.hpp"
#include "expert/config.hpp"
#include "expert/errors.hpp"
#include "expert/harness/checkpoint.hpp"
#include "expert/harness/dataset.hpp"
#include "expert/harness/synthetic.hpp"
#include "expert/harness/trainer.hpp"
#include "expert/metrics.hpp"
#include "expert/model.hpp"
#include "expert/objective.hpp"
#include "expert/ops.hpp"
#include "expert/params.hpp"
#include "expert/peft.hpp"
#include "expert/prompts.hpp"
#include "expert/rng.hpp"
#include "expert/tensor.hpp"
#include "support/naive_metrics.hpp"

namespace fs = std::filesystem;
using namespace expert;
using harness::BundleBuilder;
using harness::Checkpoint;
using harness::DatasetIndex;
using harness::Sample;
using harness::Trainer;

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

std::string num(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

int run_criterion(const std::string& tag, const std::function<std::string()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool ok = true;
  try {
    detail = body();
  } catch (const std::exception& e) {
    ok = false;
    detail = e.what();
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << (ok ? "[PASS] " : "[FAIL] ") << tag << ": " << detail << " (" << num(secs, 3)
            << " s)" << std::endl;
  return ok ? 0 : 1;
}

// Desk-scale run over a given corpus, small batches to keep steps cheap.
RunConfig desk_config(const fs::path& data) {
  RunConfig cfg = RunConfig::desk_default();
  cfg.train.data_root = data.string();
  cfg.train.batch_size = 2;
  cfg.validate();
  return cfg;
}

// Minimal full model (16x16 input, every module active) used where the
// criterion needs a toy-sized trainable set.
RunConfig small_config(const fs::path& data, std::uint64_t seed) {
  RunConfig cfg;
  cfg.seed = seed;
  cfg.backbone.input_resolution = 16;
  cfg.backbone.seed = seed + 1;
  cfg.backbone.stages = {{1, 4, 1, 2}, {1, 4, 1, 4}, {1, 6, 2, 8}, {1, 8, 2, 16}};
  cfg.decoder.common_dim = 4;
  cfg.decoder.fuse_dim = 4;
  PromptSourceConfig tok;
  tok.name = "tok";
  tok.dim = 3;
  tok.layout = PromptSourceConfig::Layout::tokens;
  tok.tokens = 4;
  tok.synthetic_mode = PromptSourceConfig::SyntheticMode::pooled;
  tok.cross_attention = true;
  PromptSourceConfig grd;
  grd.name = "grd";
  grd.dim = 2;
  grd.layout = PromptSourceConfig::Layout::grid;
  grd.grid = 2;
  grd.synthetic_mode = PromptSourceConfig::SyntheticMode::noise;
  cfg.prompts.sources = {tok, grd};
  cfg.prompts.text.dim = 2;
  cfg.prompts.text.tokens = 4;
  cfg.prompts.cross_attention = {1, 1, 4};
  cfg.train.resolution = 16;
  cfg.train.batch_size = 2;
  cfg.train.data_root = data.string();
  cfg.optimizer.learning_rate = 1e-2;
  cfg.validate();
  return cfg;
}

std::int64_t zero_params_containing(Model& model, const std::string& needle) {
  std::int64_t zeroed = 0;
  for (const auto& p : model.params().all()) {
    if (p.name.find(needle) == std::string::npos) continue;
    Var var = p.var;
    var.mutable_value() = Tensor::zeros(var.value().shape());
    ++zeroed;
  }
  return zeroed;
}

bool values_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    if (a.data()[i] != b.data()[i]) return false;
  }
  return true;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.numel()) * sizeof(double)) == 0;
}

metrics::MetricsReport evaluate_model(const Model& model, const RunConfig& cfg,
                                      const DatasetIndex& index) {
  NoGradGuard guard;
  const BundleBuilder builder(cfg);
  std::vector<metrics::ImageEval> evals;
  for (const auto& entry : index.entries) {
    const Sample sample = harness::load_sample(entry, cfg.train.resolution);
    const PromptBundle bundle = builder.build(sample.id, sample.image);
    const Var pred =
        model.forward_mask(sample.image, bundle, sample.mask.dim(0), sample.mask.dim(1));
    evals.push_back(metrics::evaluate_pair({pred.value(), sample.mask}));
  }
  return metrics::aggregate(evals);
}

}  // namespace

int main() {
  std::cout << std::setprecision(6);
  const fs::path root = fs::temp_directory_path() / "expert_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);

  const fs::path train50 = root / "train50";
  const fs::path held10 = root / "held10";
  const fs::path tiny4 = root / "tiny4";
  harness::write_blob_dataset(train50, 50, 64, 101);
  harness::write_blob_dataset(held10, 10, 64, 202);
  harness::write_blob_dataset(tiny4, 4, 16, 303);
  const DatasetIndex train_index = DatasetIndex::scan(train50);
  const DatasetIndex held_index = DatasetIndex::scan(held10);
  const DatasetIndex tiny_index = DatasetIndex::scan(tiny4);

  int failures = 0;

  // 1. 200 training steps leave every frozen parameter byte-identical.
  failures += run_criterion("01 frozen-backbone-immutability", [&] {
    const RunConfig cfg = desk_config(train50);
    Trainer trainer(cfg, train_index);
    const auto& frozen = trainer.model().partition().frozen;
    const std::uint64_t before = hash_param_bytes(trainer.model().params(), frozen);
    for (int s = 0; s < 200; ++s) trainer.step();
    const std::uint64_t after = hash_param_bytes(trainer.model().params(), frozen);
    require(after == before, "frozen parameter bytes changed during training");
    std::ostringstream os;
    os << "hash of " << frozen.size() << " frozen tensors unchanged across 200 steps";
    return os.str();
  });

  // 2. Gates pinned at zero: per-step losses match an injector-free run.
  failures += run_criterion("02 injector-inertness", [&] {
    RunConfig gated = desk_config(train50);
    gated.peft.alpha_init = 0.0;
    gated.peft.alpha_trainable = false;
    gated.validate();
    RunConfig bare = desk_config(train50);
    bare.prompts.sources.clear();
    bare.validate();

    Trainer a(gated, train_index);
    Trainer b(bare, train_index);
    double last = 0.0;
    for (int s = 0; s < 50; ++s) {
      const auto la = a.step();
      const auto lb = b.step();
      require(la.total == lb.total && la.bce == lb.bce && la.iou == lb.iou,
              "losses diverged at step " + std::to_string(s + 1) + ": " + num(la.total, 17) +
                  " vs " + num(lb.total, 17));
      last = la.total;
    }
    return "50 per-step losses exactly equal (final " + num(last) + ")";
  });

  // 3. Zeroed adapter up-projections reproduce the backbone+decoder output.
  failures += run_criterion("03 adapter-inertness", [&] {
    RunConfig with_adapters = desk_config(train50);
    with_adapters.prompts.sources.clear();
    with_adapters.validate();
    RunConfig plain = with_adapters;
    plain.peft.attach_all_sites = false;
    plain.validate();

    Model adapted(with_adapters);
    const std::int64_t zeroed = zero_params_containing(adapted, ".up.");
    require(zeroed > 0, "no up-projection parameters found");
    Model bare(plain);

    const Sample sample = harness::load_sample(train_index.entries[0], 64);
    NoGradGuard guard;
    const Tensor a = adapted.forward_logits(sample.image, PromptBundle{}).value();
    const Tensor b = bare.forward_logits(sample.image, PromptBundle{}).value();
    require(values_equal(a, b), "outputs differ with zeroed up-projections");
    std::ostringstream os;
    os << zeroed << " up-projection tensors zeroed; " << a.numel() << " logits exactly equal";
    return os.str();
  });

  // 4. Analytic gradients match central finite differences on a toy model.
  failures += run_criterion("04 gradient-correctness", [&] {
    const RunConfig cfg = small_config(tiny4, 17);
    const peft::TrainedParamReport report = peft::count_trained_params(cfg);
    require(report.total <= 1000,
            "toy model has " + std::to_string(report.total) + " trainable params (> 1000)");

    Model model(cfg);
    const Sample sample = harness::load_sample(tiny_index.entries[0], 16);
    const BundleBuilder builder(cfg);
    const PromptBundle bundle = builder.build(sample.id, sample.image);
    const Var gt = Var::constant(sample.mask);

    const Var pred = model.forward_mask(sample.image, bundle, 16, 16);
    const Var loss = objective::total_loss(pred, gt, cfg.loss);
    backward(loss);

    const auto loss_at = [&] {
      NoGradGuard guard;
      objective::LossBreakdown bd;
      const Var p = model.forward_mask(sample.image, bundle, 16, 16);
      objective::total_loss(p, gt, cfg.loss, &bd);
      return bd.total;
    };

    // Flatten the trainable partition and sample 50 distinct coordinates.
    std::vector<std::pair<std::string, std::int64_t>> coords;
    for (const std::string& name : model.partition().trainable) {
      const std::int64_t n = model.params().get(name).var.value().numel();
      for (std::int64_t i = 0; i < n; ++i) coords.emplace_back(name, i);
    }
    require(static_cast<std::int64_t>(coords.size()) == report.total,
            "partition enumeration disagrees with the analytic count");
    Rng rng(404, "acceptance/fd");
    std::set<std::size_t> picked;
    while (picked.size() < 50) {
      picked.insert(static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(coords.size()) - 1)));
    }

    const double step = 1e-5;
    double worst = 0.0;
    for (const std::size_t c : picked) {
      const auto& [name, idx] = coords[c];
      Var var = model.params().get(name).var;
      const double analytic = var.has_grad() ? var.grad()[idx] : 0.0;
      const double orig = var.value()[idx];
      var.mutable_value()[idx] = orig + step;
      const double up = loss_at();
      var.mutable_value()[idx] = orig - step;
      const double down = loss_at();
      var.mutable_value()[idx] = orig;
      const double fd = (up - down) / (2.0 * step);
      const double rel =
          std::fabs(analytic - fd) / std::max({1.0, std::fabs(analytic), std::fabs(fd)});
      worst = std::max(worst, rel);
      require(rel < 1e-4, name + "[" + std::to_string(idx) + "]: analytic " + num(analytic, 12) +
                              " vs fd " + num(fd, 12) + " (rel " + num(rel) + ")");
    }
    std::ostringstream os;
    os << "50 sampled coordinates of " << report.total << " trainable params within 1e-4 (worst "
       << num(worst) << ")";
    return os.str();
  });

  // 5. Vectorized metrics equal per-pixel loop oracles on random pairs.
  failures += run_criterion("05 metric-oracle-equivalence", [&] {
    Rng rng(505, "acceptance/pairs");
    double worst_e = 0.0, worst_s = 0.0;
    int with_fg = 0;
    for (int k = 0; k < 100; ++k) {
      Tensor pred({8, 8});
      Tensor gt({8, 8});
      for (std::int64_t i = 0; i < 64; ++i) {
        if (k % 3 == 1) {
          pred.data()[i] = static_cast<double>(rng.uniform_int(0, 255)) / 255.0;
        } else {
          pred.data()[i] = rng.uniform();
        }
        if (k % 7 == 0 && i % 4 == 0) pred.data()[i] = (i % 8 == 0) ? 0.0 : 1.0;
        gt.data()[i] = rng.uniform() < 0.35 ? 1.0 : 0.0;
      }
      if (k % 10 == 0) gt = Tensor::zeros({8, 8});
      if (k % 10 == 5) gt = Tensor::full({8, 8}, 1.0);
      const metrics::EvalPair pair{pred, gt};
      metrics::validate(pair);

      require(metrics::mae(pair) == naive::mae(pred, gt),
              "mae mismatch on pair " + std::to_string(k));

      if (metrics::has_foreground(gt)) {
        ++with_fg;
        const auto pr = metrics::pr_at_thresholds(pair);
        const auto npr = naive::pr_curves(pred, gt);
        const auto f = metrics::f_beta(pr.precision, pr.recall);
        const auto nf = naive::f_beta(npr);
        for (int t = 0; t < 256; ++t) {
          require(pr.precision[t] == npr.precision[t],
                  "precision mismatch at t=" + std::to_string(t));
          require(pr.recall[t] == npr.recall[t], "recall mismatch at t=" + std::to_string(t));
          require(f[t] == nf[t], "f mismatch at t=" + std::to_string(t));
        }
      }

      const auto e = metrics::e_measure_curve(pair);
      const auto ne = naive::e_curve(pred, gt);
      for (int t = 0; t < 256; ++t) {
        const double d = std::fabs(e[t] - ne[t]);
        worst_e = std::max(worst_e, d);
        require(d <= 1e-10, "e mismatch at t=" + std::to_string(t) + ": " + num(d));
      }
      const double ds = std::fabs(metrics::s_measure(pair) - naive::s_measure(pred, gt));
      worst_s = std::max(worst_s, ds);
      require(ds <= 1e-10, "s mismatch on pair " + std::to_string(k) + ": " + num(ds));
    }
    std::ostringstream os;
    os << "100 pairs (" << with_fg << " with foreground): MAE/P/R/F exact, |dE| <= " << num(worst_e)
       << ", |dS| <= " << num(worst_s);
    return os.str();
  });

  // 6. A prediction equal to its ground truth scores perfectly.
  failures += run_criterion("06 perfect-prediction-metrics", [&] {
    Rng rng(606, "acceptance/perfect");
    std::vector<metrics::ImageEval> evals;
    const std::vector<std::vector<std::int64_t>> shapes = {{6, 6}, {9, 5}, {4, 12}, {7, 7}};
    for (std::size_t k = 0; k < shapes.size(); ++k) {
      Tensor gt(shapes[k]);
      if (k + 1 < shapes.size()) {
        for (std::int64_t i = 0; i < gt.numel(); ++i) {
          gt.data()[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
        }
        gt.data()[0] = 1.0;  // guarantee foreground
      }
      evals.push_back(metrics::evaluate_pair({gt, gt}));
    }
    const metrics::MetricsReport report = metrics::aggregate(evals);
    require(report.mae == 0.0, "mae " + num(report.mae, 17) + " != 0");
    require(report.max_f == 1.0, "max_f " + num(report.max_f, 17) + " != 1");
    require(report.max_e == 1.0, "max_e " + num(report.max_e, 17) + " != 1");
    require(report.s == 1.0, "s " + num(report.s, 17) + " != 1");
    require(report.n_empty_gt == 1, "expected exactly one empty ground truth");
    return std::string("pred == gt over 4 mixed pairs: MAE=0, max_f=1, max_e=1, S=1 exactly");
  });

  // 7. F at P = R = 0.5 with beta^2 = 0.3.
  failures += run_criterion("07 f-measure-spot-value", [&] {
    require(metrics::kFBetaSquared == 0.3, "beta^2 is not 0.3");
    std::array<double, metrics::kNumThresholds> p{};
    std::array<double, metrics::kNumThresholds> r{};
    p.fill(0.5);
    r.fill(0.5);
    const auto f = metrics::f_beta(p, r);
    for (int t = 0; t < 256; ++t) {
      require(f[t] == 0.5, "f[" + std::to_string(t) + "] = " + num(f[t], 17));
    }
    return std::string("(1 + 0.3) * 0.25 / (0.3 * 0.5 + 0.5) == 0.5 exactly at all thresholds");
  });

  // 8. Closed-form parameter counts equal enumeration; totals increase
  //    baseline -> +injectors -> +cross-attention.
  failures += run_criterion("08 parameter-accounting", [&] {
    RunConfig baseline = desk_config(train50);  // J = 0
    baseline.prompts.sources.clear();

    RunConfig one_source = desk_config(train50);  // J = 1, no interaction
    one_source.prompts.sources.resize(1);
    one_source.prompts.sources[0].cross_attention = false;

    RunConfig two_sources = desk_config(train50);  // J = 2, no interaction
    for (auto& s : two_sources.prompts.sources) s.cross_attention = false;

    RunConfig crossed = desk_config(train50);  // J = 2, L = 1
    crossed.prompts.cross_attention.layers = 1;

    RunConfig deep_cross = desk_config(train50);  // J = 2, L = 2
    deep_cross.prompts.cross_attention.layers = 2;

    const std::vector<std::pair<std::string, RunConfig>> cases = {
        {"J0", baseline},     {"J1", one_source},    {"J2", two_sources},
        {"J2/L1", crossed},   {"J2/L2", deep_cross},
    };
    std::map<std::string, std::int64_t> totals;
    std::ostringstream listing;
    for (const auto& [label, cfg] : cases) {
      cfg.validate();
      const peft::TrainedParamReport analytic = peft::count_trained_params(cfg);
      Model model(cfg);
      std::int64_t enumerated = 0;
      for (const std::string& name : model.partition().trainable) {
        enumerated += model.params().get(name).var.value().numel();
      }
      require(analytic.total == enumerated,
              label + ": analytic " + std::to_string(analytic.total) + " != enumerated " +
                  std::to_string(enumerated));
      const auto groups = model.enumerate_trained_params();
      for (const auto& group : analytic.groups) {
        require(groups.count(group.name) == 1 && groups.at(group.name) == group.count,
                label + ": group '" + group.name + "' analytic " + std::to_string(group.count) +
                    " != enumerated");
      }
      totals[label] = analytic.total;
      if (totals.size() > 1) listing << ", ";
      listing << label << "=" << analytic.total;
    }
    require(totals["J0"] < totals["J2"], "injectors did not increase the total");
    require(totals["J2"] < totals["J2/L1"], "cross-attention did not increase the total");
    require(totals["J0"] < totals["J1"] && totals["J1"] < totals["J2"],
            "totals not monotone in source count");
    require(totals["J2/L1"] < totals["J2/L2"], "totals not monotone in interaction depth");
    return "5 configs agree with enumeration (" + listing.str() + ")";
  });

  // 9. 2,000 steps on the 50-image blob corpus: loss collapses and the
  //    held-out F-measure clears 0.9.
  failures += run_criterion("09 training-progress", [&] {
    RunConfig cfg = desk_config(train50);
    cfg.optimizer.learning_rate = 1e-3;
    cfg.validate();
    Trainer trainer(cfg, train_index);
    std::vector<double> losses;
    losses.reserve(2000);
    for (int s = 0; s < 2000; ++s) losses.push_back(trainer.step().total);
    const auto mean_of = [&](std::size_t begin, std::size_t end) {
      double acc = 0.0;
      for (std::size_t i = begin; i < end; ++i) acc += losses[i];
      return acc / static_cast<double>(end - begin);
    };
    const double initial = mean_of(0, 10);
    const double final_loss = mean_of(losses.size() - 10, losses.size());
    require(final_loss < 0.25 * initial,
            "final loss " + num(final_loss) + " not below 25% of initial " + num(initial));

    const metrics::MetricsReport report = evaluate_model(trainer.model(), cfg, held_index);
    require(report.max_f > 0.9, "held-out max_f " + num(report.max_f) + " <= 0.9");
    std::ostringstream os;
    os << "loss " << num(initial) << " -> " << num(final_loss) << " ("
       << num(100.0 * final_loss / initial, 3) << "%), held-out max_f " << num(report.max_f);
    return os.str();
  });

  // 10. Single-head cross-attention layer against direct softmax arithmetic.
  failures += run_criterion("10 cross-attention-oracle", [&] {
    const CrossAttentionConfig xc{1, 1, 4};  // default depth, one head
    require(CrossAttentionConfig{}.layers == 1, "default interaction depth is not 1");
    ParamRegistry reg;
    prompts::CrossAttentionInteraction inter(xc, "blip", 3, 2, reg, 12);

    const auto set = [&](const std::string& name, std::vector<std::int64_t> shape,
                         std::vector<double> values) {
      Var var = reg.get("cross_attention.blip.layer0." + name).var;
      var.mutable_value() = Tensor(std::move(shape), std::move(values));
    };
    // Hand-picked single-head weights.
    set("attn.wq", {4, 3}, {0.50, -0.25, 0.125, 0.75, 0.0, -0.50, -0.125, 0.25, 0.50, 0.0, 0.375, -0.75});
    set("attn.bq", {4}, {0.10, -0.20, 0.05, 0.0});
    set("attn.wk", {4, 2}, {0.25, -0.50, 0.75, 0.125, -0.25, 0.50, 0.0, -0.125});
    set("attn.bk", {4}, {-0.05, 0.15, 0.0, 0.10});
    set("attn.wv", {4, 2}, {0.50, 0.25, -0.75, 0.125, 0.375, -0.25, 0.0, 0.625});
    set("attn.bv", {4}, {0.20, 0.0, -0.10, 0.05});
    set("attn.wo", {3, 4}, {0.25, -0.125, 0.50, 0.0, -0.375, 0.25, 0.125, -0.50, 0.0, 0.75, -0.25, 0.125});
    set("attn.bo", {3}, {0.01, -0.02, 0.03});
    // Silence the feed-forward half so the residual is pure attention.
    set("ffn.w2", {3, 12}, std::vector<double>(36, 0.0));
    set("ffn.b2", {3}, {0.0, 0.0, 0.0});

    const Tensor vision({2, 3}, {0.2, -0.4, 0.7, -0.1, 0.5, 0.3});
    const Tensor text({2, 2}, {0.6, -0.2, 0.1, 0.9});
    NoGradGuard guard;
    const Tensor out = inter.forward(Var::constant(vision), Var::constant(text)).value();

    // Direct arithmetic: pre-norm, one-head attention, residual add.
    const auto wq = reg.get("cross_attention.blip.layer0.attn.wq").var.value();
    const auto bq = reg.get("cross_attention.blip.layer0.attn.bq").var.value();
    const auto wk = reg.get("cross_attention.blip.layer0.attn.wk").var.value();
    const auto bk = reg.get("cross_attention.blip.layer0.attn.bk").var.value();
    const auto wv = reg.get("cross_attention.blip.layer0.attn.wv").var.value();
    const auto bv = reg.get("cross_attention.blip.layer0.attn.bv").var.value();
    const auto wo = reg.get("cross_attention.blip.layer0.attn.wo").var.value();
    const auto bo = reg.get("cross_attention.blip.layer0.attn.bo").var.value();

    double kv[2][4], vv[2][4];
    for (int j = 0; j < 2; ++j) {
      for (int c = 0; c < 4; ++c) {
        double k_acc = bk.data()[c], v_acc = bv.data()[c];
        for (int d = 0; d < 2; ++d) {
          k_acc += wk.data()[c * 2 + d] * text.data()[j * 2 + d];
          v_acc += wv.data()[c * 2 + d] * text.data()[j * 2 + d];
        }
        kv[j][c] = k_acc;
        vv[j][c] = v_acc;
      }
    }

    double worst = 0.0;
    for (int i = 0; i < 2; ++i) {
      // Row layer norm (gamma = 1, beta = 0 from initialization).
      double mean = 0.0;
      for (int d = 0; d < 3; ++d) mean += vision.data()[i * 3 + d];
      mean /= 3.0;
      double var = 0.0;
      for (int d = 0; d < 3; ++d) {
        const double c = vision.data()[i * 3 + d] - mean;
        var += c * c;
      }
      var /= 3.0;
      double q[3];
      for (int d = 0; d < 3; ++d) {
        q[d] = (vision.data()[i * 3 + d] - mean) / std::sqrt(var + 1e-6);
      }
      double qp[4];
      for (int c = 0; c < 4; ++c) {
        qp[c] = bq.data()[c];
        for (int d = 0; d < 3; ++d) qp[c] += wq.data()[c * 3 + d] * q[d];
      }
      double scores[2];
      for (int j = 0; j < 2; ++j) {
        scores[j] = 0.0;
        for (int c = 0; c < 4; ++c) scores[j] += qp[c] * kv[j][c];
        scores[j] /= std::sqrt(4.0);
      }
      const double m = std::max(scores[0], scores[1]);
      const double e0 = std::exp(scores[0] - m), e1 = std::exp(scores[1] - m);
      const double a0 = e0 / (e0 + e1), a1 = e1 / (e0 + e1);
      double head[4];
      for (int c = 0; c < 4; ++c) head[c] = a0 * vv[0][c] + a1 * vv[1][c];
      for (int d = 0; d < 3; ++d) {
        double o = bo.data()[d];
        for (int c = 0; c < 4; ++c) o += wo.data()[d * 4 + c] * head[c];
        const double expected = vision.data()[i * 3 + d] + o;
        const double diff = std::fabs(out.data()[i * 3 + d] - expected);
        worst = std::max(worst, diff);
        require(diff <= 1e-10, "token " + std::to_string(i) + " dim " + std::to_string(d) +
                                   ": |model - oracle| = " + num(diff));
      }
    }
    return "2 queries x 2 text tokens match hand softmax arithmetic (worst |d| " + num(worst) +
           ")";
  });

  // 11. Checkpoint save/load reproduces evaluation outputs bit for bit.
  failures += run_criterion("11 checkpoint-round-trip", [&] {
    const RunConfig cfg = small_config(tiny4, 21);
    Trainer trainer(cfg, tiny_index);
    for (int s = 0; s < 10; ++s) trainer.step();

    const fs::path path = root / "roundtrip.bin";
    harness::save_checkpoint(path, trainer.make_checkpoint());
    const Checkpoint loaded = harness::load_checkpoint(path);
    const std::unique_ptr<Model> restored = harness::model_from_checkpoint(loaded);

    const BundleBuilder builder(cfg);
    NoGradGuard guard;
    std::int64_t doubles = 0;
    for (const auto& entry : tiny_index.entries) {
      const Sample sample = harness::load_sample(entry, 16);
      const PromptBundle bundle = builder.build(sample.id, sample.image);
      const Tensor a = trainer.model().forward_mask(sample.image, bundle, 16, 16).value();
      const Tensor b = restored->forward_mask(sample.image, bundle, 16, 16).value();
      require(bitwise_equal(a, b), "eval outputs differ after reload for " + sample.id);
      doubles += a.numel();
    }
    std::ostringstream os;
    os << tiny_index.size() << " evaluation outputs bit-identical after save/load (" << doubles
       << " doubles compared)";
    return os.str();
  });

  std::cout << "acceptance: " << (11 - failures) << "/11 criteria passed" << std::endl;
  return failures;
}
