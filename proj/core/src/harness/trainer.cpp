#include "expert/harness/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <utility>

#include "expert/errors.hpp"
#include "expert/harness/run_config_json.hpp"
#include "expert/harness/reports.hpp"
#include "expert/ops.hpp"

namespace expert::harness {

namespace fs = std::filesystem;

BundleBuilder::BundleBuilder(const RunConfig& config) {
  const fs::path dir = config.prompts.dir;
  for (const auto& source : config.prompts.sources) {
    providers_.push_back(prompts::make_provider(source, dir, config.seed));
  }
  if (config.prompts.any_cross_attention()) {
    text_ = std::make_unique<prompts::TextProvider>(config.prompts.text, dir, config.seed);
  }
}

PromptBundle BundleBuilder::build(const std::string& image_id, const Tensor& image) const {
  PromptBundle bundle;
  bundle.features.reserve(providers_.size());
  for (const auto& provider : providers_) {
    bundle.features.push_back(provider->provide(image_id, image));
  }
  if (text_) bundle.text = text_->provide(image_id);
  return bundle;
}

Trainer::Trainer(const RunConfig& config, const DatasetIndex& index)
    : config_(config), model_(config), shuffle_rng_(config.seed, "train/shuffle") {
  const BundleBuilder builder(config_);
  samples_.reserve(index.size());
  bundles_.reserve(index.size());
  for (const auto& entry : index.entries) {
    samples_.push_back(load_sample(entry, config_.train.resolution));
    bundles_.push_back(builder.build(samples_.back().id, samples_.back().image));
  }
  const auto& trainable = model_.partition().trainable;
  if (trainable.empty()) {
    throw ConfigError("nothing to train: the trainable partition is empty");
  }
  optimizer_ = std::make_unique<AdamW>(model_.params(), trainable, config_.optimizer);
  order_.resize(samples_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  cursor_ = order_.size();  // first next_index() call shuffles
}

std::size_t Trainer::next_index() {
  if (cursor_ == order_.size()) {
    for (std::size_t i = order_.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(
          shuffle_rng_.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order_[i - 1], order_[j]);
    }
    cursor_ = 0;
  }
  return order_[cursor_++];
}

objective::LossBreakdown Trainer::step() {
  std::vector<Var> totals;
  totals.reserve(static_cast<std::size_t>(config_.train.batch_size));
  objective::LossBreakdown batch;
  std::string batch_ids;
  for (int b = 0; b < config_.train.batch_size; ++b) {
    const std::size_t i = next_index();
    const Sample& sample = samples_[i];
    if (!batch_ids.empty()) batch_ids += ", ";
    batch_ids += sample.id;
    const Var pred =
        model_.forward_mask(sample.image, bundles_[i], sample.mask.dim(0), sample.mask.dim(1));
    objective::LossBreakdown one;
    totals.push_back(objective::total_loss(pred, Var::constant(sample.mask), config_.loss, &one));
    batch.bce += one.bce;
    batch.iou += one.iou;
    batch.total += one.total;
  }
  const double inv = 1.0 / static_cast<double>(config_.train.batch_size);
  batch.bce *= inv;
  batch.iou *= inv;
  batch.total *= inv;
  if (!std::isfinite(batch.total)) {
    throw Error("non-finite loss at step " + std::to_string(steps_done_ + 1) + " (batch: " +
                batch_ids + ")");
  }
  const Var loss = ops::scale(ops::add_n(totals), inv);
  optimizer_->zero_grad();
  backward(loss);
  optimizer_->step();
  ++steps_done_;
  return batch;
}

Checkpoint Trainer::make_checkpoint(bool with_optimizer) const {
  Checkpoint ckpt;
  ckpt.config = config_;
  ckpt.step = steps_done_;
  for (const std::string& name : model_.partition().trainable) {
    ckpt.trainable.emplace(name, model_.params().get(name).var.value());
  }
  if (with_optimizer) {
    ckpt.has_optimizer = true;
    ckpt.adam_step = optimizer_->step_count();
    ckpt.optimizer = optimizer_->slots();
  }
  return ckpt;
}

TrainOutputs run_training(const RunConfig& config,
                          const std::function<void(const StepLog&)>& on_step) {
  config.validate();
  if (config.train.data_root.empty()) {
    throw ConfigError("train.data_root must point at a dataset");
  }
  const DatasetIndex index =
      DatasetIndex::scan(config.train.data_root, config.train.skip_undecodable);
  Trainer trainer(config, index);

  TrainOutputs outs;
  outs.out_dir = config.train.out_dir;
  fs::create_directories(outs.out_dir);

  outs.config_path = outs.out_dir / "config.json";
  {
    std::ofstream cfg(outs.config_path, std::ios::trunc);
    if (!cfg) throw InputError("cannot write config echo: " + outs.config_path.string());
    cfg << serialize_run_config(config) << '\n';
  }

  outs.loss_csv_path = outs.out_dir / "loss.csv";
  std::ofstream csv(outs.loss_csv_path, std::ios::trunc);
  if (!csv) throw InputError("cannot write loss log: " + outs.loss_csv_path.string());
  csv << "step,bce,iou,total\n" << std::setprecision(17);

  for (int s = 1; s <= config.train.steps; ++s) {
    StepLog log;
    log.step = s;
    log.loss = trainer.step();
    outs.logs.push_back(log);
    csv << s << ',' << log.loss.bce << ',' << log.loss.iou << ',' << log.loss.total << '\n';
    if (config.train.log_every > 0 && s % config.train.log_every == 0) csv.flush();
    if (on_step) on_step(log);
    if (config.train.checkpoint_every > 0 && s % config.train.checkpoint_every == 0 &&
        s != config.train.steps) {
      save_checkpoint(outs.out_dir / ("checkpoint_step" + std::to_string(s) + ".bin"),
                      trainer.make_checkpoint());
    }
  }
  outs.checkpoint_path = outs.out_dir / "checkpoint.bin";
  save_checkpoint(outs.checkpoint_path, trainer.make_checkpoint());
  return outs;
}

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt) {
  auto model = std::make_unique<Model>(ckpt.config);
  const auto& trainable = model->partition().trainable;
  if (trainable.size() != ckpt.trainable.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(ckpt.trainable.size()) +
                      " trainable tensors, the config builds " +
                      std::to_string(trainable.size()));
  }
  for (const std::string& name : trainable) {
    const auto it = ckpt.trainable.find(name);
    if (it == ckpt.trainable.end()) {
      throw ConfigError("checkpoint is missing trainable parameter '" + name + "'");
    }
    Parameter& p = model->params().get(name);
    check_same_shape(p.var.value(), it->second, ("checkpoint restore of " + name).c_str());
    p.var.mutable_value() = it->second;
  }
  return model;
}

EvalOutputs run_evaluation(const Checkpoint& ckpt, const fs::path& data_root,
                           const fs::path& out_dir) {
  const std::unique_ptr<Model> model = model_from_checkpoint(ckpt);
  const RunConfig& config = model->config();
  const BundleBuilder builder(config);
  const DatasetIndex index = DatasetIndex::scan(data_root, config.train.skip_undecodable);

  NoGradGuard guard;
  const std::int64_t r = config.backbone.input_resolution;
  std::vector<metrics::ImageEval> evals;
  evals.reserve(index.size());
  for (const auto& entry : index.entries) {
    const Tensor image = ops::bilinear_resize_value(read_image(entry.image_path), r, r);
    const Tensor gt = read_mask(entry.mask_path);
    const PromptBundle bundle = builder.build(entry.id, image);
    const Var pred = model->forward_mask(image, bundle, gt.dim(0), gt.dim(1));
    evals.push_back(metrics::evaluate_pair({pred.value(), gt}));
  }

  EvalOutputs outs;
  outs.report = metrics::aggregate(evals);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    outs.report_path = out_dir / "report.json";
    write_metrics_report(outs.report_path, outs.report);
    write_fm_curve_csv(out_dir / "fm_curve.csv", outs.report);
    write_pr_curve_csv(out_dir / "pr_curve.csv", outs.report);
  }
  return outs;
}

void run_prediction(const Checkpoint& ckpt, const fs::path& image_path,
                    const fs::path& out_path) {
  const std::unique_ptr<Model> model = model_from_checkpoint(ckpt);
  const RunConfig& config = model->config();
  const BundleBuilder builder(config);

  NoGradGuard guard;
  const Tensor original = read_image(image_path);
  const std::int64_t r = config.backbone.input_resolution;
  const Tensor image = ops::bilinear_resize_value(original, r, r);
  const PromptBundle bundle = builder.build(image_path.stem().string(), image);
  const Var pred = model->forward_mask(image, bundle, original.dim(1), original.dim(2));
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_mask(out_path, pred.value());
}

}  // namespace expert::harness
