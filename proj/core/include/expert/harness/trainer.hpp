#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "expert/config.hpp"
#include "expert/harness/checkpoint.hpp"
#include "expert/harness/dataset.hpp"
#include "expert/harness/optimizer.hpp"
#include "expert/metrics.hpp"
#include "expert/model.hpp"
#include "expert/objective.hpp"
#include "expert/rng.hpp"

namespace expert::harness {

// Assembles the per-image PromptBundle from the run's configured providers.
class BundleBuilder {
public:
  explicit BundleBuilder(const RunConfig& config);
  PromptBundle build(const std::string& image_id, const Tensor& image) const;

private:
  std::vector<std::unique_ptr<prompts::PromptProvider>> providers_;
  std::unique_ptr<prompts::TextProvider> text_;
};

struct StepLog {
  std::int64_t step = 0;
  objective::LossBreakdown loss;
};

// One training run: model, optimizer over the trainable partition, shuffled
// sample stream (reshuffled per epoch), and a per-image prompt cache.
class Trainer {
public:
  Trainer(const RunConfig& config, const DatasetIndex& index);

  Model& model() { return model_; }
  const Model& model() const { return model_; }
  AdamW& optimizer() { return *optimizer_; }

  // One optimizer step over the next batch; returns the batch-mean loss.
  // Throws on a non-finite loss, naming the step and batch ids.
  objective::LossBreakdown step();

  std::int64_t steps_done() const { return steps_done_; }

  Checkpoint make_checkpoint(bool with_optimizer = true) const;

private:
  std::size_t next_index();

  RunConfig config_;
  Model model_;
  std::vector<Sample> samples_;
  std::vector<PromptBundle> bundles_;
  std::unique_ptr<AdamW> optimizer_;
  Rng shuffle_rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::int64_t steps_done_ = 0;
};

struct TrainOutputs {
  std::filesystem::path out_dir;
  std::filesystem::path config_path;      // resolved-config echo
  std::filesystem::path loss_csv_path;    // step,bce,iou,total
  std::filesystem::path checkpoint_path;  // final checkpoint
  std::vector<StepLog> logs;
};

// The `train` entry point. Writes the resolved config, per-step loss CSV,
// interval checkpoints (train.checkpoint_every > 0) and the final
// checkpoint into config.train.out_dir. on_step, when set, observes every
// step's log after it is written.
TrainOutputs run_training(const RunConfig& config,
                          const std::function<void(const StepLog&)>& on_step = {});

// Rebuilds the model a checkpoint was saved from (identical config/seeds)
// and overwrites its trainable tensors with the stored values.
std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt);

struct EvalOutputs {
  metrics::MetricsReport report;
  std::filesystem::path report_path;  // unset when no out_dir was given
};

// The `evaluate` entry point: eval-mode inference over a dataset, each
// prediction resized to its ground truth's native resolution. With a
// non-empty out_dir, writes report.json, fm_curve.csv, and pr_curve.csv.
EvalOutputs run_evaluation(const Checkpoint& ckpt, const std::filesystem::path& data_root,
                           const std::filesystem::path& out_dir);

// The `predict` entry point: writes the saliency map of one image as an
// 8-bit grayscale file at the input image's resolution.
void run_prediction(const Checkpoint& ckpt, const std::filesystem::path& image_path,
                    const std::filesystem::path& out_path);

}  // namespace expert::harness
