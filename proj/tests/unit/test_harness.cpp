#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "expert/config.hpp"
#include "expert/errors.hpp"
#include "expert/harness/checkpoint.hpp"
#include "expert/harness/dataset.hpp"
#include "expert/harness/optimizer.hpp"
#include "expert/harness/reports.hpp"
#include "expert/harness/run_config_json.hpp"
#include "expert/harness/synthetic.hpp"
#include "expert/harness/tensor_io.hpp"
#include "expert/harness/trainer.hpp"
#include "expert/metrics.hpp"
#include "expert/model.hpp"
#include "expert/ops.hpp"
#include "expert/params.hpp"
#include "expert/rng.hpp"
#include "expert/tensor.hpp"

namespace fs = std::filesystem;
using namespace expert;
using namespace expert::harness;

namespace {

fs::path fresh_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / "expert_harness_tests" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const fs::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(out.good());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string first_line(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  return line;
}

std::size_t count_lines(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

// Registry parameters start out frozen; the optimizer only accepts trainable ones.
void mark_trainable(ParamRegistry& reg, const std::string& name) {
  Node& n = *reg.get(name).var.node();
  n.requires_grad = true;
  n.needs_grad = true;
}

// Small full model config that trains in milliseconds per step.
RunConfig tiny_run_config() {
  RunConfig cfg;
  cfg.seed = 5;
  cfg.backbone.kind = BackboneConfig::Kind::multi_scale;
  cfg.backbone.input_resolution = 16;
  cfg.backbone.seed = 11;
  cfg.backbone.stages = {{1, 4, 1, 2}, {1, 4, 1, 4}, {1, 6, 2, 8}, {1, 8, 2, 16}};
  cfg.decoder.common_dim = 4;
  cfg.decoder.fuse_dim = 4;
  PromptSourceConfig tok;
  tok.name = "tok";
  tok.dim = 3;
  tok.layout = PromptSourceConfig::Layout::tokens;
  tok.tokens = 4;
  tok.provider = PromptSourceConfig::Provider::synthetic;
  tok.synthetic_mode = PromptSourceConfig::SyntheticMode::pooled;
  tok.cross_attention = true;
  PromptSourceConfig grd;
  grd.name = "grd";
  grd.dim = 2;
  grd.layout = PromptSourceConfig::Layout::grid;
  grd.grid = 2;
  grd.provider = PromptSourceConfig::Provider::synthetic;
  grd.synthetic_mode = PromptSourceConfig::SyntheticMode::noise;
  cfg.prompts.sources = {tok, grd};
  cfg.prompts.text.provider = TextConfig::Provider::synthetic;
  cfg.prompts.text.dim = 2;
  cfg.prompts.text.tokens = 4;
  cfg.prompts.cross_attention = {1, 1, 4};
  cfg.train.resolution = 16;
  cfg.train.batch_size = 2;
  cfg.optimizer.learning_rate = 1e-2;
  cfg.validate();
  return cfg;
}

}  // namespace

TEST_CASE("tensor files use the documented binary layout") {
  const fs::path dir = fresh_dir("tensor_io");
  const fs::path path = dir / "zeros.ten";
  write_tensor(path, Tensor::zeros({2, 3}));
  // 4 magic + 1 ndim + 2*4 dims + 6*4 float payload.
  CHECK(fs::file_size(path) == 37);

  const Tensor back = read_tensor(path);
  REQUIRE(back.shape() == std::vector<std::int64_t>{2, 3});
  for (std::int64_t i = 0; i < back.numel(); ++i) CHECK(back.data()[i] == 0.0);
}

TEST_CASE("tensor file round trip is exact at float32 precision") {
  const fs::path dir = fresh_dir("tensor_io_rt");
  Rng rng(91, "tensor_io");
  Tensor t({3, 2, 4});
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-5.0, 5.0);

  const fs::path path = dir / "t.ten";
  write_tensor(path, t);
  const Tensor once = read_tensor(path);
  REQUIRE(once.shape() == t.shape());
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    CHECK(once.data()[i] == doctest::Approx(t.data()[i]).epsilon(1e-6));
    CHECK(once.data()[i] == static_cast<double>(static_cast<float>(t.data()[i])));
  }

  // A second pass through the file changes nothing: values are already
  // representable in float32.
  write_tensor(path, once);
  const Tensor twice = read_tensor(path);
  for (std::int64_t i = 0; i < t.numel(); ++i) CHECK(twice.data()[i] == once.data()[i]);
}

TEST_CASE("tensor file reader rejects malformed content") {
  const fs::path dir = fresh_dir("tensor_io_bad");
  const fs::path good = dir / "good.ten";
  write_tensor(good, Tensor::full({2, 2}, 1.5));
  const std::vector<char> bytes = slurp(good);

  CHECK_THROWS_AS(read_tensor(dir / "absent.ten"), InputError);

  std::vector<char> bad_magic = bytes;
  bad_magic[0] = 'X';
  spit(dir / "bad_magic.ten", bad_magic);
  CHECK_THROWS_WITH_AS(read_tensor(dir / "bad_magic.ten"), doctest::Contains("bad tensor magic"),
                       FormatError);

  std::vector<char> truncated(bytes.begin(), bytes.begin() + 3);
  spit(dir / "trunc.ten", truncated);
  CHECK_THROWS_AS(read_tensor(dir / "trunc.ten"), FormatError);

  std::vector<char> short_payload(bytes.begin(), bytes.end() - 4);
  spit(dir / "short.ten", short_payload);
  CHECK_THROWS_WITH_AS(read_tensor(dir / "short.ten"), doctest::Contains("payload"), FormatError);

  std::vector<char> long_payload = bytes;
  long_payload.push_back('\0');
  spit(dir / "long.ten", long_payload);
  CHECK_THROWS_AS(read_tensor(dir / "long.ten"), FormatError);

  std::vector<char> zero_dim = bytes;
  zero_dim[5] = zero_dim[6] = zero_dim[7] = zero_dim[8] = 0;
  spit(dir / "zero_dim.ten", zero_dim);
  CHECK_THROWS_WITH_AS(read_tensor(dir / "zero_dim.ten"), doctest::Contains("zero dimension"),
                       FormatError);

  CHECK_THROWS_AS(write_tensor(dir / "scalar.ten", Tensor::scalar(1.0)), InputError);
}

TEST_CASE("metrics reports survive the JSON round trip exactly") {
  Rng rng(17, "report_pairs");
  std::vector<metrics::ImageEval> evals;
  for (int k = 0; k < 3; ++k) {
    Tensor pred({6, 6});
    Tensor gt({6, 6});
    for (std::int64_t i = 0; i < 36; ++i) {
      pred.data()[i] = rng.uniform();
      gt.data()[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
    }
    evals.push_back(metrics::evaluate_pair({pred, gt}));
  }
  const metrics::MetricsReport report = metrics::aggregate(evals);

  const metrics::MetricsReport back = metrics_report_from_json(metrics_report_to_json(report));
  CHECK(back.mae == report.mae);
  CHECK(back.max_f == report.max_f);
  CHECK(back.max_e == report.max_e);
  CHECK(back.s == report.s);
  CHECK(back.n_images == report.n_images);
  CHECK(back.n_empty_gt == report.n_empty_gt);
  REQUIRE(back.precision.size() == report.precision.size());
  for (std::size_t t = 0; t < report.precision.size(); ++t) {
    CHECK(back.precision[t] == report.precision[t]);
    CHECK(back.recall[t] == report.recall[t]);
    CHECK(back.f[t] == report.f[t]);
  }

  const fs::path dir = fresh_dir("reports");
  write_metrics_report(dir / "report.json", report);
  const metrics::MetricsReport file_back = read_metrics_report(dir / "report.json");
  CHECK(file_back.mae == report.mae);
  CHECK(file_back.max_f == report.max_f);
  CHECK(file_back.s == report.s);

  write_fm_curve_csv(dir / "fm.csv", report);
  write_pr_curve_csv(dir / "pr.csv", report);
  CHECK(first_line(dir / "fm.csv") == "threshold,precision,recall,f");
  CHECK(first_line(dir / "pr.csv") == "recall,precision");
  CHECK(count_lines(dir / "fm.csv") == 257);
  CHECK(count_lines(dir / "pr.csv") == 257);
}

TEST_CASE("blob corpus scans sorted and loads binarized samples") {
  const fs::path dir = fresh_dir("blobs");
  write_blob_dataset(dir, 4, 16, 3);

  const DatasetIndex index = DatasetIndex::scan(dir);
  REQUIRE(index.size() == 4);
  CHECK(index.entries[0].id == "blob_000");
  CHECK(index.entries[3].id == "blob_003");
  for (std::size_t i = 1; i < index.entries.size(); ++i) {
    CHECK(index.entries[i - 1].id < index.entries[i].id);
  }

  const Sample sample = load_sample(index.entries[0], 16);
  REQUIRE(sample.image.shape() == std::vector<std::int64_t>{3, 16, 16});
  REQUIRE(sample.mask.shape() == std::vector<std::int64_t>{16, 16});
  int fg = 0;
  int bg = 0;
  for (std::int64_t i = 0; i < sample.mask.numel(); ++i) {
    const double v = sample.mask.data()[i];
    CHECK((v == 0.0 || v == 1.0));
    (v == 1.0 ? fg : bg)++;
  }
  CHECK(fg > 0);
  CHECK(bg > 0);
  for (std::int64_t i = 0; i < sample.image.numel(); ++i) {
    CHECK(sample.image.data()[i] >= 0.0);
    CHECK(sample.image.data()[i] <= 1.0);
  }

  // Resizing down still yields a binary mask.
  const Sample small = load_sample(index.entries[1], 8);
  REQUIRE(small.mask.shape() == std::vector<std::int64_t>{8, 8});
  for (std::int64_t i = 0; i < small.mask.numel(); ++i) {
    CHECK((small.mask.data()[i] == 0.0 || small.mask.data()[i] == 1.0));
  }

  CHECK_THROWS_AS(write_blob_dataset(dir, 0, 16, 3), InputError);
  CHECK_THROWS_AS(write_blob_dataset(dir, 1, 4, 3), InputError);
}

TEST_CASE("dataset scan flags an image with no mask") {
  const fs::path dir = fresh_dir("orphan");
  write_blob_dataset(dir, 2, 16, 9);
  fs::copy_file(dir / "images" / "blob_000.png", dir / "images" / "zz_orphan.png");

  CHECK_THROWS_WITH_AS(DatasetIndex::scan(dir), doctest::Contains("zz_orphan"), InputError);
  const DatasetIndex lenient = DatasetIndex::scan(dir, true);
  CHECK(lenient.size() == 2);

  CHECK_THROWS_AS(DatasetIndex::scan(dir / "missing_root"), InputError);
}

TEST_CASE("mask files round trip through the 8-bit threshold") {
  const fs::path dir = fresh_dir("masks");
  Tensor probs({2, 3});
  probs.data()[0] = 0.0;
  probs.data()[1] = 0.25;    // 64 -> below threshold
  probs.data()[2] = 0.4999;  // 127 -> below threshold
  probs.data()[3] = 0.5;     // 127.5 rounds away from zero -> 128 -> on
  probs.data()[4] = 0.75;
  probs.data()[5] = 1.0;
  write_mask(dir / "m.png", probs);

  const Tensor back = read_mask(dir / "m.png");
  REQUIRE(back.shape() == std::vector<std::int64_t>{2, 3});
  CHECK(back.data()[0] == 0.0);
  CHECK(back.data()[1] == 0.0);
  CHECK(back.data()[2] == 0.0);
  CHECK(back.data()[3] == 1.0);
  CHECK(back.data()[4] == 1.0);
  CHECK(back.data()[5] == 1.0);

  CHECK_THROWS_AS(read_mask(dir / "missing.png"), InputError);
  CHECK_THROWS_AS(read_image(dir / "missing.png"), InputError);
}

TEST_CASE("adamw minimizes a quadratic and rejects frozen parameters") {
  ParamRegistry reg;
  reg.create("w", {4}, Init::constant(5.0), 1);
  reg.create("frozen", {2}, Init::zeros(), 1);
  mark_trainable(reg, "w");

  CHECK_THROWS_AS(AdamW(reg, {"w", "frozen"}, OptimizerConfig{}), PartitionError);

  OptimizerConfig opt;
  opt.learning_rate = 0.2;
  AdamW adam(reg, {"w"}, opt);
  const Tensor target({4}, {1.0, -2.0, 0.5, 3.0});
  for (int step = 0; step < 300; ++step) {
    adam.zero_grad();
    Var w = reg.get("w").var;
    Var diff = ops::sub(w, Var::constant(target));
    Var loss = ops::sum_all(ops::mul(diff, diff));
    backward(loss);
    adam.step();
  }
  CHECK(adam.step_count() == 300);
  const Tensor& w = reg.get("w").var.value();
  for (std::int64_t i = 0; i < 4; ++i) {
    CHECK(w.data()[i] == doctest::Approx(target.data()[i]).epsilon(1e-3));
  }
}

TEST_CASE("adamw zero-gradient step is an exact no-op at zero weight decay") {
  ParamRegistry reg;
  reg.create("w", {3}, Init::truncated_normal(1.0), 77);
  mark_trainable(reg, "w");
  const Tensor before = reg.get("w").var.value();

  OptimizerConfig opt;
  opt.weight_decay = 0.0;
  AdamW adam(reg, {"w"}, opt);
  adam.zero_grad();
  adam.step();
  CHECK(adam.step_count() == 1);
  const Tensor& after = reg.get("w").var.value();
  for (std::int64_t i = 0; i < 3; ++i) CHECK(after.data()[i] == before.data()[i]);

  // With decay enabled the same step shrinks the weights.
  ParamRegistry reg2;
  reg2.create("w", {3}, Init::truncated_normal(1.0), 77);
  mark_trainable(reg2, "w");
  OptimizerConfig decayed;
  decayed.weight_decay = 0.1;
  AdamW adam2(reg2, {"w"}, decayed);
  adam2.zero_grad();
  adam2.step();
  const Tensor& after2 = reg2.get("w").var.value();
  for (std::int64_t i = 0; i < 3; ++i) {
    if (before.data()[i] != 0.0) CHECK(after2.data()[i] != before.data()[i]);
  }
}

TEST_CASE("adamw restore validates the slot map and resumes the schedule") {
  ParamRegistry reg;
  reg.create("a", {2}, Init::constant(1.0), 1);
  reg.create("b", {3}, Init::constant(-1.0), 1);
  mark_trainable(reg, "a");
  mark_trainable(reg, "b");
  OptimizerConfig opt;
  opt.learning_rate = 0.05;

  auto run_steps = [&](AdamW& adam, int n) {
    for (int step = 0; step < n; ++step) {
      adam.zero_grad();
      Var loss = ops::add(ops::sum_all(ops::mul(reg.get("a").var, reg.get("a").var)),
                          ops::sum_all(ops::mul(reg.get("b").var, reg.get("b").var)));
      backward(loss);
      adam.step();
    }
  };

  AdamW adam(reg, {"a", "b"}, opt);
  run_steps(adam, 5);
  const std::map<std::string, AdamW::Slot> snapshot = adam.slots();
  const Tensor a5 = reg.get("a").var.value();
  const Tensor b5 = reg.get("b").var.value();
  run_steps(adam, 3);
  const Tensor a8 = reg.get("a").var.value();
  const Tensor b8 = reg.get("b").var.value();

  // Rewind the parameters and optimizer state, then replay the same steps.
  Var a = reg.get("a").var;
  Var b = reg.get("b").var;
  a.mutable_value() = a5;
  b.mutable_value() = b5;
  AdamW resumed(reg, {"a", "b"}, opt);
  resumed.restore(5, snapshot);
  CHECK(resumed.step_count() == 5);
  run_steps(resumed, 3);
  for (std::int64_t i = 0; i < 2; ++i) CHECK(reg.get("a").var.value().data()[i] == a8.data()[i]);
  for (std::int64_t i = 0; i < 3; ++i) CHECK(reg.get("b").var.value().data()[i] == b8.data()[i]);

  AdamW fresh(reg, {"a", "b"}, opt);
  std::map<std::string, AdamW::Slot> missing = snapshot;
  missing.erase("b");
  CHECK_THROWS_AS(fresh.restore(5, missing), InputError);

  std::map<std::string, AdamW::Slot> renamed = snapshot;
  renamed["c"] = renamed["a"];
  renamed.erase("a");
  CHECK_THROWS_AS(fresh.restore(5, renamed), InputError);

  std::map<std::string, AdamW::Slot> reshaped = snapshot;
  reshaped["a"].m = Tensor::zeros({5});
  CHECK_THROWS_AS(fresh.restore(5, reshaped), InputError);
}

TEST_CASE("checkpoints round trip bit for bit") {
  Checkpoint ckpt;
  ckpt.config = tiny_run_config();
  ckpt.step = 12;
  Rng rng(33, "ckpt");
  Tensor t1({3, 2});
  Tensor t2({4});
  for (std::int64_t i = 0; i < t1.numel(); ++i) t1.data()[i] = rng.normal();
  for (std::int64_t i = 0; i < t2.numel(); ++i) t2.data()[i] = rng.normal();
  ckpt.trainable = {{"decoder.pred.weight", t1}, {"adapter.stage0.down.weight", t2}};
  ckpt.has_optimizer = true;
  ckpt.adam_step = 12;
  AdamW::Slot s1{Tensor::full({3, 2}, 0.25), Tensor::full({3, 2}, 1e-4)};
  AdamW::Slot s2{Tensor::full({4}, -0.5), Tensor::full({4}, 2e-3)};
  ckpt.optimizer = {{"decoder.pred.weight", s1}, {"adapter.stage0.down.weight", s2}};

  const fs::path dir = fresh_dir("ckpt");
  const fs::path path = dir / "state.bin";
  save_checkpoint(path, ckpt);
  const Checkpoint back = load_checkpoint(path);

  CHECK(serialize_run_config(back.config) == serialize_run_config(ckpt.config));
  CHECK(back.step == 12);
  CHECK(back.has_optimizer);
  CHECK(back.adam_step == 12);
  REQUIRE(back.trainable.size() == 2);
  for (const auto& [name, tensor] : ckpt.trainable) {
    REQUIRE(back.trainable.count(name) == 1);
    const Tensor& got = back.trainable.at(name);
    REQUIRE(got.shape() == tensor.shape());
    for (std::int64_t i = 0; i < tensor.numel(); ++i) CHECK(got.data()[i] == tensor.data()[i]);
  }
  REQUIRE(back.optimizer.size() == 2);
  for (const auto& [name, slot] : ckpt.optimizer) {
    const AdamW::Slot& got = back.optimizer.at(name);
    for (std::int64_t i = 0; i < slot.m.numel(); ++i) {
      CHECK(got.m.data()[i] == slot.m.data()[i]);
      CHECK(got.v.data()[i] == slot.v.data()[i]);
    }
  }
}

TEST_CASE("checkpoint loader rejects corrupted files") {
  Checkpoint ckpt;
  ckpt.config = tiny_run_config();
  ckpt.step = 1;
  ckpt.trainable = {{"w", Tensor::full({2}, 1.0)}};

  const fs::path dir = fresh_dir("ckpt_bad");
  const fs::path path = dir / "state.bin";
  save_checkpoint(path, ckpt);
  const std::vector<char> bytes = slurp(path);

  CHECK_THROWS_AS(load_checkpoint(dir / "absent.bin"), InputError);

  std::vector<char> bad_magic = bytes;
  bad_magic[0] = '?';
  spit(dir / "bad_magic.bin", bad_magic);
  CHECK_THROWS_WITH_AS(load_checkpoint(dir / "bad_magic.bin"), doctest::Contains("magic"),
                       FormatError);

  std::vector<char> truncated(bytes.begin(), bytes.end() - 5);
  spit(dir / "trunc.bin", truncated);
  CHECK_THROWS_WITH_AS(load_checkpoint(dir / "trunc.bin"), doctest::Contains("truncated"),
                       FormatError);

  std::vector<char> padded = bytes;
  padded.push_back('x');
  spit(dir / "padded.bin", padded);
  CHECK_THROWS_WITH_AS(load_checkpoint(dir / "padded.bin"), doctest::Contains("trailing"),
                       FormatError);
}

TEST_CASE("trainer lowers the loss and never touches frozen parameters") {
  const fs::path data = fresh_dir("trainer_data");
  write_blob_dataset(data, 8, 16, 21);

  RunConfig cfg = tiny_run_config();
  cfg.train.data_root = data.string();
  Trainer trainer(cfg, DatasetIndex::scan(data));

  const std::uint64_t frozen_before =
      hash_param_bytes(trainer.model().params(), trainer.model().partition().frozen);

  const objective::LossBreakdown first = trainer.step();
  CHECK(std::isfinite(first.total));
  CHECK(first.total > 0.0);
  objective::LossBreakdown last = first;
  for (int step = 1; step < 60; ++step) last = trainer.step();
  CHECK(trainer.steps_done() == 60);
  CHECK(std::isfinite(last.total));
  CHECK(last.total < first.total);

  const std::uint64_t frozen_after =
      hash_param_bytes(trainer.model().params(), trainer.model().partition().frozen);
  CHECK(frozen_after == frozen_before);

  const Checkpoint full = trainer.make_checkpoint();
  CHECK(full.step == 60);
  CHECK(full.has_optimizer);
  CHECK(full.adam_step == 60);
  CHECK(full.trainable.size() == trainer.model().partition().trainable.size());
  for (const std::string& name : trainer.model().partition().trainable) {
    CHECK(full.trainable.count(name) == 1);
  }
  const Checkpoint lean = trainer.make_checkpoint(false);
  CHECK_FALSE(lean.has_optimizer);
  CHECK(lean.optimizer.empty());
}

TEST_CASE("run_training writes the config echo, loss log, and checkpoints") {
  const fs::path data = fresh_dir("run_train_data");
  write_blob_dataset(data, 6, 16, 5);

  RunConfig cfg = tiny_run_config();
  cfg.train.data_root = data.string();
  cfg.train.steps = 6;
  cfg.train.log_every = 1;
  cfg.train.checkpoint_every = 4;
  cfg.train.out_dir = (fresh_dir("run_train_out") / "run").string();

  std::vector<StepLog> seen;
  const TrainOutputs outs = run_training(cfg, [&](const StepLog& log) { seen.push_back(log); });

  CHECK(fs::exists(outs.config_path));
  CHECK(fs::exists(outs.loss_csv_path));
  CHECK(fs::exists(outs.checkpoint_path));
  CHECK(fs::exists(outs.out_dir / "checkpoint_step4.bin"));
  CHECK_FALSE(fs::exists(outs.out_dir / "checkpoint_step8.bin"));

  // The config echo parses back to the exact run configuration.
  std::ifstream cfg_in(outs.config_path);
  const std::string echoed((std::istreambuf_iterator<char>(cfg_in)),
                           std::istreambuf_iterator<char>());
  CHECK(serialize_run_config(parse_run_config(echoed)) == serialize_run_config(cfg));

  CHECK(first_line(outs.loss_csv_path) == "step,bce,iou,total");
  CHECK(count_lines(outs.loss_csv_path) == 7);
  REQUIRE(outs.logs.size() == 6);
  REQUIRE(seen.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(outs.logs[i].step == static_cast<std::int64_t>(i + 1));
    CHECK(seen[i].step == outs.logs[i].step);
    CHECK(seen[i].loss.total == outs.logs[i].loss.total);
    CHECK(std::isfinite(outs.logs[i].loss.total));
  }

  // Same seed, fresh output directory: the loss trace is byte-identical.
  RunConfig cfg2 = cfg;
  cfg2.train.out_dir = (fresh_dir("run_train_out2") / "run").string();
  const TrainOutputs outs2 = run_training(cfg2);
  CHECK(slurp(outs2.loss_csv_path) == slurp(outs.loss_csv_path));

  RunConfig missing = cfg;
  missing.train.data_root = (data / "nope").string();
  CHECK_THROWS_AS(run_training(missing), InputError);
}

TEST_CASE("model_from_checkpoint reproduces the trained model exactly") {
  const fs::path data = fresh_dir("restore_data");
  write_blob_dataset(data, 4, 16, 13);

  RunConfig cfg = tiny_run_config();
  cfg.train.data_root = data.string();
  Trainer trainer(cfg, DatasetIndex::scan(data));
  for (int step = 0; step < 5; ++step) trainer.step();
  const Checkpoint ckpt = trainer.make_checkpoint();

  const std::unique_ptr<Model> restored = model_from_checkpoint(ckpt);
  for (const std::string& name : trainer.model().partition().trainable) {
    const Tensor& a = trainer.model().params().get(name).var.value();
    const Tensor& b = restored->params().get(name).var.value();
    REQUIRE(a.shape() == b.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);
  }

  const BundleBuilder builder(cfg);
  const Sample sample = load_sample(DatasetIndex::scan(data).entries[0], 16);
  const PromptBundle bundle = builder.build(sample.id, sample.image);
  NoGradGuard eval_mode;
  const Tensor a = trainer.model().forward_logits(sample.image, bundle).value();
  const Tensor b = restored->forward_logits(sample.image, bundle).value();
  REQUIRE(a.shape() == b.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);

  Checkpoint fewer = ckpt;
  fewer.trainable.erase(fewer.trainable.begin());
  CHECK_THROWS_AS(model_from_checkpoint(fewer), ConfigError);

  Checkpoint renamed = ckpt;
  auto node = renamed.trainable.extract(renamed.trainable.begin());
  node.key() = "decoder.bogus.weight";
  renamed.trainable.insert(std::move(node));
  CHECK_THROWS_AS(model_from_checkpoint(renamed), ConfigError);

  Checkpoint reshaped = ckpt;
  reshaped.trainable.begin()->second = Tensor::zeros({1, 1, 1});
  CHECK_THROWS_AS(model_from_checkpoint(reshaped), ShapeError);
}

TEST_CASE("run_evaluation writes a deterministic report with curve files") {
  const fs::path data = fresh_dir("eval_data");
  write_blob_dataset(data, 5, 16, 29);

  RunConfig cfg = tiny_run_config();
  cfg.train.data_root = data.string();
  cfg.train.steps = 5;
  cfg.train.out_dir = (fresh_dir("eval_run") / "run").string();
  const TrainOutputs trained = run_training(cfg);
  const Checkpoint ckpt = load_checkpoint(trained.checkpoint_path);

  const fs::path eval_dir = fresh_dir("eval_out");
  const EvalOutputs outs = run_evaluation(ckpt, data, eval_dir);
  CHECK(outs.report.n_images == 5);
  CHECK(outs.report.mae >= 0.0);
  CHECK(outs.report.mae <= 1.0);
  CHECK(outs.report.max_f >= 0.0);
  CHECK(outs.report.max_f <= 1.0);
  CHECK(outs.report_path == eval_dir / "report.json");
  CHECK(fs::exists(eval_dir / "report.json"));
  CHECK(first_line(eval_dir / "fm_curve.csv") == "threshold,precision,recall,f");
  CHECK(first_line(eval_dir / "pr_curve.csv") == "recall,precision");

  const metrics::MetricsReport stored = read_metrics_report(eval_dir / "report.json");
  CHECK(stored.mae == outs.report.mae);
  CHECK(stored.max_f == outs.report.max_f);
  CHECK(stored.s == outs.report.s);

  // No output directory: evaluation only returns the report.
  const EvalOutputs quiet = run_evaluation(ckpt, data, "");
  CHECK(quiet.report_path.empty());
  CHECK(quiet.report.mae == outs.report.mae);
  CHECK(quiet.report.max_f == outs.report.max_f);
  CHECK(quiet.report.s == outs.report.s);
}

TEST_CASE("run_prediction keeps the input resolution and is reproducible") {
  const fs::path dir = fresh_dir("predict");
  // A deliberately non-square input: 12 rows by 20 columns.
  Tensor strip({12, 20});
  for (std::int64_t y = 0; y < 12; ++y) {
    for (std::int64_t x = 0; x < 20; ++x) {
      strip.data()[y * 20 + x] = (x < 10) ? 0.15 : 0.85;
    }
  }
  const fs::path image_path = dir / "strip.png";
  write_mask(image_path, strip);

  const fs::path data = fresh_dir("predict_data");
  write_blob_dataset(data, 4, 16, 41);
  RunConfig cfg = tiny_run_config();
  cfg.train.data_root = data.string();
  Trainer trainer(cfg, DatasetIndex::scan(data));
  for (int step = 0; step < 3; ++step) trainer.step();
  const Checkpoint ckpt = trainer.make_checkpoint(false);

  const fs::path out_a = dir / "map_a.png";
  run_prediction(ckpt, image_path, out_a);
  REQUIRE(fs::exists(out_a));
  const Tensor map = read_image(out_a);
  REQUIRE(map.shape() == std::vector<std::int64_t>{3, 12, 20});

  const fs::path out_b = dir / "map_b.png";
  run_prediction(ckpt, image_path, out_b);
  CHECK(slurp(out_a) == slurp(out_b));

  CHECK_THROWS_AS(run_prediction(ckpt, dir / "missing.png", dir / "map_c.png"), InputError);
}
