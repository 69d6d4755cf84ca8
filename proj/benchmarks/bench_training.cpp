#include <benchmark/benchmark.h>

#include <filesystem>
#include <memory>

#include "expert/config.hpp"
#include "expert/harness/dataset.hpp"
#include "expert/harness/synthetic.hpp"
#include "expert/harness/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using namespace expert;

struct TrainFixture {
  fs::path data;
  RunConfig cfg = RunConfig::desk_default();
  std::unique_ptr<harness::Trainer> trainer;

  TrainFixture() {
    data = fs::temp_directory_path() / "expert_bench_data";
    if (!fs::exists(data / "images")) harness::write_blob_dataset(data, 16, 64, 77);
    cfg.train.data_root = data.string();
    cfg.train.batch_size = 2;
    cfg.validate();
    trainer = std::make_unique<harness::Trainer>(cfg, harness::DatasetIndex::scan(data));
  }
};

TrainFixture& fixture() {
  static TrainFixture fx;
  return fx;
}

void bm_train_step(benchmark::State& state) {
  TrainFixture& fx = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(fx.trainer->step().total);
  }
}
BENCHMARK(bm_train_step)->Unit(benchmark::kMillisecond);

void bm_bundle_build(benchmark::State& state) {
  TrainFixture& fx = fixture();
  const harness::BundleBuilder builder(fx.cfg);
  const harness::Sample sample =
      harness::load_sample(harness::DatasetIndex::scan(fx.data).entries[0], 64);
  for (auto _ : state) {
    benchmark::DoNotOptimize(builder.build(sample.id, sample.image).features);
  }
}
BENCHMARK(bm_bundle_build)->Unit(benchmark::kMicrosecond);

}  // namespace
