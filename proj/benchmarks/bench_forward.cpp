#include <benchmark/benchmark.h>

#include <memory>

#include "expert/autograd.hpp"
#include "expert/config.hpp"
#include "expert/harness/trainer.hpp"
#include "expert/model.hpp"
#include "expert/rng.hpp"
#include "expert/tensor.hpp"

namespace {

using namespace expert;

Tensor random_image(int resolution, std::uint64_t seed) {
  Tensor image({3, resolution, resolution});
  Rng rng(seed, "bench/image");
  for (std::int64_t i = 0; i < image.numel(); ++i) image.data()[i] = rng.uniform();
  return image;
}

struct ForwardFixture {
  RunConfig cfg = RunConfig::desk_default();
  std::unique_ptr<Model> model;
  Tensor image;
  PromptBundle bundle;

  ForwardFixture() {
    cfg.validate();
    model = std::make_unique<Model>(cfg);
    image = random_image(cfg.backbone.input_resolution, 31);
    bundle = harness::BundleBuilder(cfg).build("bench_0", image);
  }
};

ForwardFixture& fixture() {
  static ForwardFixture fx;
  return fx;
}

void bm_forward_logits(benchmark::State& state) {
  ForwardFixture& fx = fixture();
  NoGradGuard guard;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fx.model->forward_logits(fx.image, fx.bundle).value().data());
  }
}
BENCHMARK(bm_forward_logits)->Unit(benchmark::kMillisecond);

void bm_forward_mask_full_resolution(benchmark::State& state) {
  ForwardFixture& fx = fixture();
  NoGradGuard guard;
  const std::int64_t side = fx.cfg.backbone.input_resolution;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        fx.model->forward_mask(fx.image, fx.bundle, side, side).value().data());
  }
}
BENCHMARK(bm_forward_mask_full_resolution)->Unit(benchmark::kMillisecond);

void bm_backbone_only(benchmark::State& state) {
  ForwardFixture& fx = fixture();
  NoGradGuard guard;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fx.model->feature_backbone().forward_all(fx.image).stage_outputs);
  }
}
BENCHMARK(bm_backbone_only)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
