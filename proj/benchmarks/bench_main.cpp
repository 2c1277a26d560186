#include <benchmark/benchmark.h>

#include <random>

#include "factor/calibration.hpp"
#include "factor/pairing.hpp"
#include "factor/synthetic.hpp"
#include "factor/transforms.hpp"
#include "oracles.hpp"

using namespace factor;

namespace {

Image bench_image(int w, int h) {
  std::mt19937_64 rng(1);
  return oracle::random_image(w, h, rng);
}

struct CalibrationInput {
  TextEmbeddingTable table;
  DetectionSet original;
  DetectionSet counterfactual;
};

CalibrationInput calibration_input(std::size_t regions, std::size_t categories,
                                   std::size_t dim) {
  std::mt19937_64 rng(2);
  CalibrationInput in;
  in.table = oracle::random_table(6, categories, dim, rng);
  in.original.image_id = "bench";
  in.original.categories = in.table.category_names;
  in.counterfactual = in.original;
  in.counterfactual.view = View::kCounterfactual;
  for (std::size_t i = 0; i < regions; ++i) {
    auto r = oracle::random_region(categories, dim, rng, oracle::random_box(rng));
    in.original.regions.push_back(r);
    r.box = oracle::jitter_box(r.box, 0.02, rng);
    in.counterfactual.regions.push_back(r);
  }
  return in;
}

}  // namespace

static void BM_Compose(benchmark::State& state) {
  const Image img = bench_image(static_cast<int>(state.range(0)),
                                static_cast<int>(state.range(0)) * 3 / 4);
  const TransformParams p;
  for (auto _ : state) benchmark::DoNotOptimize(compose_counterfactual(img, p, "b"));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(img.size()));
}
BENCHMARK(BM_Compose)->Arg(256)->Arg(640);

static void BM_Blur(benchmark::State& state) {
  const Image img = bench_image(640, 480);
  const int k = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(apply_blur(img, k));
}
BENCHMARK(BM_Blur)->Arg(3)->Arg(7);

static void BM_PixelDiff(benchmark::State& state) {
  const Image a = bench_image(640, 480);
  const Image b = apply_weather(a, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(pixel_diff_report(a, b));
}
BENCHMARK(BM_PixelDiff);

static void BM_Align(benchmark::State& state) {
  const auto in = calibration_input(static_cast<std::size_t>(state.range(0)), 4, 8);
  for (auto _ : state)
    benchmark::DoNotOptimize(align(in.original, in.counterfactual, 0.3));
}
BENCHMARK(BM_Align)->Arg(10)->Arg(100)->Arg(300);

static void BM_CalibrateImage(benchmark::State& state) {
  const auto in = calibration_input(static_cast<std::size_t>(state.range(0)), 80, 256);
  const Calibrator calibrator(in.table, {});
  for (auto _ : state)
    benchmark::DoNotOptimize(calibrator.run(in.original, in.counterfactual));
}
BENCHMARK(BM_CalibrateImage)->Arg(10)->Arg(100);

static void BM_GenerateScene(benchmark::State& state) {
  const SceneConfig cfg;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_scene(cfg, seed++));
}
BENCHMARK(BM_GenerateScene);

static void BM_Experiment(benchmark::State& state) {
  ExperimentConfig cfg;
  cfg.num_scenes = 20;
  cfg.workers = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run_experiment(cfg));
}
BENCHMARK(BM_Experiment)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
