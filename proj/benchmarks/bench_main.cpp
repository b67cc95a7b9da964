#include <benchmark/benchmark.h>

#include "maskprobe/geometry.hpp"
#include "maskprobe/mock_detector.hpp"
#include "maskprobe/sampling.hpp"
#include "maskprobe/scene.hpp"
#include "maskprobe/similarity.hpp"

using namespace maskprobe;

namespace {

const SyntheticScene& scene() {
  static const SyntheticScene s = [] {
    SceneSpec spec;
    spec.seed = 1;
    spec.ground_points = 20000;
    return generate_scene(spec);
  }();
  return s;
}

DensityModel model() {
  DensityModel m;
  m.coeffs = {0.067, 0.15, 3.28};
  m.lambda = calibrate_lambda(m.coeffs, 25.0, 0.15);
  return m;
}

void BM_GenerateMask(benchmark::State& state) {
  const DensityModel m = model();
  std::uint64_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate_mask(scene().cloud, 0.2, m, 7, i++));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(scene().cloud.size()));
}
BENCHMARK(BM_GenerateMask);

void BM_Iou3d(benchmark::State& state) {
  const Box3D a({10, 2, -1}, {3.9, 1.6, 1.5}, 0.3);
  const Box3D b({10.4, 2.3, -0.9}, {4.1, 1.7, 1.4}, 0.55);
  for (auto _ : state) {
    benchmark::DoNotOptimize(iou_3d(a, b));
  }
}
BENCHMARK(BM_Iou3d);

void BM_MockDetect(benchmark::State& state) {
  MockDetector det;
  for (auto _ : state) {
    benchmark::DoNotOptimize(det.run(scene().cloud));
  }
}
BENCHMARK(BM_MockDetect);

void BM_BestSimilarity(benchmark::State& state) {
  const DetectionSet found = MockDetector().run(scene().cloud);
  const DetectionSet targets = scene().ground_truth();
  for (auto _ : state) {
    for (const Detection& t : targets) {
      benchmark::DoNotOptimize(best_similarity(t, found));
    }
  }
}
BENCHMARK(BM_BestSimilarity);

}  // namespace

BENCHMARK_MAIN();
