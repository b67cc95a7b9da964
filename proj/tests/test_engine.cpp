#include <doctest.h>

#include <cmath>
#include <map>
#include <stdexcept>

#include "maskprobe/engine.hpp"
#include "maskprobe/errors.hpp"
#include "maskprobe/mock_detector.hpp"
#include "maskprobe/scene.hpp"
#include "test_support.hpp"

using namespace maskprobe;

namespace {

DensityModel constant_model(double p) {
  DensityModel m;
  m.coeffs = {0.0, 0.0, 1.0};
  m.lambda = p;
  m.p_min = std::min(m.p_min, p);
  m.p_max = std::max(m.p_max, p);
  return m;
}

PointCloud line_cloud(std::size_t n, double spacing = 1.0) {
  std::vector<Point> pts;
  for (std::size_t i = 0; i < n; ++i) {
    pts.push_back({static_cast<float>(5.0 + spacing * static_cast<double>(i)), 0.0f, 0.0f, 0.5f});
  }
  return PointCloud(std::move(pts));
}

const Detection kTarget("Car", 0.8, Box3D({7, 0, 0}, {4, 1.6, 1.5}, 0.1));

Detection with_confidence(double c) {
  return Detection(kTarget.label(), c, kTarget.box());
}

}  // namespace

TEST_CASE("constant detector gives psi = 1 on observed points") {
  const PointCloud cloud = line_cloud(6);
  FunctionDetector det([](const PointCloud&) { return DetectionSet{with_confidence(1.0)}; });
  AnalysisConfig cfg;
  cfg.iterations = 200;
  cfg.density = constant_model(0.5);
  const AnalysisResult r = run_analysis(cloud, det, cfg);
  REQUIRE(r.maps.size() == 1);
  for (std::size_t j = 0; j < cloud.size(); ++j) {
    CHECK_FALSE(r.maps[0].unobserved(j));
    CHECK(r.maps[0].scores()[j] == 1.0);
  }
}

TEST_CASE("detector silent on sub-samples gives psi = 0") {
  const PointCloud cloud = line_cloud(6);
  // Only the first call (the full cloud) sees anything.
  bool first = true;
  FunctionDetector det([&first](const PointCloud&) {
    const bool was_first = first;
    first = false;
    return was_first ? DetectionSet{kTarget} : DetectionSet{};
  });
  AnalysisConfig cfg;
  cfg.iterations = 100;
  cfg.workers = 1;
  cfg.density = constant_model(0.3);
  const AnalysisResult r = run_analysis(cloud, det, cfg);
  REQUIRE(r.maps.size() == 1);
  for (double s : r.maps[0].scores()) {
    CHECK(s == 0.0);
  }
}

TEST_CASE("hand-fixed masks and similarities") {
  // Points at x = 1, 2, 4: the kept x-sum identifies each mask.
  const PointCloud cloud({{1, 0, 0, 0}, {2, 0, 0, 0}, {4, 0, 0, 0}});
  const std::map<int, double> conf_by_sum = {{3, 0.5}, {6, 1.0}, {5, 0.0}, {7, 0.8}};
  FunctionDetector det([&](const PointCloud& c) {
    int sum = 0;
    for (const Point& p : c) {
      sum += static_cast<int>(p.x);
    }
    return DetectionSet{with_confidence(conf_by_sum.at(sum))};
  });
  const std::vector<SamplingMask> masks = {SamplingMask(std::vector<std::uint8_t>{1, 1, 0}),
                                           SamplingMask(std::vector<std::uint8_t>{0, 1, 1}),
                                           SamplingMask(std::vector<std::uint8_t>{1, 0, 1}),
                                           SamplingMask(std::vector<std::uint8_t>{1, 1, 1})};
  AnalysisConfig cfg;
  cfg.iterations = 4;
  cfg.submetrics = {SubMetric::kConfidence, SubMetric::kTranslation};
  const AnalysisResult r =
      run_analysis_with_masks(cloud, det, {kTarget}, cfg, [&](std::uint32_t i) { return masks[i]; });
  REQUIRE(r.maps.size() == 1);
  const auto psi = r.maps[0].scores();
  CHECK(psi[0] == doctest::Approx((0.5 + 0.0 + 0.8) / 3).epsilon(1e-15));
  CHECK(psi[1] == doctest::Approx((0.5 + 1.0 + 0.8) / 3).epsilon(1e-15));
  CHECK(psi[2] == doctest::Approx((1.0 + 0.0 + 0.8) / 3).epsilon(1e-15));
  CHECK(r.maps[0].visible_counts()[0] == 3);

  // The zero-confidence iteration has no match, so every sub-metric records 0 there.
  REQUIRE(r.submetric_maps.size() == 2);
  CHECK(r.submetric_maps[0].metric == SubMetric::kConfidence);
  const auto conf = r.submetric_maps[0].maps[0].scores();
  CHECK(conf[0] == doctest::Approx(psi[0]).epsilon(1e-15));
  const auto trans = r.submetric_maps[1].maps[0].scores();
  CHECK(trans[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(trans[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(trans[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("sub-metric maps follow the full-product match") {
  // Iterations return one candidate shifted by 0.1, 0.3 or 0.5 m; each mask keeps one point.
  const PointCloud cloud({{1, 0, 0, 0}, {2, 0, 0, 0}, {3, 0, 0, 0}});
  FunctionDetector det([](const PointCloud& c) {
    const double shift = c[0].x == 1 ? 0.1 : c[0].x == 2 ? 0.3 : 0.5;
    const Box3D& b = kTarget.box();
    return DetectionSet{Detection("Car", 0.9, Box3D({b.center().x + shift, b.center().y, b.center().z}, b.dims(), b.yaw() + shift))};
  });
  AnalysisConfig cfg;
  cfg.iterations = 3;
  cfg.submetrics = {SubMetric::kTranslation, SubMetric::kOrientation, SubMetric::kScale};
  const AnalysisResult r = run_analysis_with_masks(cloud, det, {kTarget}, cfg, [](std::uint32_t i) {
    std::vector<std::uint8_t> keep(3, 0);
    keep[i] = 1;
    return SamplingMask(keep);
  });
  const double shifts[3] = {0.1, 0.3, 0.5};
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(r.submetric_maps[0].maps[0].scores()[j] == doctest::Approx(1.0 - shifts[j]).epsilon(1e-12));
    CHECK(r.submetric_maps[1].maps[0].scores()[j] == doctest::Approx(1.0 - shifts[j]).epsilon(1e-12));
    CHECK(r.submetric_maps[2].maps[0].scores()[j] == 1.0);
    CHECK(r.maps[0].scores()[j] == doctest::Approx(0.9 * (1.0 - shifts[j]) * (1.0 - shifts[j])).epsilon(1e-12));
  }
}

TEST_CASE("exact copies give unit geometric sub-metric maps") {
  const PointCloud cloud = line_cloud(5);
  FunctionDetector det([](const PointCloud&) { return DetectionSet{kTarget}; });
  AnalysisConfig cfg;
  cfg.iterations = 50;
  cfg.density = constant_model(0.5);
  cfg.submetrics = {SubMetric::kOrientation, SubMetric::kTranslation, SubMetric::kScale};
  const AnalysisResult r = run_analysis(cloud, det, cfg);
  for (const SubMetricMaps& sm : r.submetric_maps) {
    for (std::size_t j = 0; j < cloud.size(); ++j) {
      if (!sm.maps[0].unobserved(j)) {
        CHECK(sm.maps[0].scores()[j] == 1.0);
      }
    }
  }
  cfg.submetrics.clear();
  CHECK(run_analysis(cloud, det, cfg).submetric_maps.empty());
}

TEST_CASE("accumulators") {
  Accumulators acc(3, 1);
  acc.add(SamplingMask(std::vector<std::uint8_t>{1, 0, 1}), std::vector<double>{0.0});
  CHECK(acc.sums(0)[0] == 0.0);
  CHECK(acc.visible_counts()[0] == 1);
  CHECK(acc.visible_counts()[1] == 0);

  Accumulators full(3, 1);
  full.add(SamplingMask(3, true), std::vector<double>{1.0});
  for (double s : full.normalized(0)) {
    CHECK(s == 1.0);
  }

  const SamplingMask m1(std::vector<std::uint8_t>{1, 1, 0});
  const SamplingMask m2(std::vector<std::uint8_t>{0, 1, 1});
  Accumulators ab(3, 2);
  ab.add(m1, std::vector<double>{0.3, 0.7});
  ab.add(m2, std::vector<double>{0.1, 0.45});
  Accumulators ba(3, 2);
  ba.add(m2, std::vector<double>{0.1, 0.45});
  ba.add(m1, std::vector<double>{0.3, 0.7});
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(ab.normalized(k) == ba.normalized(k));
  }

  CHECK_THROWS_AS(acc.add(SamplingMask(3, true), std::vector<double>{0.1, 0.2}), InvalidArgument);
  CHECK_THROWS_AS(acc.add(SamplingMask(2, true), std::vector<double>{0.1}), InvalidArgument);
}

TEST_CASE("empty target set") {
  const PointCloud cloud = line_cloud(4);
  FunctionDetector det([](const PointCloud&) { return DetectionSet{}; });
  AnalysisConfig cfg;
  cfg.iterations = 10;
  const AnalysisResult r = run_analysis(cloud, det, cfg);
  CHECK(r.maps.empty());
  CHECK(r.detections.empty());
  CHECK_FALSE(r.metadata.warnings.empty());
}

TEST_CASE("config validation and errors") {
  const PointCloud cloud = line_cloud(4);
  FunctionDetector det([](const PointCloud&) { return DetectionSet{kTarget}; });
  AnalysisConfig cfg;
  cfg.iterations = 0;
  CHECK_THROWS_AS(run_analysis(cloud, det, cfg), InvalidArgument);
  cfg.iterations = 10;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(run_analysis(cloud, det, cfg), InvalidArgument);
  cfg.batch_size = 4;
  cfg.submetrics = {SubMetric::kScale, SubMetric::kScale};
  CHECK_THROWS_AS(run_analysis(cloud, det, cfg), InvalidArgument);
  cfg.submetrics.clear();
  CHECK_THROWS_AS(run_analysis(PointCloud{}, det, cfg), InvalidArgument);

  FunctionDetector flaky([n = cloud.size()](const PointCloud& c) {
    if (c.size() != n) {
      throw std::runtime_error("boom");
    }
    return DetectionSet{kTarget};
  });
  cfg.density = constant_model(0.5);
  try {
    run_analysis(cloud, flaky, cfg);
    FAIL("expected a detector error");
  } catch (const DetectorError& e) {
    CHECK(std::string(e.what()).find("iteration") != std::string::npos);
    CHECK(std::string(e.what()).find("boom") != std::string::npos);
  }
}

TEST_CASE("empty sub-samples skip the detector") {
  const PointCloud cloud = line_cloud(1);
  FunctionDetector det([](const PointCloud& c) {
    if (c.empty()) {
      throw std::runtime_error("empty input");
    }
    return DetectionSet{kTarget};
  });
  AnalysisConfig cfg;
  cfg.iterations = 64;
  cfg.density = constant_model(0.5);
  const AnalysisResult r = run_analysis(cloud, det, cfg);
  CHECK(r.metadata.empty_subsamples > 0);
  CHECK(r.maps[0].visible_counts()[0] + r.metadata.empty_subsamples == 64);
  CHECK(r.maps[0].scores()[0] == doctest::Approx(0.8));
}

TEST_CASE("results are bit-identical across worker counts") {
  SceneSpec spec;
  spec.objects = 3;
  spec.ground_points = 2000;
  spec.seed = 8;
  const SyntheticScene scene = generate_scene(spec);
  MockDetector det;
  AnalysisConfig cfg;
  cfg.iterations = 120;
  cfg.seed = 99;
  cfg.density.coeffs = {0.067, 0.15, 3.28};
  cfg.density.lambda = calibrate_lambda(cfg.density.coeffs, 25, 0.15);
  cfg.submetrics = {SubMetric::kTranslation};
  cfg.batch_size = 7;
  cfg.workers = 1;
  const AnalysisResult one = run_analysis(scene.cloud, det, cfg);
  cfg.workers = 4;
  const AnalysisResult four = run_analysis(scene.cloud, det, cfg);
  cfg.batch_size = 1;
  cfg.workers = 3;
  const AnalysisResult three = run_analysis(scene.cloud, det, cfg);
  REQUIRE_FALSE(one.maps.empty());
  CHECK(one.maps == four.maps);
  CHECK(one.maps == three.maps);
  CHECK(one.submetric_maps[0].maps == four.submetric_maps[0].maps);
  for (const AttributionMap& m : one.maps) {
    for (double s : m.scores()) {
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
    }
  }
  cfg.seed = 100;
  CHECK_FALSE(run_analysis(scene.cloud, det, cfg).maps == one.maps);
}

TEST_CASE("small exhaustive oracle") {
  // One point per voxel, P = 0.5: psi_j is the mean of S over the 2^(M-1) masks keeping j.
  constexpr std::size_t M = 6;
  const PointCloud cloud = line_cloud(M, 1.0);
  const double weights[M] = {0.9, 0.1, 0.5, 0.05, 0.3, 0.7};
  auto similarity = [&](const std::vector<bool>& keep) {
    double w = 0.0;
    for (std::size_t j = 0; j < M; ++j) {
      w += keep[j] ? weights[j] : 0.0;
    }
    return std::min(1.0, w * w / 4.0);
  };
  FunctionDetector det([&](const PointCloud& c) {
    std::vector<bool> keep(M, false);
    for (const Point& p : c) {
      keep[static_cast<std::size_t>(std::lround(p.x - 5.0))] = true;
    }
    return DetectionSet{with_confidence(similarity(keep))};
  });
  std::vector<double> exact(M, 0.0);
  for (std::uint32_t bits = 0; bits < (1u << M); ++bits) {
    std::vector<bool> keep(M);
    for (std::size_t j = 0; j < M; ++j) {
      keep[j] = (bits >> j) & 1u;
    }
    const double s = similarity(keep);
    for (std::size_t j = 0; j < M; ++j) {
      exact[j] += keep[j] ? s / static_cast<double>(1u << (M - 1)) : 0.0;
    }
  }
  AnalysisConfig cfg;
  cfg.iterations = 20000;
  cfg.density = constant_model(0.5);
  cfg.seed = 5;
  const AnalysisResult r = run_analysis_with_masks(cloud, det, {kTarget}, cfg, [&](std::uint32_t i) {
    return generate_mask(cloud, cfg.voxel_edge, cfg.density, cfg.seed, i);
  });
  for (std::size_t j = 0; j < M; ++j) {
    CHECK(std::abs(r.maps[0].scores()[j] - exact[j]) < 0.02);
  }
}
