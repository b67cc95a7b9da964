#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>

#include "maskprobe/errors.hpp"
#include "maskprobe/rng.hpp"
#include "maskprobe/sampling.hpp"
#include "maskprobe/scene.hpp"

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

PointCloud random_block(std::uint64_t seed, std::size_t n, Vec3 origin, double size) {
  std::mt19937_64 gen(seed);
  std::vector<Point> pts;
  for (std::size_t i = 0; i < n; ++i) {
    pts.push_back({static_cast<float>(origin.x + uniform01(gen) * size),
                   static_cast<float>(origin.y + uniform01(gen) * size),
                   static_cast<float>(origin.z + uniform01(gen) * size), 0.5f});
  }
  return PointCloud(std::move(pts));
}

}  // namespace

TEST_CASE("keep probability") {
  DensityModel m;
  m.coeffs = {0.01, 0.2, 1.0};
  m.lambda = 0.0;
  for (double r : {0.0, 10.0, 100.0}) {
    CHECK(keep_probability(m, r) == m.p_min);
  }

  DensityModel flat;
  flat.coeffs = {0.0, 0.0, 1.0};
  flat.lambda = 0.3;
  flat.p_max = 1.0;
  for (double r : {0.0, 7.0, 80.0}) {
    CHECK(keep_probability(flat, r) == doctest::Approx(0.3).epsilon(1e-15));
  }
  CHECK_THROWS_AS(keep_probability(flat, -1.0), InvalidArgument);

  DensityModel steep;
  steep.coeffs = {1.0, 0.0, 0.0};
  steep.lambda = 1.0;
  CHECK(keep_probability(steep, 100.0) == steep.p_max);
  CHECK(keep_probability(steep, 0.0) == steep.p_min);
}

TEST_CASE("calibrate lambda") {
  CHECK(calibrate_lambda({0.0, 0.0, 2.0}, 10.0, 0.5) == 0.25);

  const DensityCoefficients c{0.067, 0.15, 3.28};
  DensityModel m;
  m.coeffs = c;
  m.lambda = calibrate_lambda(c, 25.0, 0.15);
  CHECK(m.lambda * c.evaluate(25.0) == doctest::Approx(0.15).epsilon(1e-14));
  CHECK(keep_probability(m, 25.0) == doctest::Approx(0.15).epsilon(1e-14));

  // Calibrating to the current value is a fixed point.
  const double current = m.lambda * c.evaluate(40.0);
  CHECK(calibrate_lambda(c, 40.0, current) == doctest::Approx(m.lambda).epsilon(1e-14));

  CHECK_THROWS_AS(calibrate_lambda({0.0, -1.0, 1.0}, 10.0, 0.5), InvalidArgument);
  CHECK_THROWS_AS(calibrate_lambda({0.0, 0.0, 0.0}, 10.0, 0.5), InvalidArgument);
  CHECK_THROWS_AS(calibrate_lambda({0.0, 0.0, 1.0}, 10.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(calibrate_lambda({0.0, 0.0, 1.0}, 10.0, 1.5), InvalidArgument);
}

TEST_CASE("quadratic fit on a constant profile is exact") {
  DensityProfile profile;
  for (int i = 0; i < 40; ++i) {
    DensityBin b;
    b.mean_range = i + 0.5;
    b.mean_density = 0.125;
    b.voxels = 50;
    b.used = true;
    profile.bins.push_back(b);
  }
  bool pinned = true;
  const DensityCoefficients c = fit_reciprocal_quadratic(profile, &pinned);
  CHECK_FALSE(pinned);
  CHECK(std::abs(c.a) < 1e-12);
  CHECK(std::abs(c.b) < 1e-10);
  CHECK(c.c == doctest::Approx(8.0).epsilon(1e-10));
}

TEST_CASE("density measured on a constant-occupancy strip") {
  // One point per voxel on a grid-aligned strip 2 m wide along +x: every
  // interior voxel sees the same neighborhood, so density is flat in range.
  std::vector<Point> pts;
  for (int ix = 0; ix < 300; ++ix) {
    for (int iy = -5; iy < 5; ++iy) {
      pts.push_back({static_cast<float>(0.1 + 0.2 * ix), static_cast<float>(0.1 + 0.2 * iy), 0.1f, 0.5f});
    }
  }
  const std::vector<PointCloud> clouds = {PointCloud(std::move(pts))};
  DensityProfile profile = measure_density(clouds, VoxelGridSpec{}, 1.0);
  REQUIRE(profile.bins.size() >= 60);
  const double rho0 = profile.bins[10].mean_density;
  CHECK(rho0 > 0.0);
  for (std::size_t i = 5; i + 3 < profile.bins.size(); ++i) {
    CHECK(profile.bins[i].mean_density == doctest::Approx(rho0).epsilon(1e-12));
  }
  // Strip ends see truncated neighborhoods, and below 5 m the edge rows of the
  // strip fall into different range bins than the center rows.
  for (std::size_t i = 0; i < profile.bins.size(); ++i) {
    profile.bins[i].used = profile.bins[i].used && i >= 5 && i + 3 < profile.bins.size();
  }
  const DensityCoefficients c = fit_reciprocal_quadratic(profile);
  CHECK(std::abs(c.a) < 1e-9);
  CHECK(std::abs(c.b) < 1e-7);
  CHECK(c.c == doctest::Approx(1.0 / rho0).epsilon(1e-8));
}

TEST_CASE("fit on a surface with 1/r^2 occupancy tracks the binned reciprocal") {
  // A flat annulus of voxels, each occupied with probability (20 / r)^2.
  std::mt19937_64 gen(3);
  std::vector<Point> pts;
  for (int ix = -300; ix < 300; ++ix) {
    for (int iy = -300; iy < 300; ++iy) {
      const double x = 0.1 + 0.2 * ix;
      const double y = 0.1 + 0.2 * iy;
      const double r = std::hypot(x, y);
      if (r >= 20.0 && r <= 60.0 && uniform01(gen) < (20.0 / r) * (20.0 / r)) {
        pts.push_back({static_cast<float>(x), static_cast<float>(y), 0.1f, 0.5f});
      }
    }
  }
  const std::vector<PointCloud> clouds = {PointCloud(std::move(pts))};
  DensityFit fit = fit_density_model(clouds, VoxelGridSpec{}, 1.0);
  // Bins within reach of the annulus rims see truncated neighborhoods.
  for (DensityBin& b : fit.profile.bins) {
    b.used = b.used && b.mean_range > 21.5 && b.mean_range < 58.5;
  }
  fit.coeffs = fit_reciprocal_quadratic(fit.profile);
  CHECK(fit.coeffs.c > 0.0);
  double sq = 0.0;
  std::size_t n = 0;
  for (const DensityBin& b : fit.profile.bins) {
    if (!b.used) {
      continue;
    }
    const double y = 1.0 / b.mean_density;
    const double rel = (fit.coeffs.evaluate(b.mean_range) - y) / y;
    sq += rel * rel;
    ++n;
  }
  REQUIRE(n > 30);
  const double rms = std::sqrt(sq / static_cast<double>(n));
  MESSAGE("relative RMS of fit vs binned reciprocal density: " << rms);
  CHECK(rms <= 0.05);
}

TEST_CASE("density fit errors") {
  const std::vector<PointCloud> none;
  CHECK_THROWS_AS(fit_density_model(none, VoxelGridSpec{}, 1.0), InsufficientData);
  const std::vector<PointCloud> empties = {PointCloud{}, PointCloud{}};
  CHECK_THROWS_AS(fit_density_model(empties, VoxelGridSpec{}, 1.0), InsufficientData);
  // Three points: every bin below the 10-voxel floor.
  const std::vector<PointCloud> sparse = {PointCloud({{5, 0, 0, 0}, {6, 0, 0, 0}, {7, 0, 0, 0}})};
  CHECK_THROWS_AS(fit_density_model(sparse, VoxelGridSpec{}, 1.0), InsufficientData);
}

TEST_CASE("grid spec validation") {
  VoxelGridSpec g;
  CHECK_NOTHROW(g.validate());
  g.jitter_translation.x = 0.2;
  CHECK_THROWS_AS(g.validate(), InvalidArgument);
  g = {};
  g.jitter_yaw = 2.0 * std::numbers::pi;
  CHECK_THROWS_AS(g.validate(), InvalidArgument);
  g = {};
  g.edge_length = 0.0;
  CHECK_THROWS_AS(g.validate(), InvalidArgument);
}

TEST_CASE("mask certainty and errors") {
  const PointCloud cloud = random_block(1, 500, {10, 0, 0}, 3.0);
  std::mt19937_64 gen(3);
  DensityModel all;
  all.p_min = all.p_max = 1.0;
  CHECK(generate_mask(cloud, VoxelGridSpec{}, all, gen).kept_count() == cloud.size());
  DensityModel none;
  none.p_min = none.p_max = 0.0;
  CHECK(generate_mask(cloud, VoxelGridSpec{}, none, gen).kept_count() == 0);
  CHECK_THROWS_AS(generate_mask(PointCloud{}, VoxelGridSpec{}, all, gen), InvalidArgument);
}

TEST_CASE("points sharing a jittered voxel share their bit") {
  const PointCloud cloud = random_block(2, 400, {8, -1, -1}, 1.5);
  const DensityModel model = constant_model(0.5);
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto gen = substream(seed, StreamTag::kMask, 0);
    const VoxelGridSpec grid = VoxelGridSpec::random(0.2, gen);
    const auto ids = voxel_assignment(cloud, grid);
    const SamplingMask mask = generate_mask(cloud, grid, model, gen);
    std::map<std::uint32_t, bool> bit;
    bool consistent = true;
    for (std::size_t j = 0; j < cloud.size(); ++j) {
      const auto [it, inserted] = bit.emplace(ids[j], mask[j]);
      if (!inserted && it->second != mask[j]) {
        consistent = false;
      }
    }
    REQUIRE_MESSAGE(consistent, "seed " << seed);
  }
}

TEST_CASE("jitter separates close points") {
  // 5 cm apart: usually in one voxel, but some jitter must split them.
  const PointCloud cloud({{12.0f, 3.0f, 0.5f, 0.2f}, {12.05f, 3.0f, 0.5f, 0.2f}});
  std::size_t split = 0;
  for (std::uint64_t i = 0; i < 200; ++i) {
    auto gen = substream(9, StreamTag::kMask, i);
    const auto ids = voxel_assignment(cloud, VoxelGridSpec::random(0.2, gen));
    split += ids[0] != ids[1] ? 1 : 0;
  }
  CHECK(split > 0);
  CHECK(split < 200);
}

TEST_CASE("mean kept fraction matches the Bernoulli expectation") {
  // Points on a shell of radius 20 m.
  std::mt19937_64 gen(4);
  std::vector<Point> pts;
  for (int i = 0; i < 600; ++i) {
    const double az = (uniform01(gen) - 0.5) * 0.6;
    const double el = (uniform01(gen) - 0.5) * 0.1;
    pts.push_back({static_cast<float>(20 * std::cos(el) * std::cos(az)),
                   static_cast<float>(20 * std::cos(el) * std::sin(az)), static_cast<float>(20 * std::sin(el)), 0.3f});
  }
  const PointCloud cloud(std::move(pts));
  DensityModel model;
  model.coeffs = {0.067, 0.15, 3.28};
  model.lambda = calibrate_lambda(model.coeffs, 25.0, 0.15);

  // Voxel centers sit within 0.18 m of the shell; the resulting bias in P is
  // about 1e-6, far below the Monte Carlo error tested here.
  const std::size_t masks = 10000;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < masks; ++i) {
    const SamplingMask mask = generate_mask(cloud, 0.2, model, 21, i);
    const double f = static_cast<double>(mask.kept_count()) / static_cast<double>(cloud.size());
    sum += f;
    sum_sq += f * f;
  }
  const double n = static_cast<double>(masks);
  const double mean = sum / n;
  const double sigma = std::sqrt((sum_sq / n - mean * mean) / n);
  const double p20 = keep_probability(model, 20.0);
  MESSAGE("mean kept fraction " << mean << ", P(20) " << p20 << ", sigma of mean " << sigma);
  CHECK(std::abs(mean - p20) <= 3.0 * sigma);
}

TEST_CASE("mask determinism per iteration") {
  const PointCloud cloud = random_block(5, 1000, {15, 2, -1}, 4.0);
  DensityModel model = constant_model(0.4);
  const SamplingMask a = generate_mask(cloud, 0.2, model, 77, 12);
  const SamplingMask b = generate_mask(cloud, 0.2, model, 77, 12);
  CHECK(a == b);
  CHECK_FALSE(a == generate_mask(cloud, 0.2, model, 77, 13));
  CHECK_FALSE(a == generate_mask(cloud, 0.2, model, 78, 12));
}

TEST_CASE("apply mask") {
  const PointCloud cloud({{1, 0, 0, 0.1f}, {2, 0, 0, 0.2f}, {3, 0, 0, 0.3f}});
  const MaskedCloud all = apply_mask(cloud, SamplingMask(3, true));
  CHECK(all.cloud == cloud);
  CHECK(apply_mask(cloud, SamplingMask(3, false)).cloud.empty());
  const MaskedCloud sub = apply_mask(cloud, SamplingMask(std::vector<std::uint8_t>{1, 0, 1}));
  REQUIRE(sub.cloud.size() == 2);
  CHECK(sub.cloud[0] == cloud[0]);
  CHECK(sub.cloud[1] == cloud[2]);
  CHECK(sub.parent_index == std::vector<std::uint32_t>{0, 2});
  CHECK_THROWS_AS(apply_mask(cloud, SamplingMask(2, true)), InvalidArgument);
}
