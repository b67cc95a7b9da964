#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "maskprobe/bundle.hpp"
#include "maskprobe/errors.hpp"
#include "maskprobe/io.hpp"
#include "maskprobe/keyvalue.hpp"
#include "maskprobe/mock_detector.hpp"
#include "maskprobe/scene.hpp"
#include "test_support.hpp"

using namespace maskprobe;
using testing::TempDir;

namespace {

std::vector<std::byte> le_floats(std::initializer_list<float> values) {
  std::vector<std::byte> out;
  for (float v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) {
      out.push_back(static_cast<std::byte>((bits >> (8 * b)) & 0xFFu));
    }
  }
  return out;
}

AttributionMap sample_map() {
  const Detection t("Car", 0.8125, Box3D({12.25, -3.5, -0.98}, {3.9, 1.6, 1.5}, 0.1));
  return AttributionMap(t, {0.1, 0.0, 1.0 / 3.0, 0.0, 2.0 / 7.0}, {3, 2, 5, 0, 9}, 12);
}

}  // namespace

TEST_CASE("kitti bin parsing") {
  CHECK(parse_kitti_bin({}).empty());
  // Hand-encoded point: 1.5, -2.25, 0.125, 0.5.
  const std::vector<std::byte> one = {std::byte{0x00}, std::byte{0x00}, std::byte{0xC0}, std::byte{0x3F},
                                      std::byte{0x00}, std::byte{0x00}, std::byte{0x10}, std::byte{0xC0},
                                      std::byte{0x00}, std::byte{0x00}, std::byte{0x00}, std::byte{0x3E},
                                      std::byte{0x00}, std::byte{0x00}, std::byte{0x00}, std::byte{0x3F}};
  const PointCloud c = parse_kitti_bin(one);
  REQUIRE(c.size() == 1);
  CHECK(c[0] == Point{1.5f, -2.25f, 0.125f, 0.5f});

  std::vector<std::byte> seventeen = one;
  seventeen.push_back(std::byte{0});
  try {
    parse_kitti_bin(seventeen, "scan.bin");
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("scan.bin") != std::string::npos);
    CHECK(std::string(e.what()).find("16") != std::string::npos);
  }

  const auto nan = le_floats({1, 2, 3, 0.5f, 1, std::numeric_limits<float>::quiet_NaN(), 3, 0.5f});
  try {
    parse_kitti_bin(nan);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("offset 20") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_kitti_bin(le_floats({1, 2, std::numeric_limits<float>::infinity(), 0.5f})), FormatError);

  const PointCloud clamped = parse_kitti_bin(le_floats({1, 2, 3, 1.5f, 1, 2, 3, -0.5f}));
  CHECK(clamped[0].intensity == 1.0f);
  CHECK(clamped[1].intensity == 0.0f);
}

TEST_CASE("kitti bin files round-trip bit-exactly") {
  TempDir dir;
  SceneSpec spec;
  spec.objects = 2;
  spec.ground_points = 500;
  const PointCloud cloud = generate_scene(spec).cloud;
  write_kitti_bin(dir / "a.bin", cloud);
  CHECK(std::filesystem::file_size(dir / "a.bin") == 16 * cloud.size());
  CHECK(read_kitti_bin(dir / "a.bin") == cloud);
  write_kitti_bin(dir / "b.bin", cloud);
  CHECK(testing::slurp(dir / "a.bin") == testing::slurp(dir / "b.bin"));
  write_kitti_bin(dir / "empty.bin", PointCloud{});
  CHECK(read_kitti_bin(dir / "empty.bin").empty());
  CHECK_THROWS_AS(read_kitti_bin(dir / "missing.bin"), FormatError);
}

TEST_CASE("turbo colors") {
  CHECK(turbo(0.0) == Rgb{48, 18, 59});
  CHECK(turbo(1.0) == Rgb{122, 4, 3});
  CHECK(turbo(-3.0) == turbo(0.0));
  CHECK(turbo(7.0) == turbo(1.0));
  const std::vector<double> two = {0.0, 1.0};
  const auto c = colorize(two);
  CHECK(c[0] == Rgb{48, 18, 59});
  CHECK(c[1] == Rgb{122, 4, 3});
  const std::vector<double> shifted = {3.0, 5.0, 4.0};
  CHECK(colorize(shifted)[0] == turbo(0.0));
  CHECK(colorize(shifted)[1] == turbo(1.0));
  CHECK(colorize(shifted)[2] == turbo(0.5));
  const std::vector<double> flat = {0.0, 0.0, 0.0};
  for (const Rgb& rgb : colorize(flat)) {
    CHECK(rgb == turbo(0.5));
  }
}

TEST_CASE("colored cloud export") {
  std::ostringstream empty;
  write_colored_cloud(empty, PointCloud{}, {});
  CHECK(empty.str().find("element vertex 0\n") != std::string::npos);
  CHECK(empty.str().ends_with("end_header\n"));

  const PointCloud cloud = testing::cloud_of({{1, 2, 3, 0.5f}, {4, 5, 6, 0.25f}});
  const std::vector<double> scores = {0.0, 1.0};
  std::ostringstream out;
  write_colored_cloud(out, cloud, scores);
  const std::string text = out.str();
  CHECK(text.starts_with("ply\nformat ascii 1.0\n"));
  CHECK(text.find("element vertex 2\n") != std::string::npos);
  CHECK(text.find("\n1 2 3 0.5 0 48 18 59\n") != std::string::npos);
  CHECK(text.find("\n4 5 6 0.25 1 122 4 3\n") != std::string::npos);
  const std::vector<double> short_scores = {0.0};
  CHECK_THROWS_AS(write_colored_cloud(out, cloud, short_scores), InvalidArgument);
}

TEST_CASE("attribution files round-trip") {
  const AttributionMap map = sample_map();
  std::ostringstream out;
  write_attribution(out, map);
  std::istringstream in(out.str());
  const AttributionMap back = read_attribution(in);
  CHECK(back == map);
  CHECK(back.unobserved(3));
  CHECK_FALSE(back.unobserved(1));

  std::ostringstream again;
  write_attribution(again, back);
  CHECK(again.str() == out.str());

  TempDir dir;
  write_attribution(dir / "m.attr", map);
  CHECK(read_attribution(dir / "m.attr") == map);
}

TEST_CASE("attribution file errors") {
  std::ostringstream out;
  write_attribution(out, sample_map());
  const std::string text = out.str();

  std::istringstream truncated(text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(read_attribution(truncated), FormatError);

  std::string v2 = text;
  v2.replace(v2.find(" 1\n"), 3, " 2\n");
  std::istringstream version(v2);
  try {
    read_attribution(version);
    FAIL("expected a version error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }

  std::string flag = text;
  flag.replace(flag.find("\n3 0 0 1\n"), 9, "\n3 0 0 0\n");
  std::istringstream bad_flag(flag);
  CHECK_THROWS_AS(read_attribution(bad_flag), FormatError);

  std::istringstream garbage("hello\n");
  CHECK_THROWS_AS(read_attribution(garbage), FormatError);
}

TEST_CASE("key-value files") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(0.1 + 0.2) == "0.30000000000000004");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(format_double(2.5) == "2.5");
  CHECK(std::strtod(format_double(5e-324).c_str(), nullptr) == 5e-324);

  KeyValueFile kv;
  kv.set("name", "scan 1");
  kv.set("p", 0.15);
  kv.set("n", std::uint64_t{3000});
  kv.set("flag", true);
  kv.set("p", 0.25);
  CHECK(kv.entries().size() == 4);
  CHECK(kv.entries()[1].first == "p");
  const KeyValueFile back = KeyValueFile::parse("# comment\n" + kv.to_string());
  CHECK(back.get("name") == "scan 1");
  CHECK(back.get_double("p") == 0.25);
  CHECK(back.get_uint("n") == 3000);
  CHECK(back.get_bool("flag"));
  CHECK_FALSE(back.contains("missing"));
  CHECK_THROWS_AS(back.get("missing"), FormatError);
  CHECK_THROWS_AS(back.get_uint("name"), FormatError);
  CHECK_THROWS_AS(back.get_bool("p"), FormatError);
  CHECK_THROWS_AS(KeyValueFile::parse("a = 1\na = 2\n"), FormatError);
  CHECK_THROWS_AS(KeyValueFile::parse("no separator\n"), FormatError);
}

TEST_CASE("density files") {
  DensityModel m;
  m.coeffs = {0.0671, 0.151, 3.28};
  m.lambda = calibrate_lambda(m.coeffs, 25.0, 0.15);
  TempDir dir;
  save_density(dir / "d.txt", m, 0.2);
  const StoredDensity s = load_density(dir / "d.txt");
  CHECK(s.model.coeffs.a == m.coeffs.a);
  CHECK(s.model.coeffs.b == m.coeffs.b);
  CHECK(s.model.coeffs.c == m.coeffs.c);
  CHECK(s.model.lambda == m.lambda);
  CHECK(s.voxel_edge == 0.2);
  CHECK(keep_probability(s.model, 25.0) == doctest::Approx(0.15).epsilon(1e-12));

  KeyValueFile kv = density_to_keyvalue(m, 0.2);
  kv.set("format", "maskprobe-density 9");
  CHECK_THROWS_AS(density_from_keyvalue(kv), FormatError);
  kv = density_to_keyvalue(m, 0.2);
  kv.set("p_max", 2.0);
  CHECK_THROWS_AS(density_from_keyvalue(kv), FormatError);
  CHECK_THROWS_AS(load_density(dir / "none.txt"), FormatError);
}

TEST_CASE("detection lists") {
  TempDir dir;
  const DetectionSet dets = {testing::car(10.125, -2, 0.3, 0.7), Detection("Pedestrian", 1.0 / 3.0, Box3D({5, 1, -1}, {0.9, 0.55, 1.75}, -2.0))};
  write_detections(dir / "d.txt", dets);
  CHECK(read_detections(dir / "d.txt") == dets);
  write_detections(dir / "none.txt", {});
  CHECK(read_detections(dir / "none.txt").empty());
  CHECK_THROWS_AS(write_detections(dir / "x.txt", {Detection("Big Car", 0.5, Box3D({0, 0, 0}, {1, 1, 1}, 0))}),
                  InvalidArgument);
  std::ofstream(dir / "bad.txt") << "Car 0.5 1 2 3\n";
  CHECK_THROWS_AS(read_detections(dir / "bad.txt"), FormatError);
  std::ofstream(dir / "bad2.txt") << "Car 1.5 1 2 3 1 1 1 0\n";
  CHECK_THROWS_AS(read_detections(dir / "bad2.txt"), FormatError);
}

TEST_CASE("bundles round-trip and refuse foreign directories") {
  SceneSpec spec;
  spec.seed = 3;
  spec.objects = 2;
  spec.ground_points = 800;
  spec.max_range = 20.0;
  const SyntheticScene scene = generate_scene(spec);
  MockDetector det;
  AnalysisConfig cfg;
  cfg.iterations = 30;
  cfg.seed = 5;
  cfg.density.coeffs = {0.067, 0.15, 3.28};
  cfg.density.lambda = calibrate_lambda(cfg.density.coeffs, 25.0, 0.15);
  cfg.submetrics = {SubMetric::kTranslation, SubMetric::kConfidence};
  RunBundle bundle;
  bundle.config.set("iterations", std::uint64_t{30});
  bundle.config.set("detector", "mock");
  bundle.cloud = scene.cloud;
  bundle.result = run_analysis(scene.cloud, det, cfg);
  bundle.ground_truth = scene.ground_truth();
  REQUIRE_FALSE(bundle.result.maps.empty());

  TempDir dir;
  const auto out = dir / "run";
  write_bundle(out, bundle);
  const RunBundle back = read_bundle(out);
  CHECK(back.cloud == bundle.cloud);
  CHECK(back.result.detections == bundle.result.detections);
  CHECK(back.result.maps == bundle.result.maps);
  REQUIRE(back.result.submetric_maps.size() == 2);
  CHECK(back.result.submetric_maps[1].metric == SubMetric::kConfidence);
  CHECK(back.result.submetric_maps[1].maps == bundle.result.submetric_maps[1].maps);
  CHECK(back.result.metadata.seed == 5);
  CHECK(back.result.metadata.iterations == 30);
  CHECK(back.result.metadata.lambda == bundle.result.metadata.lambda);
  CHECK(back.config.get("detector") == "mock");
  REQUIRE(back.ground_truth.has_value());
  CHECK(*back.ground_truth == *bundle.ground_truth);
  CHECK(std::filesystem::exists(bundle_map_path(out, 0, SubMetric::kTranslation)));
  CHECK_FALSE(std::filesystem::exists(out / "timing.txt"));

  // Rewriting is byte-identical; timings are opt-in.
  const std::string manifest = testing::slurp(out / "manifest.txt");
  const std::string map0 = testing::slurp(bundle_map_path(out, 0));
  write_bundle(out, bundle, BundleWriteOptions{true, 2});
  CHECK(testing::slurp(out / "manifest.txt") == manifest);
  CHECK(testing::slurp(bundle_map_path(out, 0)) == map0);
  CHECK(std::filesystem::exists(out / "timing.txt"));
  write_bundle(out, bundle);
  CHECK_FALSE(std::filesystem::exists(out / "timing.txt"));

  const auto foreign = dir / "foreign";
  std::filesystem::create_directories(foreign);
  std::ofstream(foreign / "notes.txt") << "keep me\n";
  CHECK_THROWS_AS(write_bundle(foreign, bundle), FormatError);
  CHECK(testing::slurp(foreign / "notes.txt") == "keep me\n");
  CHECK_THROWS_AS(read_bundle(foreign), FormatError);

  std::filesystem::remove(bundle_map_path(out, 0));
  CHECK_THROWS_AS(read_bundle(out), FormatError);
}
