#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "maskprobe/engine.hpp"
#include "maskprobe/errors.hpp"
#include "maskprobe/mock_detector.hpp"
#include "maskprobe/scene.hpp"
#include "maskprobe/wire_client.hpp"
#include "test_support.hpp"

using namespace maskprobe;
using namespace std::chrono_literals;

namespace {

std::string stub(const std::string& args = "") {
  return std::string("'") + MASKPROBE_STUB_SERVER + "' " + args;
}

std::unique_ptr<WireDetector> spawn(const std::string& args, std::chrono::milliseconds timeout = 20000ms) {
  return WireDetector::spawn(stub(args), WireOptions{timeout});
}

PointCloud small_scene(std::uint64_t seed) {
  SceneSpec spec;
  spec.seed = seed;
  spec.objects = 4;
  spec.ground_points = 1500;
  return generate_scene(spec).cloud;
}

void check_close(const DetectionSet& a, const DetectionSet& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].label() == b[i].label());
    CHECK(std::abs(a[i].confidence() - b[i].confidence()) <= 1e-6);
    const Box3D& x = a[i].box();
    const Box3D& y = b[i].box();
    CHECK(std::abs(x.center().x - y.center().x) <= 1e-6);
    CHECK(std::abs(x.center().y - y.center().y) <= 1e-6);
    CHECK(std::abs(x.center().z - y.center().z) <= 1e-6);
    CHECK(std::abs(x.length() - y.length()) <= 1e-6);
    CHECK(std::abs(x.width() - y.width()) <= 1e-6);
    CHECK(std::abs(x.height() - y.height()) <= 1e-6);
    CHECK(std::abs(normalize_yaw(x.yaw() - y.yaw())) <= 1e-6);
  }
}

}  // namespace

TEST_CASE("request encoding round-trips float clouds exactly") {
  const PointCloud cloud = small_scene(1);
  const std::string line = wire::encode_request(42, cloud);
  CHECK(line.find('\n') == std::string::npos);
  const auto [id, decoded] = wire::decode_request(line);
  CHECK(id == 42);
  CHECK(decoded == cloud);

  const auto [id0, empty] = wire::decode_request(wire::encode_request(0, PointCloud{}));
  CHECK(id0 == 0);
  CHECK(empty.empty());
  CHECK(wire::encode_request(7, testing::cloud_of({{1.5f, -2, 0.25f, 1}})) == R"({"id":7,"points":[[1.5,-2,0.25,1]]})");
}

TEST_CASE("request decoding rejects malformed input") {
  CHECK_THROWS_AS(wire::decode_request("not json"), ProtocolError);
  CHECK_THROWS_AS(wire::decode_request(R"({"points":[]})"), ProtocolError);
  CHECK_THROWS_AS(wire::decode_request(R"({"id":1,"points":[[1,2,3]]})"), ProtocolError);
  CHECK_THROWS_AS(wire::decode_request(R"({"id":1,"points":[[1,2,3,2]]})"), ProtocolError);
  CHECK_THROWS_AS(wire::decode_request(R"({"id":1,"points":[[1,2,"x",0]]})"), ProtocolError);
}

TEST_CASE("response encoding round-trips") {
  const DetectionSet dets = {testing::car(10, 2, 0.3, 0.75), Detection("Pedestrian", 0.125, Box3D({5, -1, -1}, {0.9, 0.55, 1.75}, -1.0))};
  const wire::Response r = wire::decode_response(wire::encode_response(9, dets));
  CHECK(r.id == 9);
  REQUIRE(r.detections.has_value());
  check_close(*r.detections, dets);

  const wire::Response e = wire::decode_response(wire::encode_error(3, "out of memory"));
  CHECK(e.id == 3);
  CHECK_FALSE(e.detections.has_value());
  CHECK(e.error == "out of memory");

  const wire::Response none = wire::decode_response(R"({"id":4,"detections":[]})");
  REQUIRE(none.detections.has_value());
  CHECK(none.detections->empty());
}

TEST_CASE("response decoding validates detections") {
  CHECK_THROWS_AS(wire::decode_response(R"({"id":1,"detections":[{"label":"Car","score":1.3,"box":[0,0,0,1,1,1,0]}]})"),
                  ProtocolError);
  CHECK_THROWS_AS(wire::decode_response(R"({"id":1,"detections":[{"label":"Car","score":0.5,"box":[0,0,0,1,1,1]}]})"),
                  ProtocolError);
  CHECK_THROWS_AS(wire::decode_response(R"({"id":1,"detections":[{"label":"Car","score":0.5,"box":[0,0,0,-1,1,1,0]}]})"),
                  ProtocolError);
  CHECK_THROWS_AS(wire::decode_response(R"({"id":1,"detections":[{"label":"Car","box":[0,0,0,1,1,1,0]}]})"),
                  ProtocolError);
  CHECK_THROWS_AS(wire::decode_response(R"({"detections":[]})"), ProtocolError);
  CHECK_THROWS_AS(wire::decode_response("[1,2]"), ProtocolError);
  const wire::Response numeric = wire::decode_response(R"({"id":1,"detections":[{"label":2,"score":0.5,"box":[0,0,0,1,1,1,0]}]})");
  CHECK((*numeric.detections)[0].label() == "2");
}

TEST_CASE("handshake round-trips and validates") {
  wire::Handshake h;
  h.model_name = "m";
  h.classes = {"Car", "Pedestrian"};
  h.max_batch = 4;
  h.supports_empty_cloud = true;
  const wire::Handshake back = wire::decode_handshake(wire::encode_handshake(h));
  CHECK(back.protocol_version == kWireProtocolVersion);
  CHECK(back.model_name == "m");
  CHECK(back.classes == h.classes);
  CHECK(back.max_batch == 4);
  CHECK(back.supports_empty_cloud);
  CHECK_THROWS_AS(wire::decode_handshake(R"({"protocol_version":1,"model_name":"m","classes":[],"max_batch":0,"supports_empty_cloud":false})"),
                  ProtocolError);
  CHECK_THROWS_AS(wire::decode_handshake("{}"), ProtocolError);
}

TEST_CASE("stub server in mock mode matches the in-process detector") {
  auto det = spawn("--mode mock --max-batch 3");
  CHECK(det->handshake().model_name == "mock-cluster");
  CHECK(det->capabilities().max_batch == 3);
  CHECK_FALSE(det->capabilities().reentrant);
  std::vector<PointCloud> clouds;
  for (std::uint64_t s = 0; s < 7; ++s) {
    clouds.push_back(small_scene(s));
  }
  const auto remote = det->detect_batch(clouds);
  REQUIRE(remote.size() == clouds.size());
  MockDetector local;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    check_close(remote[i], local.run(clouds[i]));
  }
  CHECK(det->wire_calls() == 7);
}

TEST_CASE("responses answered out of order are matched by id") {
  auto det = spawn("--mode mock --reverse --max-batch 4");
  std::vector<PointCloud> clouds;
  for (std::uint64_t s = 0; s < 6; ++s) {
    clouds.push_back(small_scene(10 + s));
  }
  const auto remote = det->detect_batch(clouds);
  MockDetector local;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    check_close(remote[i], local.run(clouds[i]));
  }
}

TEST_CASE("fixture responses decode exactly") {
  auto det = spawn("--mode fixture");
  const DetectionSet d = det->detect(small_scene(2));
  REQUIRE(d.size() == 1);
  CHECK(d[0] == Detection("Car", 0.75, Box3D({10.0, 2.0, -0.9}, {3.9, 1.6, 1.5}, 0.3)));
}

TEST_CASE("empty clouds are answered locally unless the server accepts them") {
  const std::vector<PointCloud> batch = {small_scene(3), PointCloud{}, small_scene(3)};
  auto det = spawn("--mode mock");
  CHECK_FALSE(det->capabilities().supports_empty_cloud);
  const auto out = det->detect_batch(batch);
  CHECK(out[1].empty());
  CHECK(out[0] == out[2]);
  CHECK(det->wire_calls() == 2);

  auto eager = spawn("--mode mock --empty-ok");
  CHECK(eager->capabilities().supports_empty_cloud);
  const auto out2 = eager->detect_batch(batch);
  CHECK(out2[1].empty());
  CHECK(eager->wire_calls() == 3);
}

TEST_CASE("misbehaving servers raise typed errors") {
  const std::vector<PointCloud> one = {small_scene(4)};
  const std::vector<PointCloud> two = {small_scene(4), small_scene(5)};
  CHECK_THROWS_AS(spawn("--mode bad-score")->detect_batch(one), ProtocolError);
  CHECK_THROWS_AS(spawn("--mode garbage")->detect_batch(one), ProtocolError);
  CHECK_THROWS_AS(spawn("--mode exit")->detect_batch(one), ProtocolError);
  CHECK_THROWS_AS(spawn("--mode unknown-id")->detect_batch(one), ProtocolError);
  CHECK_THROWS_AS(spawn("--mode duplicate --max-batch 2")->detect_batch(two), ProtocolError);
  CHECK_THROWS_AS(spawn("--mode error")->detect_batch(one), DetectorError);
  const auto t0 = std::chrono::steady_clock::now();
  CHECK_THROWS_AS(spawn("--mode silent", 300ms)->detect_batch(one), ProtocolError);
  CHECK(std::chrono::steady_clock::now() - t0 < 10s);
  CHECK_THROWS_AS(spawn("--protocol-version 2"), ProtocolError);
  CHECK_THROWS_AS(WireDetector::spawn("exit 0", WireOptions{2000ms}), ProtocolError);
  CHECK_THROWS_AS(WireDetector::spawn("echo hello", WireOptions{2000ms}), ProtocolError);
}

TEST_CASE("tcp transport") {
  testing::TempDir dir;
  const auto port_file = dir / "port";
  std::thread server([&] { testing::run_command(stub("--mode mock --tcp 0 --port-file '" + port_file.string() + "'")); });
  for (int i = 0; i < 500 && !std::filesystem::exists(port_file); ++i) {
    std::this_thread::sleep_for(10ms);
  }
  REQUIRE(std::filesystem::exists(port_file));
  const int port = std::stoi(testing::slurp(port_file));
  {
    auto det = WireDetector::connect("127.0.0.1", static_cast<std::uint16_t>(port), WireOptions{20000ms});
    const PointCloud cloud = small_scene(6);
    check_close(det->detect(cloud), MockDetector().run(cloud));
  }
  server.join();
  CHECK_THROWS_AS(WireDetector::connect("127.0.0.1", 1, WireOptions{1000ms}), ProtocolError);
}

TEST_CASE("analysis through the wire matches the in-process detector") {
  SceneSpec spec;
  spec.seed = 31;
  spec.objects = 3;
  spec.ground_points = 2000;
  spec.max_range = 25.0;
  const PointCloud cloud = generate_scene(spec).cloud;
  AnalysisConfig cfg;
  cfg.iterations = 60;
  cfg.seed = 4;
  cfg.batch_size = 5;
  cfg.workers = 2;
  cfg.density.coeffs = {0.067, 0.15, 3.28};
  cfg.density.lambda = calibrate_lambda(cfg.density.coeffs, 25.0, 0.15);
  MockDetector local;
  const AnalysisResult a = run_analysis(cloud, local, cfg);
  auto remote = spawn("--mode mock --max-batch 4");
  const AnalysisResult b = run_analysis(cloud, *remote, cfg);
  REQUIRE_FALSE(a.maps.empty());
  REQUIRE(a.maps.size() == b.maps.size());
  for (std::size_t k = 0; k < a.maps.size(); ++k) {
    for (std::size_t j = 0; j < cloud.size(); ++j) {
      CHECK(std::abs(a.maps[k].scores()[j] - b.maps[k].scores()[j]) <= 1e-6);
    }
    CHECK(a.maps[k].visible_counts().size() == b.maps[k].visible_counts().size());
  }
}
