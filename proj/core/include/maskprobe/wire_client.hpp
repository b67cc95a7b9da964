#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "maskprobe/detector.hpp"

namespace maskprobe {

inline constexpr int kWireProtocolVersion = 1;

/// Bidirectional line transport to an external detector.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  /// Writes `line` followed by '\n'. Throws ProtocolError if the peer is gone.
  virtual void write_line(std::string_view line) = 0;
  /// Next line without its terminator. Throws ProtocolError on timeout or EOF.
  virtual std::string read_line(std::chrono::milliseconds timeout) = 0;
};

/// Spawns `/bin/sh -c command` and talks over its stdin/stdout.
std::unique_ptr<LineChannel> spawn_process_channel(const std::string& command);
/// Connects to host:port over TCP.
std::unique_ptr<LineChannel> connect_tcp_channel(const std::string& host, std::uint16_t port);

struct WireOptions {
  std::chrono::milliseconds timeout{60000};
};

/// Wire-protocol encoding, shared by the client, the reference stub server and tests.
namespace wire {

struct Handshake {
  int protocol_version = kWireProtocolVersion;
  std::string model_name;
  std::vector<Label> classes;
  std::size_t max_batch = 1;
  bool supports_empty_cloud = false;
};

std::string encode_handshake(const Handshake& h);
Handshake decode_handshake(std::string_view line);

/// {"id":N,"points":[[x,y,z,i],...]} with 9 significant digits per value.
std::string encode_request(std::uint64_t id, const PointCloud& cloud);
std::pair<std::uint64_t, PointCloud> decode_request(std::string_view line);

/// {"id":N,"detections":[{"label":..,"score":..,"box":[cx,cy,cz,dx,dy,dz,yaw]}]}
std::string encode_response(std::uint64_t id, const DetectionSet& detections);
std::string encode_error(std::uint64_t id, std::string_view message);

struct Response {
  std::uint64_t id = 0;
  std::optional<DetectionSet> detections;  ///< empty when the server reported an error
  std::string error;
};

/// Validates every detection against the core invariants; throws ProtocolError
/// naming the offending line.
Response decode_response(std::string_view line);

}  // namespace wire

/// Detector reached through the line protocol. One batch is in flight at a
/// time, split into windows of at most max_batch requests; responses within a
/// window may arrive in any order.
class WireDetector final : public DetectorBackend {
 public:
  WireDetector(std::unique_ptr<LineChannel> channel, WireOptions options = {});

  static std::unique_ptr<WireDetector> spawn(const std::string& command, WireOptions options = {});
  static std::unique_ptr<WireDetector> connect(const std::string& host, std::uint16_t port, WireOptions options = {});

  const DetectorCapabilities& capabilities() const override { return caps_; }
  std::vector<DetectionSet> detect_batch(std::span<const PointCloud> clouds) override;

  const wire::Handshake& handshake() const noexcept { return handshake_; }
  std::uint64_t wire_calls() const noexcept { return next_id_; }

 private:
  std::unique_ptr<LineChannel> channel_;
  WireOptions options_;
  wire::Handshake handshake_;
  DetectorCapabilities caps_;
  std::uint64_t next_id_ = 0;
  std::mutex mutex_;
};

}  // namespace maskprobe
