#include "maskprobe/wire_client.hpp"

#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>
#include <map>
#include <thread>

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fmt/format.h>
#include <json.hpp>

#include "maskprobe/errors.hpp"

extern char** environ;

namespace maskprobe {

namespace {

using json = nlohmann::json;

std::string excerpt(std::string_view line) {
  constexpr std::size_t kMax = 200;
  if (line.size() <= kMax) {
    return std::string(line);
  }
  return std::string(line.substr(0, kMax)) + "...";
}

void ignore_sigpipe() {
  static const bool once = [] {
    std::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)once;
}

// Buffered line I/O over a pair of file descriptors.
class FdLineIo {
 public:
  FdLineIo(int read_fd, int write_fd) : read_fd_(read_fd), write_fd_(write_fd) {}

  void write_line(std::string_view line) {
    std::string data(line);
    data.push_back('\n');
    std::size_t done = 0;
    while (done < data.size()) {
      const ssize_t n = ::write(write_fd_, data.data() + done, data.size() - done);
      if (n < 0) {
        if (errno == EINTR) {
          continue;
        }
        throw ProtocolError(fmt::format("detector connection closed while writing: {}", std::strerror(errno)));
      }
      done += static_cast<std::size_t>(n);
    }
  }

  std::string read_line(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      const auto newline = buffer_.find('\n', scanned_);
      if (newline != std::string::npos) {
        std::string line = buffer_.substr(0, newline);
        buffer_.erase(0, newline + 1);
        scanned_ = 0;
        if (!line.empty() && line.back() == '\r') {
          line.pop_back();
        }
        return line;
      }
      scanned_ = buffer_.size();
      const auto remaining =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (remaining.count() <= 0) {
        throw ProtocolError(fmt::format("timed out after {} ms waiting for the detector", timeout.count()));
      }
      pollfd pfd{read_fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining.count(), 1 << 30)));
      if (ready < 0) {
        if (errno == EINTR) {
          continue;
        }
        throw ProtocolError(fmt::format("poll failed: {}", std::strerror(errno)));
      }
      if (ready == 0) {
        continue;
      }
      char chunk[65536];
      const ssize_t n = ::read(read_fd_, chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) {
          continue;
        }
        throw ProtocolError(fmt::format("read from detector failed: {}", std::strerror(errno)));
      }
      if (n == 0) {
        throw ProtocolError("detector closed the connection (process exited?)");
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int read_fd_;
  int write_fd_;
  std::string buffer_;
  std::size_t scanned_ = 0;
};

class ProcessChannel final : public LineChannel {
 public:
  explicit ProcessChannel(const std::string& command) {
    ignore_sigpipe();
    int to_child[2];
    int from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0 || ::pipe2(from_child, O_CLOEXEC) != 0) {
      throw ProtocolError(fmt::format("cannot create pipes: {}", std::strerror(errno)));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);
    std::string shell = "/bin/sh";
    std::string flag = "-c";
    std::string cmd = command;
    char* argv[] = {shell.data(), flag.data(), cmd.data(), nullptr};
    const int rc = ::posix_spawn(&pid_, "/bin/sh", &actions, nullptr, argv, environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(to_child[0]);
    ::close(from_child[1]);
    if (rc != 0) {
      ::close(to_child[1]);
      ::close(from_child[0]);
      throw ProtocolError(fmt::format("cannot spawn detector '{}': {}", command, std::strerror(rc)));
    }
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    io_ = std::make_unique<FdLineIo>(read_fd_, write_fd_);
  }

  ~ProcessChannel() override {
    ::close(write_fd_);
    ::close(read_fd_);
    int status = 0;
    for (int i = 0; i < 100; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) != 0) {
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
  }

  void write_line(std::string_view line) override { io_->write_line(line); }
  std::string read_line(std::chrono::milliseconds timeout) override { return io_->read_line(timeout); }

 private:
  pid_t pid_ = -1;
  int write_fd_ = -1;
  int read_fd_ = -1;
  std::unique_ptr<FdLineIo> io_;
};

class TcpChannel final : public LineChannel {
 public:
  TcpChannel(const std::string& host, std::uint16_t port) {
    ignore_sigpipe();
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* found = nullptr;
    const std::string service = std::to_string(port);
    if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &found); rc != 0) {
      throw ProtocolError(fmt::format("cannot resolve {}:{}: {}", host, port, ::gai_strerror(rc)));
    }
    for (addrinfo* a = found; a != nullptr; a = a->ai_next) {
      const int fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
      if (fd < 0) {
        continue;
      }
      if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) {
        fd_ = fd;
        break;
      }
      ::close(fd);
    }
    ::freeaddrinfo(found);
    if (fd_ < 0) {
      throw ProtocolError(fmt::format("cannot connect to detector at {}:{}", host, port));
    }
    io_ = std::make_unique<FdLineIo>(fd_, fd_);
  }

  ~TcpChannel() override { ::close(fd_); }

  void write_line(std::string_view line) override { io_->write_line(line); }
  std::string read_line(std::chrono::milliseconds timeout) override { return io_->read_line(timeout); }

 private:
  int fd_ = -1;
  std::unique_ptr<FdLineIo> io_;
};

json parse_object(std::string_view line, std::string_view what) {
  json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ProtocolError(fmt::format("malformed {} line: {}", what, excerpt(line)));
  }
  return j;
}

double finite_number(const json& v, std::string_view line) {
  if (!v.is_number()) {
    throw ProtocolError(fmt::format("expected a number in line: {}", excerpt(line)));
  }
  const double d = v.get<double>();
  if (!std::isfinite(d)) {
    throw ProtocolError(fmt::format("non-finite number in line: {}", excerpt(line)));
  }
  return d;
}

std::uint64_t request_id(const json& j, std::string_view line) {
  const auto it = j.find("id");
  if (it == j.end() || !it->is_number_unsigned()) {
    throw ProtocolError(fmt::format("missing or invalid id in line: {}", excerpt(line)));
  }
  return it->get<std::uint64_t>();
}

}  // namespace

std::unique_ptr<LineChannel> spawn_process_channel(const std::string& command) {
  return std::make_unique<ProcessChannel>(command);
}

std::unique_ptr<LineChannel> connect_tcp_channel(const std::string& host, std::uint16_t port) {
  return std::make_unique<TcpChannel>(host, port);
}

namespace wire {

std::string encode_handshake(const Handshake& h) {
  json j;
  j["protocol_version"] = h.protocol_version;
  j["model_name"] = h.model_name;
  j["classes"] = h.classes;
  j["max_batch"] = h.max_batch;
  j["supports_empty_cloud"] = h.supports_empty_cloud;
  return j.dump();
}

Handshake decode_handshake(std::string_view line) {
  const json j = parse_object(line, "handshake");
  Handshake h;
  try {
    h.protocol_version = j.at("protocol_version").get<int>();
    h.model_name = j.at("model_name").get<std::string>();
    h.classes = j.at("classes").get<std::vector<std::string>>();
    h.max_batch = j.at("max_batch").get<std::size_t>();
    h.supports_empty_cloud = j.value("supports_empty_cloud", false);
  } catch (const json::exception&) {
    throw ProtocolError(fmt::format("incomplete handshake: {}", excerpt(line)));
  }
  if (h.max_batch < 1) {
    throw ProtocolError(fmt::format("handshake max_batch must be at least 1: {}", excerpt(line)));
  }
  return h;
}

std::string encode_request(std::uint64_t id, const PointCloud& cloud) {
  std::string out = fmt::format("{{\"id\":{},\"points\":[", id);
  out.reserve(out.size() + cloud.size() * 48);
  bool first = true;
  for (const Point& p : cloud) {
    fmt::format_to(std::back_inserter(out), "{}[{:.9g},{:.9g},{:.9g},{:.9g}]", first ? "" : ",",
                   static_cast<double>(p.x), static_cast<double>(p.y), static_cast<double>(p.z),
                   static_cast<double>(p.intensity));
    first = false;
  }
  out += "]}";
  return out;
}

std::pair<std::uint64_t, PointCloud> decode_request(std::string_view line) {
  const json j = parse_object(line, "request");
  const std::uint64_t id = request_id(j, line);
  const auto it = j.find("points");
  if (it == j.end() || !it->is_array()) {
    throw ProtocolError(fmt::format("request without a points array: {}", excerpt(line)));
  }
  std::vector<Point> points;
  points.reserve(it->size());
  for (const json& row : *it) {
    if (!row.is_array() || row.size() != 4) {
      throw ProtocolError(fmt::format("each point must have 4 values: {}", excerpt(line)));
    }
    points.push_back({static_cast<float>(finite_number(row[0], line)), static_cast<float>(finite_number(row[1], line)),
                      static_cast<float>(finite_number(row[2], line)), static_cast<float>(finite_number(row[3], line))});
  }
  try {
    return {id, PointCloud(std::move(points))};
  } catch (const InvalidArgument& e) {
    throw ProtocolError(fmt::format("invalid point in request {}: {}", id, e.what()));
  }
}

std::string encode_response(std::uint64_t id, const DetectionSet& detections) {
  std::string out = fmt::format("{{\"id\":{},\"detections\":[", id);
  bool first = true;
  for (const Detection& d : detections) {
    const Box3D& b = d.box();
    fmt::format_to(std::back_inserter(out),
                   "{}{{\"label\":{},\"score\":{:.9g},\"box\":[{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}]}}",
                   first ? "" : ",", json(d.label()).dump(), d.confidence(), b.center().x, b.center().y,
                   b.center().z, b.dims().x, b.dims().y, b.dims().z, b.yaw());
    first = false;
  }
  out += "]}";
  return out;
}

std::string encode_error(std::uint64_t id, std::string_view message) {
  json j;
  j["id"] = id;
  j["error"] = std::string(message);
  return j.dump();
}

Response decode_response(std::string_view line) {
  const json j = parse_object(line, "response");
  Response r;
  r.id = request_id(j, line);
  if (const auto err = j.find("error"); err != j.end()) {
    r.error = err->is_string() ? err->get<std::string>() : err->dump();
    return r;
  }
  const auto dets = j.find("detections");
  if (dets == j.end() || !dets->is_array()) {
    throw ProtocolError(fmt::format("response without detections: {}", excerpt(line)));
  }
  DetectionSet out;
  out.reserve(dets->size());
  for (const json& d : *dets) {
    if (!d.is_object()) {
      throw ProtocolError(fmt::format("detection is not an object: {}", excerpt(line)));
    }
    const auto label = d.find("label");
    const auto score = d.find("score");
    const auto box = d.find("box");
    if (label == d.end() || score == d.end() || box == d.end() || !box->is_array() || box->size() != 7) {
      throw ProtocolError(fmt::format("detection needs label, score and a 7-value box: {}", excerpt(line)));
    }
    std::string name;
    if (label->is_string()) {
      name = label->get<std::string>();
    } else if (label->is_number_integer()) {
      name = std::to_string(label->get<std::int64_t>());
    } else {
      throw ProtocolError(fmt::format("label must be a string or integer: {}", excerpt(line)));
    }
    double v[7];
    for (std::size_t i = 0; i < 7; ++i) {
      v[i] = finite_number((*box)[i], line);
    }
    const double confidence = finite_number(*score, line);
    try {
      out.emplace_back(std::move(name), confidence, Box3D({v[0], v[1], v[2]}, {v[3], v[4], v[5]}, v[6]));
    } catch (const InvalidArgument& e) {
      throw ProtocolError(fmt::format("invalid detection ({}): {}", e.what(), excerpt(line)));
    }
  }
  r.detections = std::move(out);
  return r;
}

}  // namespace wire

WireDetector::WireDetector(std::unique_ptr<LineChannel> channel, WireOptions options)
    : channel_(std::move(channel)), options_(options) {
  handshake_ = wire::decode_handshake(channel_->read_line(options_.timeout));
  if (handshake_.protocol_version != kWireProtocolVersion) {
    throw ProtocolError(fmt::format("detector speaks protocol version {}, expected {}", handshake_.protocol_version,
                                    kWireProtocolVersion));
  }
  caps_.model_name = handshake_.model_name;
  caps_.classes = handshake_.classes;
  caps_.max_batch = handshake_.max_batch;
  caps_.supports_empty_cloud = handshake_.supports_empty_cloud;
  caps_.reentrant = false;
}

std::unique_ptr<WireDetector> WireDetector::spawn(const std::string& command, WireOptions options) {
  return std::make_unique<WireDetector>(spawn_process_channel(command), options);
}

std::unique_ptr<WireDetector> WireDetector::connect(const std::string& host, std::uint16_t port, WireOptions options) {
  return std::make_unique<WireDetector>(connect_tcp_channel(host, port), options);
}

std::vector<DetectionSet> WireDetector::detect_batch(std::span<const PointCloud> clouds) {
  std::lock_guard lock(mutex_);
  std::vector<DetectionSet> results(clouds.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    if (!clouds[i].empty() || caps_.supports_empty_cloud) {
      pending.push_back(i);
    }
  }
  for (std::size_t first = 0; first < pending.size(); first += caps_.max_batch) {
    const std::size_t count = std::min(caps_.max_batch, pending.size() - first);
    std::map<std::uint64_t, std::size_t> in_flight;
    for (std::size_t w = 0; w < count; ++w) {
      const std::size_t slot = pending[first + w];
      const std::uint64_t id = next_id_++;
      in_flight.emplace(id, slot);
      channel_->write_line(wire::encode_request(id, clouds[slot]));
    }
    while (!in_flight.empty()) {
      const std::string line = channel_->read_line(options_.timeout);
      wire::Response response = wire::decode_response(line);
      const auto it = in_flight.find(response.id);
      if (it == in_flight.end()) {
        throw ProtocolError(fmt::format("response for unknown or already answered id {}: {}", response.id,
                                        excerpt(line)));
      }
      if (!response.detections) {
        throw DetectorError(fmt::format("detector reported an error for request {}: {}", response.id, response.error));
      }
      results[it->second] = std::move(*response.detections);
      in_flight.erase(it);
    }
  }
  return results;
}

}  // namespace maskprobe
