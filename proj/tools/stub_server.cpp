// Reference peer for the detector wire protocol. Serves the built-in mock
// detector or one of several misbehaving modes used to test the client.

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>
#include <fmt/format.h>

#include "maskprobe/errors.hpp"
#include "maskprobe/mock_detector.hpp"
#include "maskprobe/wire_client.hpp"

using namespace maskprobe;

namespace {

struct Options {
  std::string mode = "mock";
  bool reverse = false;
  std::size_t max_batch = 8;
  int version = kWireProtocolVersion;
  bool empty_ok = false;
  int tcp_port = -1;
  std::string port_file;
  long gather_ms = 20;
};

class LineIo {
 public:
  LineIo(int in, int out) : in_(in), out_(out) {}

  // Returns false on EOF. With wait_ms >= 0, also false when nothing arrives in time.
  bool read_line(std::string& line, int wait_ms) {
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return true;
      }
      if (eof_) {
        return false;
      }
      pollfd pfd{in_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, wait_ms);
      if (ready < 0 && errno == EINTR) {
        continue;
      }
      if (ready <= 0) {
        return false;
      }
      char chunk[65536];
      const ssize_t n = ::read(in_, chunk, sizeof(chunk));
      if (n < 0 && errno == EINTR) {
        continue;
      }
      if (n <= 0) {
        eof_ = true;
        continue;
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }


  void write_line(const std::string& line) {
    std::string data = line + "\n";
    std::size_t done = 0;
    while (done < data.size()) {
      const ssize_t n = ::write(out_, data.data() + done, data.size() - done);
      if (n < 0 && errno == EINTR) {
        continue;
      }
      if (n <= 0) {
        std::exit(0);
      }
      done += static_cast<std::size_t>(n);
    }
  }

 private:
  int in_;
  int out_;
  std::string buffer_;
  bool eof_ = false;
};

DetectionSet fixture() {
  return {Detection("Car", 0.75, Box3D({10.0, 2.0, -0.9}, {3.9, 1.6, 1.5}, 0.3))};
}

std::string respond(const Options& opt, const MockDetector& mock, std::uint64_t id, const PointCloud& cloud) {
  if (opt.mode == "fixture") {
    return wire::encode_response(id, fixture());
  }
  if (opt.mode == "bad-score") {
    return fmt::format(
        R"({{"id":{},"detections":[{{"label":"Car","score":1.3,"box":[10,2,-0.9,3.9,1.6,1.5,0.3]}}]}})", id);
  }
  if (opt.mode == "garbage") {
    return "this is not a response";
  }
  if (opt.mode == "error") {
    return wire::encode_error(id, "detector crashed");
  }
  if (opt.mode == "unknown-id") {
    return wire::encode_response(id + 1000, {});
  }
  return wire::encode_response(id, mock.run(cloud));
}

int serve(const Options& opt, LineIo& io) {
  MockDetector mock;
  wire::Handshake h;
  h.protocol_version = opt.version;
  h.model_name = opt.mode == "mock" ? "mock-cluster" : "stub-" + opt.mode;
  for (const auto& gate : mock.config().classes) {
    h.classes.push_back(gate.label);
  }
  h.max_batch = opt.max_batch;
  h.supports_empty_cloud = opt.empty_ok;
  io.write_line(wire::encode_handshake(h));

  std::string line;
  while (io.read_line(line, -1)) {
    // Gather whatever else of the window has already been sent.
    std::vector<std::string> window{line};
    while (window.size() < opt.max_batch && io.read_line(line, static_cast<int>(opt.gather_ms))) {
      window.push_back(line);
    }
    if (opt.mode == "exit") {
      return 3;
    }
    if (opt.mode == "silent") {
      continue;
    }
    std::vector<std::string> replies;
    for (const std::string& request : window) {
      try {
        const auto [id, cloud] = wire::decode_request(request);
        replies.push_back(respond(opt, mock, id, cloud));
        if (opt.mode == "duplicate") {
          replies.push_back(replies.back());
        }
      } catch (const ProtocolError& e) {
        replies.push_back(nlohmann::json{{"error", e.what()}}.dump());
      }
    }
    if (opt.reverse) {
      std::reverse(replies.begin(), replies.end());
    }
    for (const auto& r : replies) {
      io.write_line(r);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wire-protocol stub detector"};
  Options opt;
  app.add_option("--mode", opt.mode)
      ->check(CLI::IsMember({"mock", "fixture", "bad-score", "garbage", "exit", "silent", "duplicate", "error",
                             "unknown-id"}));
  app.add_flag("--reverse", opt.reverse, "Answer each window in reverse order");
  app.add_option("--max-batch", opt.max_batch)->check(CLI::PositiveNumber);
  app.add_option("--protocol-version", opt.version);
  app.add_flag("--empty-ok", opt.empty_ok, "Advertise support for empty clouds");
  app.add_option("--tcp", opt.tcp_port, "Listen on this TCP port (0 = any) instead of stdio");
  app.add_option("--port-file", opt.port_file, "Write the bound TCP port here");
  app.add_option("--gather-ms", opt.gather_ms, "How long to wait for more requests of one window");
  CLI11_PARSE(app, argc, argv);

  if (opt.tcp_port < 0) {
    LineIo io(STDIN_FILENO, STDOUT_FILENO);
    return serve(opt, io);
  }

  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  int yes = 1;
  ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(opt.tcp_port));
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(listener, 1) != 0) {
    std::fprintf(stderr, "stub server: cannot listen: %s\n", std::strerror(errno));
    return 1;
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len);
  if (!opt.port_file.empty()) {
    const std::string tmp = opt.port_file + ".tmp";
    std::ofstream(tmp) << ntohs(addr.sin_port) << '\n';
    std::rename(tmp.c_str(), opt.port_file.c_str());
  }
  const int conn = ::accept(listener, nullptr, nullptr);
  ::close(listener);
  if (conn < 0) {
    return 1;
  }
  LineIo io(conn, conn);
  const int rc = serve(opt, io);
  ::close(conn);
  return rc;
}
