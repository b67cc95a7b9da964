#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "maskprobe/detector.hpp"
#include "maskprobe/types.hpp"

namespace maskprobe::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string pattern = (std::filesystem::temp_directory_path() / "maskprobe-test-XXXXXX").string();
    path_ = ::mkdtemp(pattern.data());
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline PointCloud cloud_of(std::vector<Point> points) {
  return PointCloud(std::move(points));
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline Detection car(double x, double y, double yaw = 0.0, double confidence = 1.0) {
  return Detection("Car", confidence, Box3D({x, y, -0.98}, {3.9, 1.6, 1.5}, yaw));
}

/// Runs a shell command, returning its exit status; stdout+stderr go to `output`.
inline int run_command(const std::string& command, std::string* output = nullptr) {
  static int counter = 0;
  const auto log = std::filesystem::temp_directory_path() /
                   ("maskprobe-cmd-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + ".log");
  const int status = std::system((command + " > '" + log.string() + "' 2>&1").c_str());
  if (output != nullptr) {
    *output = slurp(log);
  }
  std::filesystem::remove(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace maskprobe::testing
