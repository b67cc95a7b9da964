#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "maskprobe/types.hpp"

namespace maskprobe {

struct DetectorCapabilities {
  std::string model_name;
  std::vector<Label> classes;
  std::size_t max_batch = 1;
  bool supports_empty_cloud = true;
  /// Whether detect_batch may be called from several threads at once.
  bool reentrant = true;
};

/// The black box under analysis. detect_batch must be a pure function of each
/// cloud for a fixed backend configuration.
class DetectorBackend {
 public:
  virtual ~DetectorBackend() = default;

  virtual const DetectorCapabilities& capabilities() const = 0;
  virtual std::vector<DetectionSet> detect_batch(std::span<const PointCloud> clouds) = 0;

  DetectionSet detect(const PointCloud& cloud);
};

/// Adapts a plain function; handy for stubs with hand-designed behavior.
class FunctionDetector final : public DetectorBackend {
 public:
  using Fn = std::function<DetectionSet(const PointCloud&)>;

  explicit FunctionDetector(Fn fn, std::string name = "function");

  const DetectorCapabilities& capabilities() const override { return caps_; }
  std::vector<DetectionSet> detect_batch(std::span<const PointCloud> clouds) override;

 private:
  Fn fn_;
  DetectorCapabilities caps_;
};

}  // namespace maskprobe
