#include "maskprobe/detector.hpp"

#include "maskprobe/errors.hpp"

namespace maskprobe {

DetectionSet DetectorBackend::detect(const PointCloud& cloud) {
  auto out = detect_batch(std::span<const PointCloud>(&cloud, 1));
  if (out.size() != 1) {
    throw DetectorError("detector returned the wrong number of results");
  }
  return std::move(out.front());
}

FunctionDetector::FunctionDetector(Fn fn, std::string name) : fn_(std::move(fn)) {
  caps_.model_name = std::move(name);
  caps_.max_batch = 64;
}

std::vector<DetectionSet> FunctionDetector::detect_batch(std::span<const PointCloud> clouds) {
  std::vector<DetectionSet> out;
  out.reserve(clouds.size());
  for (const PointCloud& c : clouds) {
    out.push_back(fn_(c));
  }
  return out;
}

}  // namespace maskprobe
