#pragma once

#include <cstddef>
#include <vector>

#include "maskprobe/detector.hpp"

namespace maskprobe {

/// Size gate and evidence scale for one class. A cluster whose fitted BEV
/// length falls in [min_length, max_length) gets this label.
struct MockClassGate {
  Label label;
  double min_length = 0.0;
  double max_length = 0.0;
  double evidence_ref = 1.0;  ///< occupied evidence cells worth one unit of evidence
  double marker_ref = 1.0;    ///< occupied marker cells worth one unit of marker evidence
};

/// A deterministic clustering detector with analyzable saliency: marker
/// returns (high intensity) matter more than plain surface returns, and
/// ground returns do not matter at all.
///
/// confidence = sigmoid(w_evidence * min(cells / evidence_ref, evidence_cap)
///                      + w_marker * min(marker_cells / marker_ref, marker_cap) - bias)
///
/// `cells` and `marker_cells` count distinct occupied evidence_cell voxels
/// (all returns, and marker returns only).
struct MockDetectorConfig {
  double cluster_cell = 1.0;
  double evidence_cell = 0.2;
  double ground_z = -1.73;
  double ground_clearance = 0.15;
  std::size_t min_points = 5;
  float marker_intensity = 0.9f;
  double w_evidence = 3.0;
  double w_marker = 2.5;
  double bias = 4.5;
  double evidence_cap = 2.0;
  double marker_cap = 1.5;
  double min_confidence = 0.0;
  std::vector<MockClassGate> classes = default_classes();

  static std::vector<MockClassGate> default_classes();
};

class MockDetector final : public DetectorBackend {
 public:
  explicit MockDetector(MockDetectorConfig config = {});

  const DetectorCapabilities& capabilities() const override { return caps_; }
  std::vector<DetectionSet> detect_batch(std::span<const PointCloud> clouds) override;

  DetectionSet run(const PointCloud& cloud) const;
  const MockDetectorConfig& config() const noexcept { return config_; }

 private:
  MockDetectorConfig config_;
  DetectorCapabilities caps_;
};

}  // namespace maskprobe
