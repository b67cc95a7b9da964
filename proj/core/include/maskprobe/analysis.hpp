#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "maskprobe/detector.hpp"
#include "maskprobe/similarity.hpp"
#include "maskprobe/types.hpp"

namespace maskprobe {

/// A cloud together with the attribution maps computed on it.
struct AttributedCloud {
  PointCloud cloud;
  std::vector<AttributionMap> maps;
};

/// Normalized box frame: translate to the center, rotate by -yaw, divide by
/// dims. The box itself becomes [-0.5, 0.5]^3 with its front at +x.
Vec3 to_box_frame(const Box3D& box, const Vec3& p);
Vec3 from_box_frame(const Box3D& box, const Vec3& u);

struct AverageMapOptions {
  std::array<std::size_t, 3> resolution{32, 32, 16};
  /// Points up to margin/2 of a dimension outside each face land in margin cells.
  double margin = 0.10;
};

/// Class-averaged attribution over a voxel grid in the normalized box frame.
/// Axis a has resolution[a] cells across the box plus margin_cells[a] on each side.
struct AverageAttributionMap {
  Label label;
  std::array<std::size_t, 3> resolution{};
  std::array<std::size_t, 3> margin_cells{};
  double margin = 0.0;
  std::size_t detections = 0;
  std::vector<double> score_sum;
  std::vector<double> intensity_sum;
  std::vector<std::uint64_t> count;

  std::array<std::size_t, 3> shape() const;
  std::size_t cell_count() const { return count.size(); }
  std::size_t index(std::size_t ix, std::size_t iy, std::size_t iz) const;
  /// Center of a cell in normalized box coordinates.
  Vec3 cell_center(std::size_t ix, std::size_t iy, std::size_t iz) const;
  double mean_score(std::size_t cell) const;
  double mean_intensity(std::size_t cell) const;
};

/// Averages every map whose target carries `label`. Unobserved points are skipped.
/// Throws InsufficientData when no target has the label.
AverageAttributionMap average_maps(std::span<const AttributedCloud> results, const Label& label,
                                   const AverageMapOptions& options = {});

enum class DropOrder { kDescending, kAscending, kRandom };

std::string_view to_string(DropOrder order);

struct DropCurveOptions {
  std::vector<double> fractions = default_fractions();
  std::size_t repeats = 5;  ///< random ordering only
  std::uint64_t seed = 0;
  SimilarityOptions similarity;
  /// Containment tolerance (m) when selecting in-box points.
  double tolerance = 1e-3;

  static std::vector<double> default_fractions();  ///< 0, 0.05, ..., 1
};

struct DropCurve {
  DropOrder order = DropOrder::kDescending;
  std::vector<double> fractions;
  std::vector<double> mean_iou;
  std::vector<double> mean_confidence;
  std::size_t objects = 0;
  std::size_t repeats = 1;
};

/// Point-dropping evaluation against the detector's own output on `cloud`
/// (the targets of `maps`). At each fraction f every target loses the f share
/// of its in-box points with the highest (descending), lowest (ascending) or
/// randomly ranked attribution; the detector then runs once on what is left
/// and each target records the IoU and confidence of its best match.
DropCurve drop_curve(const PointCloud& cloud, DetectorBackend& detector, std::span<const AttributionMap> maps,
                     DropOrder order, const DropCurveOptions& options = {});

/// Object-weighted mean of curves sharing order and fractions.
DropCurve merge_curves(std::span<const DropCurve> curves);

/// Trapezoidal area under y(x).
double curve_auc(std::span<const double> x, std::span<const double> y);

struct PointingGameOptions {
  double dilation = 1.0;     ///< per-axis scale applied to ground-truth boxes
  double match_iou = 0.5;    ///< minimum 3D IoU for a correct detection
  double tolerance = 1e-3;   ///< containment slack (m), absorbs float storage
};

struct PointingGameResult {
  std::size_t hits = 0;
  std::size_t evaluated = 0;
  std::size_t targets = 0;
  double score = 0.0;
};

/// A target counts when it matches a same-label ground-truth box with
/// IoU >= match_iou; it is a hit when its arg-max point (lowest index on ties)
/// lies inside that box. Throws InsufficientData when nothing is evaluable.
PointingGameResult pointing_game(std::span<const AttributedCloud> results,
                                 std::span<const DetectionSet> ground_truth, const PointingGameOptions& options = {});

}  // namespace maskprobe
