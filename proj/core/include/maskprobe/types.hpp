#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace maskprobe {

/// A LiDAR return in the sensor frame. Stored in single precision, which is
/// what KITTI .bin files and the wire protocol carry.
struct Point {
  float x = 0.0f;
  float y = 0.0f;
  float z = 0.0f;
  float intensity = 0.0f;

  friend bool operator==(const Point&, const Point&) = default;
};

/// Ordered, validated point set. Index j names the same physical point in
/// every mask of one analysis run.
class PointCloud {
 public:
  PointCloud() = default;

  /// Throws InvalidArgument on non-finite coordinates or intensity outside [0, 1].
  explicit PointCloud(std::vector<Point> points);

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  const Point& operator[](std::size_t i) const { return points_[i]; }
  std::span<const Point> points() const noexcept { return points_; }

  auto begin() const noexcept { return points_.begin(); }
  auto end() const noexcept { return points_.end(); }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;

 private:
  struct Trusted {};
  PointCloud(Trusted, std::vector<Point> points) : points_(std::move(points)) {}
  friend PointCloud make_trusted_cloud(std::vector<Point> points);

  std::vector<Point> points_;
};

/// Builds a cloud from points already known to satisfy the invariants
/// (subsets of a validated cloud). Not validated again.
PointCloud make_trusted_cloud(std::vector<Point> points);

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
};

/// Wraps an angle into [-pi, pi). Throws InvalidArgument when not finite.
double normalize_yaw(double angle);

/// Gravity-aligned oriented box: center, (length, width, height) and yaw about +z.
/// Length runs along the heading direction.
class Box3D {
 public:
  Box3D() = default;
  /// Dims must be strictly positive and everything finite; yaw is normalized.
  Box3D(Vec3 center, Vec3 dims, double yaw);

  const Vec3& center() const noexcept { return center_; }
  const Vec3& dims() const noexcept { return dims_; }
  double length() const noexcept { return dims_.x; }
  double width() const noexcept { return dims_.y; }
  double height() const noexcept { return dims_.z; }
  double yaw() const noexcept { return yaw_; }
  double volume() const noexcept { return dims_.x * dims_.y * dims_.z; }

  /// Point expressed in the box frame: translated to the center, rotated by -yaw.
  Vec3 to_local(const Vec3& p) const noexcept;
  Vec3 to_world(const Vec3& local) const noexcept;

  /// Inclusive containment with an absolute tolerance in meters.
  bool contains(const Vec3& p, double tolerance = 0.0) const noexcept;

  /// Same pose, dims multiplied per axis.
  Box3D scaled(double factor) const;

  friend bool operator==(const Box3D&, const Box3D&) = default;

 private:
  Vec3 center_{};
  Vec3 dims_{1.0, 1.0, 1.0};
  double yaw_ = 0.0;
};

/// Opaque class identifier; equality is exact.
using Label = std::string;

class Detection {
 public:
  Detection() = default;
  /// Confidence must lie in [0, 1].
  Detection(Label label, double confidence, Box3D box);

  const Label& label() const noexcept { return label_; }
  double confidence() const noexcept { return confidence_; }
  const Box3D& box() const noexcept { return box_; }

  friend bool operator==(const Detection&, const Detection&) = default;

 private:
  Label label_;
  double confidence_ = 0.0;
  Box3D box_;
};

using DetectionSet = std::vector<Detection>;

/// Per-point keep bits for one Monte Carlo iteration.
class SamplingMask {
 public:
  SamplingMask() = default;
  explicit SamplingMask(std::vector<std::uint8_t> keep);
  SamplingMask(std::size_t size, bool value);

  std::size_t size() const noexcept { return keep_.size(); }
  bool operator[](std::size_t j) const { return keep_[j] != 0; }
  std::span<const std::uint8_t> bits() const noexcept { return keep_; }
  std::size_t kept_count() const noexcept;

  friend bool operator==(const SamplingMask&, const SamplingMask&) = default;

 private:
  std::vector<std::uint8_t> keep_;
};

/// Per-point attribution scores for one target detection.
///
/// scores[j] is the similarity accumulated over the iterations in which point
/// j was kept, divided by visible_counts[j]. Points that were never kept have
/// a score of 0 and report unobserved(j) == true.
class AttributionMap {
 public:
  AttributionMap() = default;
  /// Validates lengths, non-negativity, scores <= 1, and zero score for unobserved points.
  AttributionMap(Detection target, std::vector<double> scores,
                 std::vector<std::uint32_t> visible_counts, std::uint32_t iterations);

  const Detection& target() const noexcept { return target_; }
  std::span<const double> scores() const noexcept { return scores_; }
  std::span<const std::uint32_t> visible_counts() const noexcept { return visible_counts_; }
  std::uint32_t iterations() const noexcept { return iterations_; }
  std::size_t size() const noexcept { return scores_.size(); }
  bool unobserved(std::size_t j) const { return visible_counts_[j] == 0; }

  friend bool operator==(const AttributionMap&, const AttributionMap&) = default;

 private:
  Detection target_;
  std::vector<double> scores_;
  std::vector<std::uint32_t> visible_counts_;
  std::uint32_t iterations_ = 0;
};

}  // namespace maskprobe
