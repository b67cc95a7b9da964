#pragma once

#include <array>
#include <span>
#include <vector>

#include "maskprobe/types.hpp"

namespace maskprobe {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

/// Bird's-eye-view corners, counter-clockwise.
std::array<Vec2, 4> bev_corners(const Box3D& box);

/// Shoelace area; positive for counter-clockwise input.
double polygon_area(std::span<const Vec2> polygon);

/// Sutherland-Hodgman clip of a convex polygon by a convex counter-clockwise clip polygon.
std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip);

double bev_intersection_area(const Box3D& a, const Box3D& b);

/// Intersection volumes below this fraction of the smaller box are treated as
/// contact (shared face or edge), not overlap.
inline constexpr double kContactVolumeFraction = 1e-10;

/// 3D IoU of two yaw-rotated boxes: BEV polygon intersection times z-overlap over union volume.
double iou_3d(const Box3D& a, const Box3D& b);

/// BEV IoU (ignores z).
double iou_bev(const Box3D& a, const Box3D& b);

/// IoU of two boxes sharing center and orientation, given only their dims.
double aligned_iou(const Vec3& dims_a, const Vec3& dims_b);

}  // namespace maskprobe
