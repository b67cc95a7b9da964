#include "maskprobe/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace maskprobe {

namespace {

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

Vec2 segment_line_intersection(const Vec2& p, const Vec2& q, const Vec2& a, const Vec2& b) {
  const double dp = cross(a, b, p);
  const double dq = cross(a, b, q);
  const double t = dp / (dp - dq);
  return {p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
}

auto ordering_key(const Box3D& b) {
  return std::make_tuple(b.center().x, b.center().y, b.center().z, b.dims().x, b.dims().y, b.dims().z, b.yaw());
}

// Orders the pair canonically so that iou(a, b) and iou(b, a) run the exact same arithmetic.
std::pair<const Box3D*, const Box3D*> canonical(const Box3D& a, const Box3D& b) {
  return ordering_key(b) < ordering_key(a) ? std::make_pair(&b, &a) : std::make_pair(&a, &b);
}

double z_overlap(const Box3D& a, const Box3D& b) {
  const double lo = std::max(a.center().z - 0.5 * a.height(), b.center().z - 0.5 * b.height());
  const double hi = std::min(a.center().z + 0.5 * a.height(), b.center().z + 0.5 * b.height());
  return std::max(0.0, hi - lo);
}

}  // namespace

std::array<Vec2, 4> bev_corners(const Box3D& box) {
  const double c = std::cos(box.yaw());
  const double s = std::sin(box.yaw());
  const double hl = 0.5 * box.length();
  const double hw = 0.5 * box.width();
  const double cx = box.center().x;
  const double cy = box.center().y;
  const auto corner = [&](double lx, double ly) { return Vec2{cx + c * lx - s * ly, cy + s * lx + c * ly}; };
  return {corner(hl, hw), corner(-hl, hw), corner(-hl, -hw), corner(hl, -hw)};
}

double polygon_area(std::span<const Vec2> polygon) {
  if (polygon.size() < 3) {
    return 0.0;
  }
  double twice = 0.0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const Vec2& p = polygon[i];
    const Vec2& q = polygon[(i + 1) % polygon.size()];
    twice += p.x * q.y - q.x * p.y;
  }
  return 0.5 * twice;
}

std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip) {
  std::vector<Vec2> output(subject.begin(), subject.end());
  std::vector<Vec2> input;
  for (std::size_t e = 0; e < clip.size() && !output.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % clip.size()];
    input.swap(output);
    output.clear();
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Vec2& cur = input[i];
      const Vec2& prev = input[(i + input.size() - 1) % input.size()];
      const bool cur_in = cross(a, b, cur) >= 0.0;
      const bool prev_in = cross(a, b, prev) >= 0.0;
      if (cur_in) {
        if (!prev_in) {
          output.push_back(segment_line_intersection(prev, cur, a, b));
        }
        output.push_back(cur);
      } else if (prev_in) {
        output.push_back(segment_line_intersection(prev, cur, a, b));
      }
    }
  }
  return output;
}

double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const auto [first, second] = canonical(a, b);
  const auto pa = bev_corners(*first);
  const auto pb = bev_corners(*second);
  // Cheap rejection on circumscribed circles.
  const double dx = first->center().x - second->center().x;
  const double dy = first->center().y - second->center().y;
  const double ra = 0.5 * std::hypot(first->length(), first->width());
  const double rb = 0.5 * std::hypot(second->length(), second->width());
  if (dx * dx + dy * dy > (ra + rb) * (ra + rb)) {
    return 0.0;
  }
  const auto clipped = clip_convex(pa, pb);
  return std::max(0.0, polygon_area(clipped));
}

double iou_3d(const Box3D& a, const Box3D& b) {
  const double dz = z_overlap(a, b);
  if (dz <= 0.0) {
    return 0.0;
  }
  const double intersection = bev_intersection_area(a, b) * dz;
  if (intersection <= kContactVolumeFraction * std::min(a.volume(), b.volume())) {
    return 0.0;
  }
  const double union_volume = a.volume() + b.volume() - intersection;
  return std::clamp(intersection / union_volume, 0.0, 1.0);
}

double iou_bev(const Box3D& a, const Box3D& b) {
  const double area_a = a.length() * a.width();
  const double area_b = b.length() * b.width();
  const double intersection = bev_intersection_area(a, b);
  if (intersection <= kContactVolumeFraction * std::min(area_a, area_b)) {
    return 0.0;
  }
  return std::clamp(intersection / (area_a + area_b - intersection), 0.0, 1.0);
}

double aligned_iou(const Vec3& dims_a, const Vec3& dims_b) {
  const double intersection =
      std::min(dims_a.x, dims_b.x) * std::min(dims_a.y, dims_b.y) * std::min(dims_a.z, dims_b.z);
  const double va = dims_a.x * dims_a.y * dims_a.z;
  const double vb = dims_b.x * dims_b.y * dims_b.z;
  return std::clamp(intersection / (va + vb - intersection), 0.0, 1.0);
}

}  // namespace maskprobe
