#include "maskprobe/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "maskprobe/errors.hpp"
#include "maskprobe/rng.hpp"

namespace maskprobe {

namespace {

struct Patch {
  Vec3 anchor;  // box-local center
  Vec3 half;    // half extents; one axis is zero so the patch lies on a face
};

Patch marker_patch(const Label& label, const Vec3& dims) {
  const Vec3 a = marker_anchor(label, dims);
  if (label == "Car") {
    return {a, {0.0, 0.5 * dims.y, 0.35 * dims.z}};
  }
  if (label == "Pedestrian") {
    return {a, {0.5 * dims.x, 0.5 * dims.y, 0.0}};
  }
  if (label == "Cyclist") {
    return {a, {0.0, 0.5 * dims.y, 0.3 * dims.z}};
  }
  return {a, {0.3 * dims.x, 0.3 * dims.y, 0.0}};
}

double uniform(std::mt19937_64& gen, double lo, double hi) { return lo + (hi - lo) * uniform01(gen); }

Point to_point(const Box3D& box, const Vec3& local, double intensity) {
  const Vec3 w = box.to_world(local);
  return {static_cast<float>(w.x), static_cast<float>(w.y), static_cast<float>(w.z), static_cast<float>(intensity)};
}

// Uniform sample on the side and top faces, area weighted.
Vec3 sample_surface(const Vec3& dims, std::mt19937_64& gen) {
  const double l = dims.x, w = dims.y, h = dims.z;
  const double end_area = w * h;
  const double side_area = l * h;
  const double top_area = l * w;
  const double total = 2.0 * end_area + 2.0 * side_area + top_area;
  double pick = uniform01(gen) * total;
  const double u = uniform01(gen) - 0.5;
  const double v = uniform01(gen) - 0.5;
  if ((pick -= end_area) < 0.0) return {0.5 * l, u * w, v * h};
  if ((pick -= end_area) < 0.0) return {-0.5 * l, u * w, v * h};
  if ((pick -= side_area) < 0.0) return {u * l, 0.5 * w, v * h};
  if ((pick -= side_area) < 0.0) return {u * l, -0.5 * w, v * h};
  return {u * l, v * w, 0.5 * h};
}

double bev_radius(const Vec3& dims) { return 0.5 * std::hypot(dims.x, dims.y); }

}  // namespace

std::vector<SceneClass> SceneSpec::default_classes() {
  return {
      {"Car", {3.9, 1.6, 1.5}, 1000.0, 1.0},
      {"Pedestrian", {0.9, 0.55, 1.75}, 220.0, 0.0},
      {"Cyclist", {1.75, 0.6, 1.7}, 320.0, 0.0},
  };
}

Vec3 marker_anchor(const Label& label, const Vec3& dims) {
  if (label == "Car") {
    return {-0.5 * dims.x, 0.0, -0.5 * dims.z + 0.55 * dims.z};
  }
  if (label == "Pedestrian") {
    return {0.0, 0.0, 0.5 * dims.z};
  }
  if (label == "Cyclist") {
    return {0.5 * dims.x, 0.0, 0.0};
  }
  return {0.0, 0.0, 0.5 * dims.z};
}

DetectionSet SyntheticScene::ground_truth() const {
  DetectionSet out;
  out.reserve(objects.size());
  for (const auto& o : objects) {
    out.push_back(o.ground_truth);
  }
  return out;
}

SyntheticScene generate_scene(const SceneSpec& spec) {
  if (!(spec.min_range > 0.0 && spec.min_range <= spec.max_range)) {
    throw InvalidArgument(fmt::format("invalid object range [{}, {}]", spec.min_range, spec.max_range));
  }
  if (!(spec.ground_min_range > 0.0 && spec.ground_min_range < spec.ground_max_range)) {
    throw InvalidArgument("invalid ground range");
  }
  if (!(spec.marker_fraction >= 0.0 && spec.marker_fraction <= 1.0)) {
    throw InvalidArgument("marker fraction must lie in [0, 1]");
  }
  double total_weight = 0.0;
  for (const auto& c : spec.classes) {
    if (c.weight < 0.0 || !(c.dims.x > 0.0 && c.dims.y > 0.0 && c.dims.z > 0.0)) {
      throw InvalidArgument(fmt::format("invalid class template '{}'", c.label));
    }
    total_weight += c.weight;
  }
  if (spec.objects > 0 && !(total_weight > 0.0)) {
    throw InvalidArgument("scene needs at least one class with positive weight");
  }

  auto gen = substream(spec.seed, StreamTag::kScene, 0);
  SyntheticScene scene;
  std::vector<Box3D> boxes;
  std::vector<const SceneClass*> classes;

  for (std::size_t k = 0; k < spec.objects; ++k) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < spec.max_attempts && !placed; ++attempt) {
      double pick = uniform01(gen) * total_weight;
      const SceneClass* cls = &spec.classes.back();
      for (const auto& c : spec.classes) {
        if (c.weight > 0.0 && (pick -= c.weight) < 0.0) {
          cls = &c;
          break;
        }
      }
      const double range = uniform(gen, spec.min_range, spec.max_range);
      const double azimuth = uniform(gen, -spec.half_fov, spec.half_fov);
      // Keep the heading axis away from +-pi/2 so axis-only estimates never wrap.
      double yaw = uniform(gen, -0.5 * std::numbers::pi + 0.3, 0.5 * std::numbers::pi - 0.3);
      if (uniform01(gen) < 0.5) {
        yaw += std::numbers::pi;
      }
      const Vec3 center{range * std::cos(azimuth), range * std::sin(azimuth), spec.ground_z + 0.5 * cls->dims.z};
      const Box3D box(center, cls->dims, yaw);
      const bool clear = std::all_of(boxes.begin(), boxes.end(), [&](const Box3D& other) {
        const double d = std::hypot(other.center().x - center.x, other.center().y - center.y);
        return d > bev_radius(other.dims()) + bev_radius(cls->dims) + spec.separation;
      });
      if (clear) {
        boxes.push_back(box);
        classes.push_back(cls);
        placed = true;
      }
    }
    if (!placed) {
      throw InvalidArgument(fmt::format("could not place object {} after {} attempts", k, spec.max_attempts));
    }
  }

  std::vector<Point> points;
  const auto next_index = [&] { return static_cast<std::uint32_t>(points.size()); };

  for (std::size_t g = 0; g < spec.ground_points; ++g) {
    Point p{};
    bool accepted = false;
    for (int attempt = 0; attempt < 100 && !accepted; ++attempt) {
      const double r = spec.ground_min_range * std::pow(spec.ground_max_range / spec.ground_min_range, uniform01(gen));
      const double az = uniform(gen, -spec.half_fov, spec.half_fov);
      const Vec3 q{r * std::cos(az), r * std::sin(az), spec.ground_z};
      accepted = std::none_of(boxes.begin(), boxes.end(), [&](const Box3D& b) {
        const Vec3 l = b.to_local(q);
        return std::abs(l.x) <= 0.5 * b.length() + 0.1 && std::abs(l.y) <= 0.5 * b.width() + 0.1;
      });
      p = {static_cast<float>(q.x), static_cast<float>(q.y), static_cast<float>(q.z),
           static_cast<float>(uniform(gen, 0.02, 0.25))};
    }
    if (accepted) {
      scene.ground.push_back(next_index());
      points.push_back(p);
    }
  }

  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const Box3D& box = boxes[k];
    const SceneClass& cls = *classes[k];
    const double bev_range = std::hypot(box.center().x, box.center().y);
    const auto total = static_cast<std::size_t>(std::llround(cls.points_at_10m * (10.0 / bev_range) * (10.0 / bev_range)));
    const auto marker_count = static_cast<std::size_t>(std::llround(spec.marker_fraction * static_cast<double>(total)));

    SceneObject obj;
    obj.ground_truth = Detection(cls.label, 1.0, box);
    obj.range = std::sqrt(box.center().x * box.center().x + box.center().y * box.center().y +
                          box.center().z * box.center().z);
    const Patch patch = marker_patch(cls.label, cls.dims);
    for (std::size_t m = 0; m < marker_count; ++m) {
      const Vec3 local{patch.anchor.x + (2.0 * uniform01(gen) - 1.0) * patch.half.x,
                       patch.anchor.y + (2.0 * uniform01(gen) - 1.0) * patch.half.y,
                       patch.anchor.z + (2.0 * uniform01(gen) - 1.0) * patch.half.z};
      obj.markers.push_back(next_index());
      points.push_back(to_point(box, local, uniform(gen, 0.92, 1.0)));
    }
    for (std::size_t s = marker_count; s < total; ++s) {
      obj.surface.push_back(next_index());
      points.push_back(to_point(box, sample_surface(cls.dims, gen), uniform(gen, 0.05, 0.45)));
    }
    scene.objects.push_back(std::move(obj));
  }

  scene.cloud = PointCloud(std::move(points));
  return scene;
}

}  // namespace maskprobe
