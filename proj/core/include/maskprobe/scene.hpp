#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "maskprobe/types.hpp"

namespace maskprobe {

/// Template for one object class in generated scenes.
struct SceneClass {
  Label label;
  Vec3 dims;
  double points_at_10m = 0.0;  ///< surface returns for the whole object at 10 m range
  double weight = 1.0;         ///< relative frequency
};

struct SceneSpec {
  std::size_t objects = 8;
  double min_range = 10.0;
  double max_range = 50.0;
  double half_fov = 1.0471975511965976;  ///< azimuth half-width (rad) around +x
  double marker_fraction = 0.05;
  std::size_t ground_points = 8000;
  double ground_z = -1.73;
  double ground_min_range = 2.0;
  double ground_max_range = 70.0;
  double separation = 2.5;  ///< minimum BEV gap between circumscribed circles (m)
  std::size_t max_attempts = 2000;
  std::vector<SceneClass> classes = default_classes();
  std::uint64_t seed = 0;

  static std::vector<SceneClass> default_classes();
};

struct SceneObject {
  Detection ground_truth;                  ///< confidence 1
  std::vector<std::uint32_t> surface;      ///< indices of plain surface returns
  std::vector<std::uint32_t> markers;      ///< indices of planted high-intensity returns
  double range = 0.0;                      ///< sensor-to-center distance
};

/// Generated cloud with known saliency: markers > surface > ground.
struct SyntheticScene {
  PointCloud cloud;
  std::vector<SceneObject> objects;
  std::vector<std::uint32_t> ground;

  DetectionSet ground_truth() const;
};

/// Deterministic for a given spec (including seed). Object returns are drawn
/// on the side and top faces with a count proportional to 1/range^2; ground
/// returns have an areal density proportional to 1/range^2.
SyntheticScene generate_scene(const SceneSpec& spec);

/// Box-local center of the marker patch for a class (rear face for cars,
/// head for pedestrians, front for cyclists).
Vec3 marker_anchor(const Label& label, const Vec3& dims);

}  // namespace maskprobe
