#include "maskprobe/mock_detector.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <tuple>
#include <unordered_map>

#include "voxel_key.hpp"

namespace maskprobe {

namespace {

using detail::pack;
using detail::unpack;
using detail::VoxelIndex;

VoxelIndex cell_of(const Point& p, double cell) {
  return {static_cast<std::int64_t>(std::floor(p.x / cell)), static_cast<std::int64_t>(std::floor(p.y / cell)),
          static_cast<std::int64_t>(std::floor(p.z / cell))};
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double distinct_count(std::vector<std::uint64_t>& keys) {
  std::sort(keys.begin(), keys.end());
  return static_cast<double>(std::unique(keys.begin(), keys.end()) - keys.begin());
}

struct FittedBox {
  Vec3 center;
  Vec3 dims;
  double yaw;
};

// BEV principal-axis fit plus extents. `points` must be sorted so the sums are
// evaluated in a canonical order.
FittedBox fit_box(const std::vector<Point>& points, const MockDetectorConfig& cfg) {
  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const Point& p : points) {
    mx += p.x;
    my += p.y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (const Point& p : points) {
    const double dx = p.x - mx;
    const double dy = p.y - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  double axis = 0.5 * std::atan2(2.0 * sxy, sxx - syy);

  const auto extents = [&](double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    double umin = INFINITY, umax = -INFINITY, vmin = INFINITY, vmax = -INFINITY;
    for (const Point& p : points) {
      const double u = c * p.x + s * p.y;
      const double v = -s * p.x + c * p.y;
      umin = std::min(umin, u);
      umax = std::max(umax, u);
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
    return std::make_tuple(umin, umax, vmin, vmax);
  };
  auto [umin, umax, vmin, vmax] = extents(axis);
  if (vmax - vmin > umax - umin) {
    axis += 0.5 * std::numbers::pi;
    std::tie(umin, umax, vmin, vmax) = extents(axis);
  }
  // Heading is only known modulo pi; report it in [-pi/2, pi/2).
  while (axis >= 0.5 * std::numbers::pi) axis -= std::numbers::pi;
  while (axis < -0.5 * std::numbers::pi) axis += std::numbers::pi;
  const double c = std::cos(axis);
  const double s = std::sin(axis);
  const double uc = 0.5 * (umin + umax);
  const double vc = 0.5 * (vmin + vmax);

  double zmin = INFINITY, zmax = -INFINITY;
  for (const Point& p : points) {
    zmin = std::min(zmin, static_cast<double>(p.z));
    zmax = std::max(zmax, static_cast<double>(p.z));
  }
  // Objects touching the ground-removal band are extended down to the ground.
  if (zmin <= cfg.ground_z + cfg.ground_clearance + 0.25) {
    zmin = cfg.ground_z;
  }
  constexpr double kMinDim = 0.1;
  FittedBox box;
  box.center = {c * uc - s * vc, s * uc + c * vc, 0.5 * (zmin + zmax)};
  box.dims = {std::max(umax - umin, kMinDim), std::max(vmax - vmin, kMinDim), std::max(zmax - zmin, kMinDim)};
  box.yaw = axis;
  return box;
}

}  // namespace

std::vector<MockClassGate> MockDetectorConfig::default_classes() {
  return {
      {"Pedestrian", 0.0, 1.2, 8.0, 1.5},
      {"Cyclist", 1.2, 2.4, 12.0, 1.5},
      {"Car", 2.4, 7.0, 25.0, 2.0},
  };
}

MockDetector::MockDetector(MockDetectorConfig config) : config_(std::move(config)) {
  caps_.model_name = "mock-cluster";
  for (const auto& gate : config_.classes) {
    caps_.classes.push_back(gate.label);
  }
  caps_.max_batch = 64;
  caps_.supports_empty_cloud = true;
  caps_.reentrant = true;
}

std::vector<DetectionSet> MockDetector::detect_batch(std::span<const PointCloud> clouds) {
  std::vector<DetectionSet> out;
  out.reserve(clouds.size());
  for (const PointCloud& c : clouds) {
    out.push_back(run(c));
  }
  return out;
}

DetectionSet MockDetector::run(const PointCloud& cloud) const {
  const MockDetectorConfig& cfg = config_;
  const double ground_cut = cfg.ground_z + cfg.ground_clearance;

  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> cells;
  for (std::size_t j = 0; j < cloud.size(); ++j) {
    const Point& p = cloud[j];
    if (p.z < ground_cut) {
      continue;
    }
    cells[pack(cell_of(p, cfg.cluster_cell))].push_back(static_cast<std::uint32_t>(j));
  }
  std::vector<std::uint64_t> keys;
  keys.reserve(cells.size());
  for (const auto& [key, members] : cells) {
    keys.push_back(key);
  }
  std::sort(keys.begin(), keys.end());

  std::unordered_map<std::uint64_t, bool> visited;
  visited.reserve(keys.size());
  DetectionSet detections;
  std::vector<Point> members;
  std::vector<std::uint64_t> evidence;
  std::vector<std::uint64_t> marker_evidence;
  std::deque<std::uint64_t> frontier;

  for (std::uint64_t seed : keys) {
    if (visited[seed]) {
      continue;
    }
    members.clear();
    frontier.assign(1, seed);
    visited[seed] = true;
    while (!frontier.empty()) {
      const std::uint64_t key = frontier.front();
      frontier.pop_front();
      for (std::uint32_t j : cells.at(key)) {
        members.push_back(cloud[j]);
      }
      const VoxelIndex v = unpack(key);
      for (std::int64_t dx = -1; dx <= 1; ++dx) {
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
          for (std::int64_t dz = -1; dz <= 1; ++dz) {
            if (dx == 0 && dy == 0 && dz == 0) {
              continue;
            }
            const std::uint64_t neighbor = pack({v.x + dx, v.y + dy, v.z + dz});
            if (cells.contains(neighbor) && !visited[neighbor]) {
              visited[neighbor] = true;
              frontier.push_back(neighbor);
            }
          }
        }
      }
    }
    if (members.size() < cfg.min_points) {
      continue;
    }
    std::sort(members.begin(), members.end(), [](const Point& a, const Point& b) {
      return std::tie(a.x, a.y, a.z, a.intensity) < std::tie(b.x, b.y, b.z, b.intensity);
    });

    const FittedBox fitted = fit_box(members, cfg);
    const MockClassGate* gate = nullptr;
    for (const auto& g : cfg.classes) {
      if (fitted.dims.x >= g.min_length && fitted.dims.x < g.max_length) {
        gate = &g;
        break;
      }
    }
    if (gate == nullptr) {
      continue;
    }

    evidence.clear();
    marker_evidence.clear();
    for (const Point& p : members) {
      const std::uint64_t cell = pack(cell_of(p, cfg.evidence_cell));
      evidence.push_back(cell);
      if (p.intensity >= cfg.marker_intensity) {
        marker_evidence.push_back(cell);
      }
    }
    const double occupied = distinct_count(evidence);
    const double marker_cells = distinct_count(marker_evidence);

    const double score = sigmoid(cfg.w_evidence * std::min(occupied / gate->evidence_ref, cfg.evidence_cap) +
                                 cfg.w_marker * std::min(marker_cells / gate->marker_ref, cfg.marker_cap) -
                                 cfg.bias);
    if (score < cfg.min_confidence) {
      continue;
    }
    detections.emplace_back(gate->label, score, Box3D(fitted.center, fitted.dims, fitted.yaw));
  }
  return detections;
}

}  // namespace maskprobe
