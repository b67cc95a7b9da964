#include "maskprobe/sampling.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <unordered_set>
#include <utility>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "maskprobe/errors.hpp"
#include "maskprobe/rng.hpp"
#include "voxel_key.hpp"

namespace maskprobe {

namespace {

using detail::pack;
using detail::unpack;
using detail::VoxelIndex;

// Sensor frame -> jittered grid frame.
class GridFrame {
 public:
  explicit GridFrame(const VoxelGridSpec& grid)
      : cos_(std::cos(grid.jitter_yaw)),
        sin_(std::sin(grid.jitter_yaw)),
        t_(grid.jitter_translation),
        edge_(grid.edge_length),
        inv_edge_(1.0 / grid.edge_length) {}

  std::uint64_t key(const Point& p) const {
    const double x = static_cast<double>(p.x);
    const double y = static_cast<double>(p.y);
    const double gx = cos_ * x - sin_ * y + t_.x;
    const double gy = sin_ * x + cos_ * y + t_.y;
    const double gz = static_cast<double>(p.z) + t_.z;
    return pack({static_cast<std::int64_t>(std::floor(gx * inv_edge_)),
                 static_cast<std::int64_t>(std::floor(gy * inv_edge_)),
                 static_cast<std::int64_t>(std::floor(gz * inv_edge_))});
  }

  // Distance from the sensor origin to the voxel center. The grid transform is
  // rigid, so this is the grid-frame distance from the center to the image of the origin.
  double center_range(std::uint64_t key) const {
    const VoxelIndex v = unpack(key);
    const double cx = (static_cast<double>(v.x) + 0.5) * edge_ - t_.x;
    const double cy = (static_cast<double>(v.y) + 0.5) * edge_ - t_.y;
    const double cz = (static_cast<double>(v.z) + 0.5) * edge_ - t_.z;
    return std::sqrt(cx * cx + cy * cy + cz * cz);
  }

 private:
  double cos_, sin_;
  Vec3 t_;
  double edge_, inv_edge_;
};

std::vector<std::pair<std::uint64_t, std::uint32_t>> sorted_keys(const PointCloud& cloud, const GridFrame& frame) {
  std::vector<std::pair<std::uint64_t, std::uint32_t>> keys(cloud.size());
  for (std::size_t j = 0; j < cloud.size(); ++j) {
    keys[j] = {frame.key(cloud[j]), static_cast<std::uint32_t>(j)};
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

}  // namespace

void VoxelGridSpec::validate() const {
  if (!(edge_length > 0.0) || !std::isfinite(edge_length)) {
    throw InvalidArgument(fmt::format("voxel edge length must be positive, got {}", edge_length));
  }
  for (double t : {jitter_translation.x, jitter_translation.y, jitter_translation.z}) {
    if (!(t >= 0.0 && t < edge_length)) {
      throw InvalidArgument(fmt::format("grid translation {} outside [0, {})", t, edge_length));
    }
  }
  if (!(jitter_yaw >= 0.0 && jitter_yaw < 2.0 * std::numbers::pi)) {
    throw InvalidArgument(fmt::format("grid yaw {} outside [0, 2pi)", jitter_yaw));
  }
}

VoxelGridSpec VoxelGridSpec::random(double edge_length, std::mt19937_64& gen) {
  VoxelGridSpec spec;
  spec.edge_length = edge_length;
  spec.jitter_translation = {uniform01(gen) * edge_length, uniform01(gen) * edge_length,
                             uniform01(gen) * edge_length};
  spec.jitter_yaw = uniform01(gen) * 2.0 * std::numbers::pi;
  spec.validate();
  return spec;
}

void DensityModel::validate() const {
  if (!std::isfinite(coeffs.a) || !std::isfinite(coeffs.b) || !std::isfinite(coeffs.c)) {
    throw InvalidArgument("density coefficients must be finite");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw InvalidArgument(fmt::format("lambda must be finite and non-negative, got {}", lambda));
  }
  if (!(p_min >= 0.0 && p_min <= p_max && p_max <= 1.0)) {
    throw InvalidArgument(fmt::format("probability clamps must satisfy 0 <= p_min <= p_max <= 1, got [{}, {}]",
                                      p_min, p_max));
  }
}

double keep_probability(const DensityModel& model, double range) {
  if (!(range >= 0.0) || !std::isfinite(range)) {
    throw InvalidArgument(fmt::format("range must be finite and non-negative, got {}", range));
  }
  return std::clamp(model.lambda * model.coeffs.evaluate(range), model.p_min, model.p_max);
}

double calibrate_lambda(const DensityCoefficients& coeffs, double r_ref, double p_ref) {
  if (!(p_ref > 0.0 && p_ref <= 1.0)) {
    throw InvalidArgument(fmt::format("reference probability {} outside (0, 1]", p_ref));
  }
  const double value = coeffs.evaluate(r_ref);
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw InvalidArgument(fmt::format("density polynomial is {} at r = {}; cannot calibrate", value, r_ref));
  }
  return p_ref / value;
}

std::size_t DensityProfile::used_bins() const {
  return static_cast<std::size_t>(std::count_if(bins.begin(), bins.end(), [](const DensityBin& b) { return b.used; }));
}

DensityProfile measure_density(std::span<const PointCloud> clouds, const VoxelGridSpec& grid, double bin_width,
                               const DensityFitOptions& options) {
  grid.validate();
  if (!(bin_width > 0.0)) {
    throw InvalidArgument("bin width must be positive");
  }
  const GridFrame frame(grid);

  std::vector<std::array<std::int64_t, 3>> offsets;
  const auto reach = static_cast<std::int64_t>(std::floor(options.neighborhood_radius / grid.edge_length));
  const double r2 = options.neighborhood_radius * options.neighborhood_radius * (1.0 + 1e-12);
  for (std::int64_t dx = -reach; dx <= reach; ++dx) {
    for (std::int64_t dy = -reach; dy <= reach; ++dy) {
      for (std::int64_t dz = -reach; dz <= reach; ++dz) {
        const double d2 = static_cast<double>(dx * dx + dy * dy + dz * dz) * grid.edge_length * grid.edge_length;
        if (d2 <= r2) {
          offsets.push_back({dx, dy, dz});
        }
      }
    }
  }
  const double neighborhood_size = static_cast<double>(offsets.size());

  std::vector<double> density_sum;
  std::vector<double> range_sum;
  std::vector<std::size_t> counts;

  for (const PointCloud& cloud : clouds) {
    if (cloud.empty()) {
      continue;
    }
    std::vector<std::uint64_t> keys;
    keys.reserve(cloud.size());
    for (const Point& p : cloud) {
      keys.push_back(frame.key(p));
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    const std::unordered_set<std::uint64_t> occupied(keys.begin(), keys.end());

    for (std::uint64_t key : keys) {
      const VoxelIndex v = unpack(key);
      std::size_t hits = 0;
      for (const auto& o : offsets) {
        if (occupied.contains(pack({v.x + o[0], v.y + o[1], v.z + o[2]}))) {
          ++hits;
        }
      }
      const double range = frame.center_range(key);
      const auto bin = static_cast<std::size_t>(range / bin_width);
      if (bin >= counts.size()) {
        density_sum.resize(bin + 1, 0.0);
        range_sum.resize(bin + 1, 0.0);
        counts.resize(bin + 1, 0);
      }
      density_sum[bin] += static_cast<double>(hits) / neighborhood_size;
      range_sum[bin] += range;
      ++counts[bin];
    }
  }

  DensityProfile profile;
  profile.bin_width = bin_width;
  profile.bins.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    DensityBin& bin = profile.bins[i];
    bin.voxels = counts[i];
    if (counts[i] > 0) {
      bin.mean_density = density_sum[i] / static_cast<double>(counts[i]);
      bin.mean_range = range_sum[i] / static_cast<double>(counts[i]);
    }
    bin.used = counts[i] > 0 && counts[i] >= options.min_voxels_per_bin;
  }
  return profile;
}

DensityCoefficients fit_reciprocal_quadratic(const DensityProfile& profile, bool* constant_pinned) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (const DensityBin& bin : profile.bins) {
    if (bin.used && bin.mean_density > 0.0) {
      xs.push_back(bin.mean_range);
      ys.push_back(1.0 / bin.mean_density);
    }
  }
  if (xs.empty()) {
    throw InsufficientData("no distance bin has enough occupied voxels for a density fit");
  }
  if (constant_pinned) {
    *constant_pinned = false;
  }

  const auto n = static_cast<Eigen::Index>(xs.size());
  // Fewer than three bins cannot pin a quadratic; fall back to the highest degree they support.
  const Eigen::Index degree = std::min<Eigen::Index>(2, n - 1);
  Eigen::MatrixXd design(n, degree + 1);
  Eigen::VectorXd target(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double power = 1.0;
    for (Eigen::Index k = 0; k <= degree; ++k) {
      design(i, k) = power;
      power *= xs[static_cast<std::size_t>(i)];
    }
    target(i) = ys[static_cast<std::size_t>(i)];
  }
  Eigen::VectorXd solution = design.colPivHouseholderQr().solve(target);

  const double c_floor = 1e-6 * *std::max_element(ys.begin(), ys.end());
  if (!(solution(0) > 0.0)) {
    // Convex objective: with c constrained to c >= c_floor the optimum sits on the boundary.
    solution(0) = c_floor;
    if (degree > 0) {
      const Eigen::MatrixXd rest = design.rightCols(degree);
      const Eigen::VectorXd residual = target - design.col(0) * c_floor;
      solution.tail(degree) = rest.colPivHouseholderQr().solve(residual);
    }
    if (constant_pinned) {
      *constant_pinned = true;
    }
  }

  DensityCoefficients coeffs;
  coeffs.c = solution(0);
  coeffs.b = degree >= 1 ? solution(1) : 0.0;
  coeffs.a = degree >= 2 ? solution(2) : 0.0;
  return coeffs;
}

DensityFit fit_density_model(std::span<const PointCloud> clouds, const VoxelGridSpec& grid, double bin_width,
                             const DensityFitOptions& options) {
  const bool any_points = std::any_of(clouds.begin(), clouds.end(), [](const PointCloud& c) { return !c.empty(); });
  if (!any_points) {
    throw InsufficientData("density fit needs at least one non-empty cloud");
  }
  DensityFit fit;
  fit.profile = measure_density(clouds, grid, bin_width, options);
  fit.coeffs = fit_reciprocal_quadratic(fit.profile, &fit.constant_pinned);
  fit.clouds = static_cast<std::size_t>(std::count_if(clouds.begin(), clouds.end(), [](const PointCloud& c) { return !c.empty(); }));
  fit.voxel_edge = grid.edge_length;
  fit.neighborhood_radius = options.neighborhood_radius;
  return fit;
}

SamplingMask generate_mask(const PointCloud& cloud, const VoxelGridSpec& grid, const DensityModel& model,
                           std::mt19937_64& gen) {
  if (cloud.empty()) {
    throw InvalidArgument("cannot sample an empty cloud");
  }
  grid.validate();
  model.validate();
  const GridFrame frame(grid);
  const auto keys = sorted_keys(cloud, frame);

  std::vector<std::uint8_t> keep(cloud.size(), 0);
  std::size_t begin = 0;
  while (begin < keys.size()) {
    std::size_t end = begin + 1;
    while (end < keys.size() && keys[end].first == keys[begin].first) {
      ++end;
    }
    const double p = keep_probability(model, frame.center_range(keys[begin].first));
    const std::uint8_t bit = uniform01(gen) < p ? 1 : 0;
    for (std::size_t i = begin; i < end; ++i) {
      keep[keys[i].second] = bit;
    }
    begin = end;
  }
  return SamplingMask(std::move(keep));
}

SamplingMask generate_mask(const PointCloud& cloud, double edge_length, const DensityModel& model,
                           std::uint64_t master_seed, std::uint64_t iteration) {
  auto gen = substream(master_seed, StreamTag::kMask, iteration);
  const VoxelGridSpec grid = VoxelGridSpec::random(edge_length, gen);
  return generate_mask(cloud, grid, model, gen);
}

std::vector<std::uint32_t> voxel_assignment(const PointCloud& cloud, const VoxelGridSpec& grid) {
  grid.validate();
  const GridFrame frame(grid);
  const auto keys = sorted_keys(cloud, frame);
  std::vector<std::uint32_t> ids(cloud.size(), 0);
  std::uint32_t id = 0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (i > 0 && keys[i].first != keys[i - 1].first) {
      ++id;
    }
    ids[keys[i].second] = id;
  }
  return ids;
}

MaskedCloud apply_mask(const PointCloud& cloud, const SamplingMask& mask) {
  if (mask.size() != cloud.size()) {
    throw InvalidArgument(fmt::format("mask length {} does not match cloud size {}", mask.size(), cloud.size()));
  }
  std::vector<Point> kept;
  std::vector<std::uint32_t> parent;
  const std::size_t n = mask.kept_count();
  kept.reserve(n);
  parent.reserve(n);
  for (std::size_t j = 0; j < cloud.size(); ++j) {
    if (mask[j]) {
      kept.push_back(cloud[j]);
      parent.push_back(static_cast<std::uint32_t>(j));
    }
  }
  return {make_trusted_cloud(std::move(kept)), std::move(parent)};
}

}  // namespace maskprobe
