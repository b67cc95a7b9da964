#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "maskprobe/types.hpp"

namespace maskprobe {

/// Cubic voxel grid with a rigid jitter: yaw about the sensor z-axis, then translation.
struct VoxelGridSpec {
  double edge_length = 0.20;
  Vec3 jitter_translation{};
  double jitter_yaw = 0.0;

  /// Throws InvalidArgument unless edge > 0, translation in [0, edge), yaw in [0, 2pi).
  void validate() const;

  /// Fresh jitter: translation uniform per axis in [0, edge), yaw uniform in [0, 2pi).
  static VoxelGridSpec random(double edge_length, std::mt19937_64& gen);
};

struct DensityCoefficients {
  double a = 0.0;
  double b = 0.0;
  double c = 1.0;

  /// a*r^2 + b*r + c, the reciprocal of the modeled voxel density.
  double evaluate(double r) const noexcept { return (a * r + b) * r + c; }
};

/// Keep probability P(r) = clamp(lambda * (a r^2 + b r + c), p_min, p_max).
struct DensityModel {
  DensityCoefficients coeffs;
  double lambda = 1.0;
  double p_min = 0.01;
  double p_max = 0.95;

  void validate() const;
};

double keep_probability(const DensityModel& model, double range);

/// lambda such that the unclamped keep probability at r_ref equals p_ref.
double calibrate_lambda(const DensityCoefficients& coeffs, double r_ref, double p_ref);

struct DensityFitOptions {
  double neighborhood_radius = 1.0;
  std::size_t min_voxels_per_bin = 10;
};

struct DensityBin {
  double mean_range = 0.0;  ///< mean center distance of the bin's occupied voxels
  double mean_density = 0.0;
  std::size_t voxels = 0;
  bool used = false;
};

/// Mean neighborhood occupancy of occupied voxels, binned by range.
struct DensityProfile {
  double bin_width = 1.0;
  std::vector<DensityBin> bins;  ///< bins[i] covers [i*w, (i+1)*w)

  std::size_t used_bins() const;
};

struct DensityFit {
  DensityCoefficients coeffs;
  DensityProfile profile;
  std::size_t clouds = 0;
  double voxel_edge = 0.0;
  double neighborhood_radius = 0.0;
  bool constant_pinned = false;  ///< c was pinned because the free fit went non-positive
};

DensityProfile measure_density(std::span<const PointCloud> clouds, const VoxelGridSpec& grid, double bin_width,
                               const DensityFitOptions& options = {});

/// Least-squares fit of a r^2 + b r + c to 1/mean_density over the used bins.
/// Throws InsufficientData when no bin is usable.
DensityCoefficients fit_reciprocal_quadratic(const DensityProfile& profile, bool* constant_pinned = nullptr);

DensityFit fit_density_model(std::span<const PointCloud> clouds, const VoxelGridSpec& grid, double bin_width,
                             const DensityFitOptions& options = {});

/// One Bernoulli draw per occupied voxel, shared by all of the voxel's points.
/// Voxels are visited in ascending key order so the result depends only on the inputs.
SamplingMask generate_mask(const PointCloud& cloud, const VoxelGridSpec& grid, const DensityModel& model,
                           std::mt19937_64& gen);

/// Mask for Monte Carlo iteration `iteration`: jitter and draws come from the
/// iteration's own substream of `master_seed`.
SamplingMask generate_mask(const PointCloud& cloud, double edge_length, const DensityModel& model,
                           std::uint64_t master_seed, std::uint64_t iteration);

/// Voxel id of every point in the jittered grid (ids are dense, in ascending key order).
std::vector<std::uint32_t> voxel_assignment(const PointCloud& cloud, const VoxelGridSpec& grid);

struct MaskedCloud {
  PointCloud cloud;
  std::vector<std::uint32_t> parent_index;  ///< parent_index[i] is the index in the source cloud
};

MaskedCloud apply_mask(const PointCloud& cloud, const SamplingMask& mask);

}  // namespace maskprobe
