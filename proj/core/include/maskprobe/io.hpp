#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "maskprobe/analysis.hpp"
#include "maskprobe/keyvalue.hpp"
#include "maskprobe/sampling.hpp"
#include "maskprobe/types.hpp"

namespace maskprobe {

// ---- KITTI velodyne scans ----

/// Little-endian float32 quadruples (x, y, z, intensity). Intensities outside
/// [0, 1] are clamped with a logged warning; a size that is not a multiple of
/// 16 or a non-finite value is a FormatError naming the byte offset.
PointCloud parse_kitti_bin(std::span<const std::byte> bytes, std::string_view source = "<memory>");
PointCloud read_kitti_bin(const std::filesystem::path& path);
void write_kitti_bin(const std::filesystem::path& path, const PointCloud& cloud);

// ---- colored export ----

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Turbo colormap at t in [0, 1] (clamped), 256 levels.
Rgb turbo(double t);

/// Min-max normalized scores through turbo; all-equal scores give the midpoint color.
std::vector<Rgb> colorize(std::span<const double> scores);

/// ASCII PLY with x, y, z, intensity, score and RGB per vertex.
void write_colored_cloud(std::ostream& out, const PointCloud& cloud, std::span<const double> scores);
void write_colored_cloud(const std::filesystem::path& path, const PointCloud& cloud, std::span<const double> scores);

// ---- attribution maps ----

inline constexpr int kAttributionFormatVersion = 1;

void write_attribution(std::ostream& out, const AttributionMap& map);
void write_attribution(const std::filesystem::path& path, const AttributionMap& map);
/// Throws FormatError on a version mismatch, truncation or inconsistent rows.
AttributionMap read_attribution(std::istream& in, std::string_view source = "<stream>");
AttributionMap read_attribution(const std::filesystem::path& path);

// ---- density model ----

struct StoredDensity {
  DensityModel model;
  double voxel_edge = 0.20;
};

/// Writes the model plus, when given, the fit metadata it came from.
KeyValueFile density_to_keyvalue(const DensityModel& model, double voxel_edge, const DensityFit* fit = nullptr);
StoredDensity density_from_keyvalue(const KeyValueFile& kv);
void save_density(const std::filesystem::path& path, const DensityModel& model, double voxel_edge,
                  const DensityFit* fit = nullptr);
StoredDensity load_density(const std::filesystem::path& path);

// ---- detection lists ----

/// One detection per line: `label confidence cx cy cz dx dy dz yaw`; `#` starts a comment.
void write_detections(const std::filesystem::path& path, const DetectionSet& detections);
DetectionSet read_detections(const std::filesystem::path& path);

// ---- CSV exports; `config` lines are written first as `# key = value` ----

void write_drop_curves_csv(const std::filesystem::path& path, std::span<const DropCurve> curves,
                           const KeyValueFile& config);
void write_average_map_csv(const std::filesystem::path& path, const AverageAttributionMap& map,
                           const KeyValueFile& config);
/// Occupied cells of an average map as a colored PLY (cell centers in the normalized box frame).
void write_average_map_ply(const std::filesystem::path& path, const AverageAttributionMap& map);
void write_density_profile_csv(const std::filesystem::path& path, const DensityFit& fit);

}  // namespace maskprobe
