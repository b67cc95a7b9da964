#pragma once

#include <filesystem>
#include <optional>

#include "maskprobe/engine.hpp"
#include "maskprobe/keyvalue.hpp"

namespace maskprobe {

inline constexpr int kBundleFormatVersion = 1;

/// Everything one analysis run produced, plus what is needed to rerun it.
///
/// On disk a bundle is a directory:
///   manifest.txt        format, engine version, effective config, run summary
///   cloud.bin           the analyzed cloud (KITTI layout)
///   detections.txt      targets found on the full cloud
///   target_NNN.attr     attribution map of target NNN
///   target_NNN.<m>.attr sub-metric map <m> of target NNN
///   range_profile.csv   mean similarity per target-range bin
///   ground_truth.txt    optional
///   timing.txt          optional; the only file that varies between identical runs
struct RunBundle {
  KeyValueFile config;
  PointCloud cloud;
  AnalysisResult result;
  std::optional<DetectionSet> ground_truth;
};

struct BundleWriteOptions {
  bool timings = false;
  std::size_t workers = 0;  ///< recorded in timing.txt only
};

/// Refuses to overwrite a non-empty directory that is not a bundle.
void write_bundle(const std::filesystem::path& dir, const RunBundle& bundle, const BundleWriteOptions& options = {});
RunBundle read_bundle(const std::filesystem::path& dir);

/// Path of a target's attribution file, optionally for one sub-metric.
std::filesystem::path bundle_map_path(const std::filesystem::path& dir, std::size_t target,
                                      std::optional<SubMetric> metric = std::nullopt);

}  // namespace maskprobe
