#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskprobe/detector.hpp"
#include "maskprobe/sampling.hpp"
#include "maskprobe/similarity.hpp"
#include "maskprobe/types.hpp"

namespace maskprobe {

struct AnalysisConfig {
  std::uint32_t iterations = 3000;
  double voxel_edge = 0.20;
  DensityModel density;
  std::uint64_t seed = 0;
  std::size_t batch_size = 16;
  /// 0 means std::thread::hardware_concurrency().
  std::size_t workers = 0;
  std::vector<SubMetric> submetrics;
  SimilarityOptions similarity;
  double range_bin_width = 10.0;

  void validate() const;
};

/// Running sums for one analysis. Accumulation order is fixed by the caller
/// (iteration order), which is what makes results bit-reproducible.
class Accumulators {
 public:
  Accumulators(std::size_t points, std::size_t targets, std::size_t submetrics = 0);

  /// Adds S_k * mask into each target's sum and the mask into the visible counts.
  /// `submetric_scores` is laid out [target][submetric] and may be empty when
  /// no sub-metric maps are tracked.
  void add(const SamplingMask& mask, std::span<const double> scores, std::span<const double> submetric_scores = {});

  std::size_t points() const noexcept { return visible_.size(); }
  std::size_t targets() const noexcept { return targets_; }
  std::size_t submetrics() const noexcept { return submetrics_; }
  std::uint32_t iterations() const noexcept { return iterations_; }
  std::span<const std::uint32_t> visible_counts() const noexcept { return visible_; }
  std::span<const double> sums(std::size_t target) const;
  std::span<const double> submetric_sums(std::size_t target, std::size_t submetric) const;

  /// Empirical normalization: sum / visible count, 0 for unobserved points.
  std::vector<double> normalized(std::size_t target) const;
  std::vector<double> normalized_submetric(std::size_t target, std::size_t submetric) const;

 private:
  std::size_t targets_;
  std::size_t submetrics_;
  std::uint32_t iterations_ = 0;
  std::vector<std::uint32_t> visible_;
  std::vector<std::vector<double>> sums_;
  std::vector<std::vector<double>> sub_sums_;
};

/// Mean similarity per target-range bin over all iterations and targets.
struct RangeProfileBin {
  double lower = 0.0;
  double upper = 0.0;
  double sum = 0.0;
  std::uint64_t count = 0;

  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
};

struct RunMetadata {
  std::uint64_t seed = 0;
  std::uint32_t iterations = 0;
  double lambda = 0.0;
  std::size_t points = 0;
  std::size_t empty_subsamples = 0;
  double mean_kept_fraction = 0.0;
  std::vector<double> target_mean_similarity;
  std::vector<RangeProfileBin> range_profile;
  double seconds_masks = 0.0;
  double seconds_detector = 0.0;
  double seconds_total = 0.0;
  std::vector<std::string> warnings;
};

struct SubMetricMaps {
  SubMetric metric;
  std::vector<AttributionMap> maps;  ///< one per target
};

struct AnalysisResult {
  DetectionSet detections;
  std::vector<AttributionMap> maps;
  std::vector<SubMetricMaps> submetric_maps;
  RunMetadata metadata;
};

/// Observer for each iteration's outcome, in iteration order (tests, diagnostics).
using IterationObserver = std::function<void(std::uint32_t iteration, const SamplingMask&, std::span<const double> scores)>;

/// Monte Carlo attribution of every detection in `cloud`.
AnalysisResult run_analysis(const PointCloud& cloud, DetectorBackend& detector, const AnalysisConfig& config,
                            const IterationObserver& observer = {});

/// Same loop with caller-supplied masks and targets (exact oracles and tests).
/// `mask_source(i)` returns the mask of iteration i.
AnalysisResult run_analysis_with_masks(const PointCloud& cloud, DetectorBackend& detector, const DetectionSet& targets,
                                       const AnalysisConfig& config,
                                       const std::function<SamplingMask(std::uint32_t)>& mask_source);

}  // namespace maskprobe
