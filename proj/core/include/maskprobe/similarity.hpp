#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

#include "maskprobe/types.hpp"

namespace maskprobe {

enum class SubMetric : std::size_t {
  kClass = 0,
  kOverlap,
  kConfidence,
  kTranslation,
  kScale,
  kOrientation,
};

inline constexpr std::size_t kSubMetricCount = 6;
inline constexpr std::array<SubMetric, kSubMetricCount> kAllSubMetrics = {
    SubMetric::kClass, SubMetric::kOverlap, SubMetric::kConfidence,
    SubMetric::kTranslation, SubMetric::kScale, SubMetric::kOrientation};

std::string_view to_string(SubMetric metric);
/// Accepts the names produced by to_string; throws InvalidArgument otherwise.
SubMetric parse_submetric(std::string_view name);

/// Which IoU decides whether two boxes overlap.
enum class OverlapMode { k3D, kBev };

struct SimilarityOptions {
  OverlapMode overlap = OverlapMode::k3D;
};

struct SimilarityBreakdown {
  std::array<double, kSubMetricCount> values{};
  double product = 0.0;
  std::optional<std::size_t> matched_index;

  double operator[](SubMetric m) const { return values[static_cast<std::size_t>(m)]; }
};

double s_class(const Detection& target, const Detection& candidate);
double s_overlap(const Detection& target, const Detection& candidate, const SimilarityOptions& options = {});
double s_conf(const Detection& target, const Detection& candidate);
double s_translation(const Detection& target, const Detection& candidate);
double s_scale(const Detection& target, const Detection& candidate);
double s_orientation(const Detection& target, const Detection& candidate);

/// All six sub-metrics and their product.
SimilarityBreakdown pairwise_similarity(const Detection& target, const Detection& candidate,
                                        const SimilarityOptions& options = {});

/// Max pairwise product over the candidates, lowest index winning ties.
/// matched_index is empty when there is no candidate or every product is zero.
SimilarityBreakdown best_similarity(const Detection& target, std::span<const Detection> candidates,
                                    const SimilarityOptions& options = {});

}  // namespace maskprobe
