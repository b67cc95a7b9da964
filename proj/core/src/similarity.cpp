#include "maskprobe/similarity.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "maskprobe/errors.hpp"
#include "maskprobe/geometry.hpp"

namespace maskprobe {

std::string_view to_string(SubMetric metric) {
  switch (metric) {
    case SubMetric::kClass: return "class";
    case SubMetric::kOverlap: return "overlap";
    case SubMetric::kConfidence: return "confidence";
    case SubMetric::kTranslation: return "translation";
    case SubMetric::kScale: return "scale";
    case SubMetric::kOrientation: return "orientation";
  }
  return "unknown";
}

SubMetric parse_submetric(std::string_view name) {
  for (SubMetric m : kAllSubMetrics) {
    if (to_string(m) == name) {
      return m;
    }
  }
  throw InvalidArgument(fmt::format("unknown sub-metric '{}'", name));
}

double s_class(const Detection& target, const Detection& candidate) {
  return target.label() == candidate.label() ? 1.0 : 0.0;
}

double s_overlap(const Detection& target, const Detection& candidate, const SimilarityOptions& options) {
  const double iou = options.overlap == OverlapMode::k3D ? iou_3d(target.box(), candidate.box())
                                                         : iou_bev(target.box(), candidate.box());
  return iou > 0.0 ? 1.0 : 0.0;
}

double s_conf(const Detection&, const Detection& candidate) { return candidate.confidence(); }

double s_translation(const Detection& target, const Detection& candidate) {
  const Vec3& a = target.box().center();
  const Vec3& b = candidate.box().center();
  const double distance = std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
  return std::max(1.0 - distance, 0.0);
}

double s_scale(const Detection& target, const Detection& candidate) {
  return aligned_iou(target.box().dims(), candidate.box().dims());
}

double s_orientation(const Detection& target, const Detection& candidate) {
  const double delta = std::abs(normalize_yaw(target.box().yaw() - candidate.box().yaw()));
  return std::max(1.0 - delta, 0.0);
}

SimilarityBreakdown pairwise_similarity(const Detection& target, const Detection& candidate,
                                        const SimilarityOptions& options) {
  SimilarityBreakdown out;
  auto& v = out.values;
  v[static_cast<std::size_t>(SubMetric::kClass)] = s_class(target, candidate);
  v[static_cast<std::size_t>(SubMetric::kOverlap)] = s_overlap(target, candidate, options);
  v[static_cast<std::size_t>(SubMetric::kConfidence)] = s_conf(target, candidate);
  v[static_cast<std::size_t>(SubMetric::kTranslation)] = s_translation(target, candidate);
  v[static_cast<std::size_t>(SubMetric::kScale)] = s_scale(target, candidate);
  v[static_cast<std::size_t>(SubMetric::kOrientation)] = s_orientation(target, candidate);
  double product = 1.0;
  for (double x : v) {
    product *= x;
  }
  out.product = product;
  return out;
}

SimilarityBreakdown best_similarity(const Detection& target, std::span<const Detection> candidates,
                                    const SimilarityOptions& options) {
  SimilarityBreakdown best;
  for (std::size_t l = 0; l < candidates.size(); ++l) {
    const Detection& candidate = candidates[l];
    // Class and overlap are zero factors; skip the rest of the work when they fail.
    if (candidate.label() != target.label()) {
      continue;
    }
    SimilarityBreakdown pair = pairwise_similarity(target, candidate, options);
    if (pair.product > best.product) {
      pair.matched_index = l;
      best = pair;
    }
  }
  return best;
}

}  // namespace maskprobe
