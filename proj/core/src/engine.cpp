#include "maskprobe/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "maskprobe/errors.hpp"
#include "parallel.hpp"

namespace maskprobe {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct IterationOutcome {
  SamplingMask mask;
  std::vector<double> scores;      // [target]
  std::vector<double> submetrics;  // [target][submetric]
  bool empty = false;
};

double target_range(const Detection& d) {
  const Vec3& c = d.box().center();
  return std::sqrt(c.x * c.x + c.y * c.y + c.z * c.z);
}

AnalysisResult run_core(const PointCloud& cloud, DetectorBackend& detector, const DetectionSet& targets,
                        const AnalysisConfig& config, const std::function<SamplingMask(std::uint32_t)>& mask_source,
                        const IterationObserver& observer) {
  const auto started = Clock::now();
  AnalysisResult result;
  result.detections = targets;
  RunMetadata& meta = result.metadata;
  meta.seed = config.seed;
  meta.iterations = config.iterations;
  meta.lambda = config.density.lambda;
  meta.points = cloud.size();

  const std::size_t target_count = targets.size();
  if (target_count == 0) {
    meta.warnings.push_back("detector returned no detections on the full cloud; no maps produced");
    spdlog::warn("{}", meta.warnings.back());
    meta.seconds_total = seconds_since(started);
    return result;
  }

  const std::size_t sub_count = config.submetrics.size();
  Accumulators acc(cloud.size(), target_count, sub_count);

  double max_range = 0.0;
  std::vector<std::size_t> target_bin(target_count);
  for (std::size_t k = 0; k < target_count; ++k) {
    const double r = target_range(targets[k]);
    target_bin[k] = static_cast<std::size_t>(r / config.range_bin_width);
    max_range = std::max(max_range, r);
  }
  const std::size_t bin_count = static_cast<std::size_t>(max_range / config.range_bin_width) + 1;
  meta.range_profile.resize(bin_count);
  for (std::size_t b = 0; b < bin_count; ++b) {
    meta.range_profile[b].lower = static_cast<double>(b) * config.range_bin_width;
    meta.range_profile[b].upper = static_cast<double>(b + 1) * config.range_bin_width;
  }
  std::vector<double> target_sum(target_count, 0.0);

  const std::size_t workers = detail::resolve_workers(config.workers);
  const DetectorCapabilities& caps = detector.capabilities();
  const std::size_t call_size = std::max<std::size_t>(1, std::min(config.batch_size, caps.max_batch));
  std::mutex detector_mutex;
  std::mutex timing_mutex;
  double kept_fraction_sum = 0.0;

  const std::size_t block = std::max<std::size_t>(config.batch_size * workers * 2, 32);
  std::vector<IterationOutcome> outcomes;

  for (std::uint32_t block_start = 0; block_start < config.iterations;) {
    const auto block_len = static_cast<std::uint32_t>(
        std::min<std::size_t>(block, static_cast<std::size_t>(config.iterations - block_start)));
    outcomes.assign(block_len, IterationOutcome{});
    const std::size_t chunks = (block_len + config.batch_size - 1) / config.batch_size;

    detail::parallel_for(chunks, workers, [&](std::size_t chunk) {
      const std::size_t lo = chunk * config.batch_size;
      const std::size_t hi = std::min<std::size_t>(lo + config.batch_size, block_len);
      const auto t0 = Clock::now();
      std::vector<PointCloud> subclouds;
      std::vector<std::size_t> slots;
      for (std::size_t s = lo; s < hi; ++s) {
        IterationOutcome& out = outcomes[s];
        out.mask = mask_source(block_start + static_cast<std::uint32_t>(s));
        if (out.mask.size() != cloud.size()) {
          throw InvalidArgument(fmt::format("mask for iteration {} has length {}, cloud has {}",
                                            block_start + s, out.mask.size(), cloud.size()));
        }
        MaskedCloud masked = apply_mask(cloud, out.mask);
        out.empty = masked.cloud.empty();
        if (!out.empty) {
          subclouds.push_back(std::move(masked.cloud));
          slots.push_back(s);
        }
      }
      const auto t1 = Clock::now();

      std::vector<DetectionSet> detected;
      detected.reserve(subclouds.size());
      for (std::size_t first = 0; first < subclouds.size(); first += call_size) {
        const std::size_t n = std::min(call_size, subclouds.size() - first);
        const std::span<const PointCloud> batch(subclouds.data() + first, n);
        std::vector<DetectionSet> part;
        try {
          if (caps.reentrant) {
            part = detector.detect_batch(batch);
          } else {
            std::lock_guard lock(detector_mutex);
            part = detector.detect_batch(batch);
          }
        } catch (const std::exception& e) {
          throw DetectorError(
              fmt::format("detector failed on the batch starting at iteration {}: {}", block_start + slots[first], e.what()));
        }
        if (part.size() != n) {
          throw DetectorError(fmt::format("detector returned {} results for a batch of {} at iteration {}",
                                          part.size(), n, block_start + slots[first]));
        }
        for (auto& d : part) {
          detected.push_back(std::move(d));
        }
      }
      const auto t2 = Clock::now();

      static const DetectionSet kNone;
      std::size_t next_detected = 0;
      for (std::size_t s = lo; s < hi; ++s) {
        IterationOutcome& out = outcomes[s];
        const DetectionSet& found = out.empty ? kNone : detected[next_detected++];
        out.scores.resize(target_count);
        out.submetrics.resize(target_count * sub_count);
        for (std::size_t k = 0; k < target_count; ++k) {
          const SimilarityBreakdown best = best_similarity(targets[k], found, config.similarity);
          out.scores[k] = best.product;
          for (std::size_t m = 0; m < sub_count; ++m) {
            out.submetrics[k * sub_count + m] = best.matched_index ? best[config.submetrics[m]] : 0.0;
          }
        }
      }
      std::lock_guard lock(timing_mutex);
      meta.seconds_masks += std::chrono::duration<double>(t1 - t0).count();
      meta.seconds_detector += std::chrono::duration<double>(t2 - t1).count();
    });

    for (std::uint32_t s = 0; s < block_len; ++s) {
      const IterationOutcome& out = outcomes[s];
      acc.add(out.mask, out.scores, out.submetrics);
      if (out.empty) {
        ++meta.empty_subsamples;
      }
      kept_fraction_sum += static_cast<double>(out.mask.kept_count()) / static_cast<double>(cloud.size());
      for (std::size_t k = 0; k < target_count; ++k) {
        target_sum[k] += out.scores[k];
        meta.range_profile[target_bin[k]].sum += out.scores[k];
        ++meta.range_profile[target_bin[k]].count;
      }
      if (observer) {
        observer(block_start + s, out.mask, out.scores);
      }
    }
    block_start += block_len;
  }

  meta.mean_kept_fraction = kept_fraction_sum / static_cast<double>(config.iterations);
  meta.target_mean_similarity.resize(target_count);
  for (std::size_t k = 0; k < target_count; ++k) {
    meta.target_mean_similarity[k] = target_sum[k] / static_cast<double>(config.iterations);
  }

  const std::vector<std::uint32_t> visible(acc.visible_counts().begin(), acc.visible_counts().end());
  const auto unobserved = static_cast<std::size_t>(std::count(visible.begin(), visible.end(), 0u));
  if (unobserved > 0) {
    meta.warnings.push_back(fmt::format("{} of {} points were never kept; their scores are 0 and flagged", unobserved,
                                        visible.size()));
  }
  result.maps.reserve(target_count);
  for (std::size_t k = 0; k < target_count; ++k) {
    result.maps.emplace_back(targets[k], acc.normalized(k), visible, config.iterations);
  }
  for (std::size_t m = 0; m < sub_count; ++m) {
    SubMetricMaps sub{config.submetrics[m], {}};
    for (std::size_t k = 0; k < target_count; ++k) {
      sub.maps.emplace_back(targets[k], acc.normalized_submetric(k, m), visible, config.iterations);
    }
    result.submetric_maps.push_back(std::move(sub));
  }
  meta.seconds_total = seconds_since(started);
  return result;
}

}  // namespace

void AnalysisConfig::validate() const {
  if (iterations < 1) {
    throw InvalidArgument("iteration count must be at least 1");
  }
  if (batch_size < 1) {
    throw InvalidArgument("batch size must be at least 1");
  }
  if (!(voxel_edge > 0.0)) {
    throw InvalidArgument("voxel edge must be positive");
  }
  if (!(range_bin_width > 0.0)) {
    throw InvalidArgument("range bin width must be positive");
  }
  density.validate();
  for (std::size_t i = 0; i < submetrics.size(); ++i) {
    for (std::size_t j = i + 1; j < submetrics.size(); ++j) {
      if (submetrics[i] == submetrics[j]) {
        throw InvalidArgument(fmt::format("sub-metric '{}' listed twice", to_string(submetrics[i])));
      }
    }
  }
}

Accumulators::Accumulators(std::size_t points, std::size_t targets, std::size_t submetrics)
    : targets_(targets),
      submetrics_(submetrics),
      visible_(points, 0),
      sums_(targets, std::vector<double>(points, 0.0)),
      sub_sums_(targets * submetrics, std::vector<double>(points, 0.0)) {}

void Accumulators::add(const SamplingMask& mask, std::span<const double> scores,
                       std::span<const double> submetric_scores) {
  if (mask.size() != visible_.size()) {
    throw InvalidArgument(fmt::format("mask length {} does not match {} points", mask.size(), visible_.size()));
  }
  if (scores.size() != targets_) {
    throw InvalidArgument(fmt::format("got {} scores for {} targets", scores.size(), targets_));
  }
  if (submetrics_ > 0 && submetric_scores.size() != targets_ * submetrics_) {
    throw InvalidArgument(fmt::format("got {} sub-metric scores, expected {}", submetric_scores.size(),
                                      targets_ * submetrics_));
  }
  const auto bits = mask.bits();
  for (std::size_t j = 0; j < bits.size(); ++j) {
    visible_[j] += bits[j];
  }
  for (std::size_t k = 0; k < targets_; ++k) {
    const double s = scores[k];
    if (s == 0.0) {
      continue;
    }
    auto& sum = sums_[k];
    for (std::size_t j = 0; j < bits.size(); ++j) {
      if (bits[j]) {
        sum[j] += s;
      }
    }
  }
  for (std::size_t idx = 0; idx < targets_ * submetrics_; ++idx) {
    const double s = submetric_scores[idx];
    if (s == 0.0) {
      continue;
    }
    auto& sum = sub_sums_[idx];
    for (std::size_t j = 0; j < bits.size(); ++j) {
      if (bits[j]) {
        sum[j] += s;
      }
    }
  }
  ++iterations_;
}

std::span<const double> Accumulators::sums(std::size_t target) const { return sums_.at(target); }

std::span<const double> Accumulators::submetric_sums(std::size_t target, std::size_t submetric) const {
  return sub_sums_.at(target * submetrics_ + submetric);
}

namespace {

std::vector<double> normalize(std::span<const double> sums, std::span<const std::uint32_t> visible) {
  std::vector<double> out(sums.size(), 0.0);
  for (std::size_t j = 0; j < sums.size(); ++j) {
    if (visible[j] > 0) {
      out[j] = std::min(1.0, sums[j] / static_cast<double>(visible[j]));
    }
  }
  return out;
}

}  // namespace

std::vector<double> Accumulators::normalized(std::size_t target) const { return normalize(sums(target), visible_); }

std::vector<double> Accumulators::normalized_submetric(std::size_t target, std::size_t submetric) const {
  return normalize(submetric_sums(target, submetric), visible_);
}

AnalysisResult run_analysis(const PointCloud& cloud, DetectorBackend& detector, const AnalysisConfig& config,
                            const IterationObserver& observer) {
  config.validate();
  if (cloud.empty()) {
    throw InvalidArgument("cannot analyze an empty cloud");
  }
  DetectionSet targets;
  try {
    targets = detector.detect(cloud);
  } catch (const std::exception& e) {
    throw DetectorError(fmt::format("detector failed on the full cloud: {}", e.what()));
  }
  const auto source = [&](std::uint32_t i) {
    return generate_mask(cloud, config.voxel_edge, config.density, config.seed, i);
  };
  return run_core(cloud, detector, targets, config, source, observer);
}

AnalysisResult run_analysis_with_masks(const PointCloud& cloud, DetectorBackend& detector, const DetectionSet& targets,
                                       const AnalysisConfig& config,
                                       const std::function<SamplingMask(std::uint32_t)>& mask_source) {
  config.validate();
  if (cloud.empty()) {
    throw InvalidArgument("cannot analyze an empty cloud");
  }
  return run_core(cloud, detector, targets, config, mask_source, {});
}

}  // namespace maskprobe
