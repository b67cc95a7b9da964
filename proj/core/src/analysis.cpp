#include "maskprobe/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "maskprobe/errors.hpp"
#include "maskprobe/geometry.hpp"
#include "maskprobe/rng.hpp"
#include "maskprobe/sampling.hpp"

namespace maskprobe {

namespace {

Vec3 as_vec(const Point& p) {
  return {p.x, p.y, p.z};
}

void check_map(const PointCloud& cloud, const AttributionMap& map) {
  if (map.size() != cloud.size()) {
    throw InvalidArgument(
        fmt::format("attribution map has {} points but the cloud has {}", map.size(), cloud.size()));
  }
}

// Fisher-Yates with our own uniform draw, so the permutation does not depend
// on the standard library's shuffle.
void shuffle(std::vector<std::uint32_t>& v, std::mt19937_64& gen) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(gen) * static_cast<double>(i));
    std::swap(v[i - 1], v[std::min(j, i - 1)]);
  }
}

}  // namespace

Vec3 to_box_frame(const Box3D& box, const Vec3& p) {
  const Vec3 local = box.to_local(p);
  return {local.x / box.length(), local.y / box.width(), local.z / box.height()};
}

Vec3 from_box_frame(const Box3D& box, const Vec3& u) {
  return box.to_world({u.x * box.length(), u.y * box.width(), u.z * box.height()});
}

std::array<std::size_t, 3> AverageAttributionMap::shape() const {
  return {resolution[0] + 2 * margin_cells[0], resolution[1] + 2 * margin_cells[1],
          resolution[2] + 2 * margin_cells[2]};
}

std::size_t AverageAttributionMap::index(std::size_t ix, std::size_t iy, std::size_t iz) const {
  const auto s = shape();
  return (ix * s[1] + iy) * s[2] + iz;
}

Vec3 AverageAttributionMap::cell_center(std::size_t ix, std::size_t iy, std::size_t iz) const {
  auto coord = [&](std::size_t a, std::size_t i) {
    return (static_cast<double>(i) - static_cast<double>(margin_cells[a]) + 0.5) /
               static_cast<double>(resolution[a]) -
           0.5;
  };
  return {coord(0, ix), coord(1, iy), coord(2, iz)};
}

double AverageAttributionMap::mean_score(std::size_t cell) const {
  return count[cell] ? score_sum[cell] / static_cast<double>(count[cell]) : 0.0;
}

double AverageAttributionMap::mean_intensity(std::size_t cell) const {
  return count[cell] ? intensity_sum[cell] / static_cast<double>(count[cell]) : 0.0;
}

AverageAttributionMap average_maps(std::span<const AttributedCloud> results, const Label& label,
                                   const AverageMapOptions& options) {
  for (std::size_t r : options.resolution) {
    if (r == 0) {
      throw InvalidArgument("average map resolution must be positive");
    }
  }
  if (!(options.margin >= 0.0) || !std::isfinite(options.margin)) {
    throw InvalidArgument("average map margin must be finite and non-negative");
  }
  AverageAttributionMap out;
  out.label = label;
  out.resolution = options.resolution;
  out.margin = options.margin;
  for (std::size_t a = 0; a < 3; ++a) {
    out.margin_cells[a] =
        static_cast<std::size_t>(std::ceil(static_cast<double>(options.resolution[a]) * options.margin / 2.0 - 1e-9));
  }
  const auto shape = out.shape();
  const std::size_t cells = shape[0] * shape[1] * shape[2];
  out.score_sum.assign(cells, 0.0);
  out.intensity_sum.assign(cells, 0.0);
  out.count.assign(cells, 0);

  const double limit = 0.5 + options.margin / 2.0 + 1e-9;
  for (const AttributedCloud& result : results) {
    for (const AttributionMap& map : result.maps) {
      if (map.target().label() != label) {
        continue;
      }
      check_map(result.cloud, map);
      ++out.detections;
      const Box3D& box = map.target().box();
      for (std::size_t j = 0; j < result.cloud.size(); ++j) {
        if (map.unobserved(j)) {
          continue;
        }
        const Vec3 u = to_box_frame(box, as_vec(result.cloud[j]));
        const double coords[3] = {u.x, u.y, u.z};
        std::size_t idx[3];
        bool inside = true;
        for (std::size_t a = 0; a < 3 && inside; ++a) {
          if (std::abs(coords[a]) > limit) {
            inside = false;
            break;
          }
          const double cell = std::floor((coords[a] + 0.5) * static_cast<double>(out.resolution[a])) +
                              static_cast<double>(out.margin_cells[a]);
          idx[a] = static_cast<std::size_t>(std::clamp(cell, 0.0, static_cast<double>(shape[a] - 1)));
        }
        if (!inside) {
          continue;
        }
        const std::size_t c = out.index(idx[0], idx[1], idx[2]);
        out.score_sum[c] += map.scores()[j];
        out.intensity_sum[c] += result.cloud[j].intensity;
        ++out.count[c];
      }
    }
  }
  if (out.detections == 0) {
    throw InsufficientData(fmt::format("no detections of class '{}' to average", label));
  }
  return out;
}

std::string_view to_string(DropOrder order) {
  switch (order) {
    case DropOrder::kDescending:
      return "descending";
    case DropOrder::kAscending:
      return "ascending";
    case DropOrder::kRandom:
      return "random";
  }
  return "unknown";
}

std::vector<double> DropCurveOptions::default_fractions() {
  std::vector<double> f;
  for (int i = 0; i <= 20; ++i) {
    f.push_back(i / 20.0);
  }
  return f;
}

DropCurve drop_curve(const PointCloud& cloud, DetectorBackend& detector, std::span<const AttributionMap> maps,
                     DropOrder order, const DropCurveOptions& options) {
  const auto& fractions = options.fractions;
  if (fractions.empty()) {
    throw InvalidArgument("drop curve needs at least one fraction");
  }
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] >= 0.0 && fractions[i] <= 1.0) || (i > 0 && !(fractions[i] > fractions[i - 1]))) {
      throw InvalidArgument("drop fractions must be strictly increasing within [0, 1]");
    }
  }
  const std::size_t repeats = order == DropOrder::kRandom ? options.repeats : 1;
  if (repeats == 0) {
    throw InvalidArgument("random drop curve needs at least one repeat");
  }

  DropCurve curve;
  curve.order = order;
  curve.fractions = fractions;
  curve.mean_iou.assign(fractions.size(), 0.0);
  curve.mean_confidence.assign(fractions.size(), 0.0);
  curve.objects = maps.size();
  curve.repeats = repeats;
  if (maps.empty()) {
    return curve;
  }

  // In-box points of every target, ranked for removal.
  std::vector<std::vector<std::uint32_t>> ranked(maps.size());
  for (std::size_t k = 0; k < maps.size(); ++k) {
    check_map(cloud, maps[k]);
    const Box3D& box = maps[k].target().box();
    for (std::size_t j = 0; j < cloud.size(); ++j) {
      if (box.contains(as_vec(cloud[j]), options.tolerance)) {
        ranked[k].push_back(static_cast<std::uint32_t>(j));
      }
    }
    const auto scores = maps[k].scores();
    if (order == DropOrder::kDescending) {
      std::stable_sort(ranked[k].begin(), ranked[k].end(),
                       [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b]; });
    } else if (order == DropOrder::kAscending) {
      std::stable_sort(ranked[k].begin(), ranked[k].end(),
                       [&](std::uint32_t a, std::uint32_t b) { return scores[a] < scores[b]; });
    }
  }

  const DetectorCapabilities& caps = detector.capabilities();
  for (std::size_t rep = 0; rep < repeats; ++rep) {
    std::vector<std::vector<std::uint32_t>> order_k = ranked;
    if (order == DropOrder::kRandom) {
      auto gen = substream(options.seed, StreamTag::kDropOrder, rep);
      for (auto& v : order_k) {
        shuffle(v, gen);
      }
    }

    std::vector<PointCloud> reduced;
    reduced.reserve(fractions.size());
    for (double f : fractions) {
      std::vector<std::uint8_t> keep(cloud.size(), 1);
      for (const auto& v : order_k) {
        const auto n = static_cast<std::size_t>(std::llround(f * static_cast<double>(v.size())));
        for (std::size_t i = 0; i < n; ++i) {
          keep[v[i]] = 0;
        }
      }
      reduced.push_back(apply_mask(cloud, SamplingMask(std::move(keep))).cloud);
    }

    std::vector<DetectionSet> outputs(fractions.size());
    std::vector<PointCloud> batch;
    std::vector<std::size_t> slots;
    auto flush = [&] {
      if (batch.empty()) {
        return;
      }
      std::vector<DetectionSet> got;
      try {
        got = detector.detect_batch(batch);
      } catch (const std::exception& e) {
        throw DetectorError(fmt::format("detector failed during {} point dropping at fraction {}: {}",
                                        to_string(order), fractions[slots.front()], e.what()));
      }
      if (got.size() != batch.size()) {
        throw DetectorError(fmt::format("detector returned {} results for {} clouds", got.size(), batch.size()));
      }
      for (std::size_t i = 0; i < slots.size(); ++i) {
        outputs[slots[i]] = std::move(got[i]);
      }
      batch.clear();
      slots.clear();
    };
    for (std::size_t i = 0; i < fractions.size(); ++i) {
      if (reduced[i].empty() && !caps.supports_empty_cloud) {
        continue;
      }
      batch.push_back(std::move(reduced[i]));
      slots.push_back(i);
      if (batch.size() >= std::max<std::size_t>(1, caps.max_batch)) {
        flush();
      }
    }
    flush();

    for (std::size_t i = 0; i < fractions.size(); ++i) {
      double iou_sum = 0.0;
      double conf_sum = 0.0;
      for (const AttributionMap& map : maps) {
        const SimilarityBreakdown best = best_similarity(map.target(), outputs[i], options.similarity);
        if (best.matched_index) {
          const Detection& m = outputs[i][*best.matched_index];
          iou_sum += iou_3d(map.target().box(), m.box());
          conf_sum += m.confidence();
        }
      }
      curve.mean_iou[i] += iou_sum / static_cast<double>(maps.size());
      curve.mean_confidence[i] += conf_sum / static_cast<double>(maps.size());
    }
  }
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    curve.mean_iou[i] /= static_cast<double>(repeats);
    curve.mean_confidence[i] /= static_cast<double>(repeats);
  }
  return curve;
}

DropCurve merge_curves(std::span<const DropCurve> curves) {
  if (curves.empty()) {
    throw InvalidArgument("no drop curves to merge");
  }
  DropCurve out;
  out.order = curves.front().order;
  out.fractions = curves.front().fractions;
  out.repeats = curves.front().repeats;
  out.mean_iou.assign(out.fractions.size(), 0.0);
  out.mean_confidence.assign(out.fractions.size(), 0.0);
  for (const DropCurve& c : curves) {
    if (c.order != out.order || c.fractions != out.fractions) {
      throw InvalidArgument("drop curves differ in ordering or fraction grid");
    }
    out.objects += c.objects;
    for (std::size_t i = 0; i < out.fractions.size(); ++i) {
      out.mean_iou[i] += c.mean_iou[i] * static_cast<double>(c.objects);
      out.mean_confidence[i] += c.mean_confidence[i] * static_cast<double>(c.objects);
    }
  }
  if (out.objects > 0) {
    for (std::size_t i = 0; i < out.fractions.size(); ++i) {
      out.mean_iou[i] /= static_cast<double>(out.objects);
      out.mean_confidence[i] /= static_cast<double>(out.objects);
    }
  }
  return out;
}

double curve_auc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw InvalidArgument("curve_auc: x and y differ in length");
  }
  double area = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    area += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  }
  return area;
}

PointingGameResult pointing_game(std::span<const AttributedCloud> results,
                                 std::span<const DetectionSet> ground_truth, const PointingGameOptions& options) {
  if (results.size() != ground_truth.size()) {
    throw InvalidArgument(fmt::format("{} results but {} ground-truth sets", results.size(), ground_truth.size()));
  }
  if (!(options.dilation > 0.0) || !std::isfinite(options.dilation)) {
    throw InvalidArgument("dilation must be positive");
  }
  PointingGameResult out;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const AttributedCloud& result = results[i];
    for (const AttributionMap& map : result.maps) {
      check_map(result.cloud, map);
      ++out.targets;
      const Detection& target = map.target();
      const Detection* gt = nullptr;
      double best_iou = 0.0;
      for (const Detection& g : ground_truth[i]) {
        if (g.label() != target.label()) {
          continue;
        }
        const double iou = iou_3d(g.box(), target.box());
        if (iou >= options.match_iou && iou > best_iou) {
          best_iou = iou;
          gt = &g;
        }
      }
      if (gt == nullptr || map.size() == 0) {
        continue;
      }
      ++out.evaluated;
      const auto scores = map.scores();
      const std::size_t arg = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
      const Box3D box = options.dilation == 1.0 ? gt->box() : gt->box().scaled(options.dilation);
      if (box.contains(as_vec(result.cloud[arg]), options.tolerance)) {
        ++out.hits;
      }
    }
  }
  if (out.evaluated == 0) {
    throw InsufficientData("pointing game: no correctly detected object to evaluate");
  }
  out.score = static_cast<double>(out.hits) / static_cast<double>(out.evaluated);
  return out;
}

}  // namespace maskprobe
