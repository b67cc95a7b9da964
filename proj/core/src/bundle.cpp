#include "maskprobe/bundle.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "maskprobe/errors.hpp"
#include "maskprobe/io.hpp"

#ifndef MASKPROBE_VERSION
#define MASKPROBE_VERSION "unknown"
#endif

namespace maskprobe {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kConfigPrefix = "config.";

void prepare_dir(const fs::path& dir) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) {
      throw FormatError(fmt::format("{} exists and is not a directory", dir.string()));
    }
    if (!fs::is_empty(dir)) {
      if (!fs::exists(dir / "manifest.txt")) {
        throw FormatError(fmt::format("{} is not empty and is not a bundle; refusing to overwrite", dir.string()));
      }
      for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file()) {
          fs::remove(entry.path());
        }
      }
    }
  } else {
    fs::create_directories(dir);
  }
}

std::string join_submetrics(const std::vector<SubMetricMaps>& maps) {
  std::string out;
  for (const auto& m : maps) {
    if (!out.empty()) {
      out += ',';
    }
    out += to_string(m.metric);
  }
  return out;
}

}  // namespace

fs::path bundle_map_path(const fs::path& dir, std::size_t target, std::optional<SubMetric> metric) {
  if (metric) {
    return dir / fmt::format("target_{:03}.{}.attr", target, to_string(*metric));
  }
  return dir / fmt::format("target_{:03}.attr", target);
}

void write_bundle(const fs::path& dir, const RunBundle& bundle, const BundleWriteOptions& options) {
  const AnalysisResult& r = bundle.result;
  const RunMetadata& meta = r.metadata;
  if (r.maps.size() != r.detections.size()) {
    throw InvalidArgument("bundle result has a map count different from its detection count");
  }
  prepare_dir(dir);

  KeyValueFile manifest;
  manifest.set("format", fmt::format("maskprobe-bundle {}", kBundleFormatVersion));
  manifest.set("engine_version", MASKPROBE_VERSION);
  for (const auto& [k, v] : bundle.config.entries()) {
    manifest.set(std::string(kConfigPrefix) + k, v);
  }
  manifest.set("run.seed", meta.seed);
  manifest.set("run.iterations", static_cast<std::uint64_t>(meta.iterations));
  manifest.set("run.lambda", meta.lambda);
  manifest.set("run.points", static_cast<std::uint64_t>(meta.points));
  manifest.set("run.targets", static_cast<std::uint64_t>(r.detections.size()));
  manifest.set("run.submetrics", join_submetrics(r.submetric_maps));
  manifest.set("run.empty_subsamples", static_cast<std::uint64_t>(meta.empty_subsamples));
  manifest.set("run.mean_kept_fraction", meta.mean_kept_fraction);
  for (std::size_t k = 0; k < meta.target_mean_similarity.size(); ++k) {
    manifest.set(fmt::format("run.target_{:03}.mean_similarity", k), meta.target_mean_similarity[k]);
  }
  for (std::size_t w = 0; w < meta.warnings.size(); ++w) {
    manifest.set(fmt::format("run.warning_{}", w), meta.warnings[w]);
  }
  manifest.set("run.ground_truth", bundle.ground_truth.has_value());
  manifest.save(dir / "manifest.txt");

  write_kitti_bin(dir / "cloud.bin", bundle.cloud);
  write_detections(dir / "detections.txt", r.detections);
  for (std::size_t k = 0; k < r.maps.size(); ++k) {
    write_attribution(bundle_map_path(dir, k), r.maps[k]);
  }
  for (const SubMetricMaps& sm : r.submetric_maps) {
    for (std::size_t k = 0; k < sm.maps.size(); ++k) {
      write_attribution(bundle_map_path(dir, k, sm.metric), sm.maps[k]);
    }
  }
  {
    std::ostringstream csv;
    csv << "range_lower,range_upper,mean_similarity,samples\n";
    for (const RangeProfileBin& b : meta.range_profile) {
      csv << fmt::format("{},{},{},{}\n", format_double(b.lower), format_double(b.upper), format_double(b.mean()),
                         b.count);
    }
    std::ofstream out(dir / "range_profile.csv", std::ios::binary | std::ios::trunc);
    out << csv.str();
    if (!out) {
      throw FormatError(fmt::format("cannot write {}", (dir / "range_profile.csv").string()));
    }
  }
  if (bundle.ground_truth) {
    write_detections(dir / "ground_truth.txt", *bundle.ground_truth);
  }
  if (options.timings) {
    KeyValueFile timing;
    timing.set("workers", static_cast<std::uint64_t>(options.workers));
    timing.set("seconds_masks", meta.seconds_masks);
    timing.set("seconds_detector", meta.seconds_detector);
    timing.set("seconds_total", meta.seconds_total);
    timing.save(dir / "timing.txt");
  }
}

RunBundle read_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw FormatError(fmt::format("{} is not a bundle directory", dir.string()));
  }
  const KeyValueFile manifest = KeyValueFile::load(dir / "manifest.txt");
  const std::string expected = fmt::format("maskprobe-bundle {}", kBundleFormatVersion);
  if (manifest.get("format") != expected) {
    throw FormatError(fmt::format("{}: unsupported bundle format '{}'", dir.string(), manifest.get("format")));
  }
  RunBundle bundle;
  for (const auto& [k, v] : manifest.entries()) {
    if (k.starts_with(kConfigPrefix)) {
      bundle.config.set(k.substr(kConfigPrefix.size()), v);
    }
  }
  bundle.cloud = read_kitti_bin(dir / "cloud.bin");
  AnalysisResult& r = bundle.result;
  RunMetadata& meta = r.metadata;
  meta.seed = manifest.get_uint("run.seed");
  meta.iterations = static_cast<std::uint32_t>(manifest.get_uint("run.iterations"));
  meta.lambda = manifest.get_double("run.lambda");
  meta.points = manifest.get_uint("run.points");
  meta.empty_subsamples = manifest.get_uint("run.empty_subsamples");
  meta.mean_kept_fraction = manifest.get_double("run.mean_kept_fraction");
  if (meta.points != bundle.cloud.size()) {
    throw FormatError(fmt::format("{}: manifest says {} points but cloud.bin has {}", dir.string(), meta.points,
                                  bundle.cloud.size()));
  }
  r.detections = read_detections(dir / "detections.txt");
  const std::size_t targets = manifest.get_uint("run.targets");
  if (targets != r.detections.size()) {
    throw FormatError(fmt::format("{}: manifest lists {} targets, detections.txt has {}", dir.string(), targets,
                                  r.detections.size()));
  }
  for (std::size_t k = 0; k < targets; ++k) {
    r.maps.push_back(read_attribution(bundle_map_path(dir, k)));
    if (r.maps.back().size() != bundle.cloud.size()) {
      throw FormatError(fmt::format("{}: map {} does not match the cloud size", dir.string(), k));
    }
    if (const std::string* s = manifest.find(fmt::format("run.target_{:03}.mean_similarity", k))) {
      meta.target_mean_similarity.push_back(std::stod(*s));
    }
  }
  std::string_view names = manifest.get("run.submetrics");
  while (!names.empty()) {
    const auto comma = names.find(',');
    const SubMetric metric = parse_submetric(names.substr(0, comma));
    names = comma == std::string_view::npos ? std::string_view{} : names.substr(comma + 1);
    SubMetricMaps sm{metric, {}};
    for (std::size_t k = 0; k < targets; ++k) {
      sm.maps.push_back(read_attribution(bundle_map_path(dir, k, metric)));
    }
    r.submetric_maps.push_back(std::move(sm));
  }
  if (manifest.get_bool("run.ground_truth")) {
    bundle.ground_truth = read_detections(dir / "ground_truth.txt");
  }
  return bundle;
}

}  // namespace maskprobe
