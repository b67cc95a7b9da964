// maskprobe: command-line front end.
//
//   maskprobe gen-scene     synthetic scenes with ground truth
//   maskprobe fit-density   dataset density model
//   maskprobe analyze       Monte Carlo attribution of one cloud -> bundle
//   maskprobe average       class-averaged maps from bundles
//   maskprobe drop-eval     point-dropping curves from bundles
//   maskprobe pointing-game arg-max hit rate against ground truth
//   maskprobe serve-check   exercise an external detector over the wire protocol

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "detector_spec.hpp"
#include "maskprobe/analysis.hpp"
#include "maskprobe/bundle.hpp"
#include "maskprobe/engine.hpp"
#include "maskprobe/errors.hpp"
#include "maskprobe/io.hpp"
#include "maskprobe/scene.hpp"
#include "maskprobe/wire_client.hpp"

namespace fs = std::filesystem;
using namespace maskprobe;

namespace {

struct LambdaRef {
  bool enabled = true;
  double range = 25.0;
  double probability = 0.15;
};

LambdaRef parse_lambda_ref(const std::string& text) {
  LambdaRef ref;
  if (text == "none") {
    ref.enabled = false;
    return ref;
  }
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) {
      throw std::invalid_argument("no colon");
    }
    std::size_t used = 0;
    ref.range = std::stod(text.substr(0, colon), &used);
    if (used != colon) {
      throw std::invalid_argument("range");
    }
    const std::string p = text.substr(colon + 1);
    ref.probability = std::stod(p, &used);
    if (used != p.size()) {
      throw std::invalid_argument("probability");
    }
  } catch (const std::exception&) {
    throw InvalidArgument(fmt::format("--lambda-ref expects RANGE:PROBABILITY or none, got '{}'", text));
  }
  if (!(ref.range >= 0.0) || !(ref.probability > 0.0 && ref.probability <= 1.0)) {
    throw InvalidArgument(fmt::format("--lambda-ref '{}' needs range >= 0 and probability in (0, 1]", text));
  }
  return ref;
}

std::array<std::size_t, 3> parse_resolution(const std::string& text) {
  std::array<std::size_t, 3> res{};
  unsigned long v[3];
  char tail = 0;
  if (std::sscanf(text.c_str(), "%lux%lux%lu%c", &v[0], &v[1], &v[2], &tail) != 3 || !v[0] || !v[1] || !v[2]) {
    throw InvalidArgument(fmt::format("--res expects NXxNYxNZ, got '{}'", text));
  }
  for (int i = 0; i < 3; ++i) {
    res[i] = v[i];
  }
  return res;
}

std::vector<double> parse_fractions(const std::string& text) {
  double lo = 0;
  double hi = 0;
  double step = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%lf:%lf:%lf%c", &lo, &hi, &step, &tail) == 3) {
    if (!(step > 0) || !(lo >= 0) || !(hi <= 1) || !(lo <= hi)) {
      throw InvalidArgument(fmt::format("--fractions range '{}' is invalid", text));
    }
    std::vector<double> out;
    const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long i = 0; i <= n; ++i) {
      out.push_back(std::min(hi, lo + static_cast<double>(i) * step));
    }
    return out;
  }
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) {
      throw InvalidArgument(fmt::format("--fractions expects LO:HI:STEP or a comma list, got '{}'", text));
    }
    out.push_back(v);
    if (comma == std::string::npos) {
      break;
    }
    start = comma + 1;
  }
  return out;
}

std::vector<SubMetric> parse_submetrics(const std::vector<std::string>& names) {
  std::vector<SubMetric> out;
  for (const std::string& n : names) {
    if (n == "all") {
      out.assign(kAllSubMetrics.begin(), kAllSubMetrics.end());
      continue;
    }
    out.push_back(parse_submetric(n));
  }
  return out;
}

std::vector<RunBundle> load_bundles(const std::vector<std::string>& paths) {
  if (paths.empty()) {
    throw InvalidArgument("no bundles given");
  }
  std::vector<RunBundle> out;
  out.reserve(paths.size());
  for (const auto& p : paths) {
    out.push_back(read_bundle(p));
  }
  return out;
}

std::vector<AttributedCloud> as_attributed(std::vector<RunBundle>& bundles) {
  std::vector<AttributedCloud> out;
  out.reserve(bundles.size());
  for (auto& b : bundles) {
    out.push_back({std::move(b.cloud), std::move(b.result.maps)});
  }
  return out;
}

// ---- gen-scene ----

struct GenSceneArgs {
  std::uint64_t seed = 0;
  std::size_t objects = 8;
  std::size_t count = 1;
  double min_range = 10.0;
  double max_range = 50.0;
  std::size_t ground_points = 8000;
  double marker_fraction = 0.05;
  std::string classes = "car";
  std::string out_cloud;
  std::string out_gt;
  std::string out_dir;
};

int run_gen_scene(const GenSceneArgs& a) {
  if (a.out_dir.empty() && a.out_cloud.empty()) {
    throw InvalidArgument("gen-scene needs --out-cloud or --out-dir");
  }
  if (!a.out_dir.empty() && !a.out_cloud.empty()) {
    throw InvalidArgument("use either --out-cloud or --out-dir, not both");
  }
  SceneSpec spec;
  spec.objects = a.objects;
  spec.min_range = a.min_range;
  spec.max_range = a.max_range;
  spec.ground_points = a.ground_points;
  spec.marker_fraction = a.marker_fraction;
  if (a.classes == "all") {
    for (auto& c : spec.classes) {
      c.weight = 1.0;
    }
  }
  if (!a.out_dir.empty()) {
    fs::create_directories(a.out_dir);
  }
  for (std::size_t i = 0; i < a.count; ++i) {
    spec.seed = a.seed + i;
    const SyntheticScene scene = generate_scene(spec);
    fs::path cloud_path = a.out_cloud;
    fs::path gt_path = a.out_gt;
    if (!a.out_dir.empty()) {
      cloud_path = fs::path(a.out_dir) / fmt::format("scene_{:04}.bin", i);
      gt_path = fs::path(a.out_dir) / fmt::format("scene_{:04}.gt.txt", i);
    }
    write_kitti_bin(cloud_path, scene.cloud);
    if (!gt_path.empty()) {
      write_detections(gt_path, scene.ground_truth());
    }
    fmt::print("{}: {} points, {} objects\n", cloud_path.string(), scene.cloud.size(), scene.objects.size());
  }
  return 0;
}

// ---- fit-density ----

struct FitArgs {
  std::string clouds;
  double voxel = 0.20;
  double bin_width = 1.0;
  double radius = 1.0;
  std::size_t min_voxels = 10;
  std::string lambda_ref = "25:0.15";
  std::string out;
  std::string profile;
};

int run_fit_density(const FitArgs& a) {
  const LambdaRef ref = parse_lambda_ref(a.lambda_ref);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(a.clouds)) {
    if (entry.is_regular_file() && entry.path().extension() == ".bin") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    throw InsufficientData(fmt::format("no .bin clouds in {}", a.clouds));
  }
  std::vector<PointCloud> clouds;
  for (const auto& f : files) {
    clouds.push_back(read_kitti_bin(f));
  }
  VoxelGridSpec grid;
  grid.edge_length = a.voxel;
  DensityFitOptions options;
  options.neighborhood_radius = a.radius;
  options.min_voxels_per_bin = a.min_voxels;
  const DensityFit fit = fit_density_model(clouds, grid, a.bin_width, options);
  DensityModel model;
  model.coeffs = fit.coeffs;
  model.lambda = ref.enabled ? calibrate_lambda(fit.coeffs, ref.range, ref.probability) : 1.0;
  KeyValueFile kv = density_to_keyvalue(model, a.voxel, &fit);
  kv.set("fit.lambda_ref", a.lambda_ref);
  kv.save(a.out);
  if (!a.profile.empty()) {
    write_density_profile_csv(a.profile, fit);
  }
  fmt::print("fitted a={} b={} c={} lambda={} from {} clouds ({} bins); P(10)={:.4f} P(25)={:.4f} P(50)={:.4f}\n",
             format_double(fit.coeffs.a), format_double(fit.coeffs.b), format_double(fit.coeffs.c),
             format_double(model.lambda), files.size(), fit.profile.used_bins(), keep_probability(model, 10),
             keep_probability(model, 25), keep_probability(model, 50));
  return 0;
}

// ---- analyze ----

struct AnalyzeArgs {
  std::string cloud;
  std::string detector = "mock";
  std::string density;
  double fixed_p = -1.0;
  std::uint32_t iterations = 3000;
  std::uint64_t seed = 0;
  std::string lambda_ref = "25:0.15";
  double voxel = 0.20;
  std::size_t batch = 16;
  std::vector<std::string> submetrics;
  std::string overlap = "3d";
  std::string gt;
  std::string out;
  std::string ply_dir;
  bool timings = false;
  long timeout_ms = 60000;
};

int run_analyze(const AnalyzeArgs& a, std::size_t workers) {
  tools::check_detector_spec(a.detector);
  const LambdaRef ref = parse_lambda_ref(a.lambda_ref);
  if (a.density.empty() == (a.fixed_p < 0.0)) {
    throw InvalidArgument("analyze needs exactly one of --density or --fixed-p");
  }
  AnalysisConfig cfg;
  cfg.iterations = a.iterations;
  cfg.seed = a.seed;
  cfg.voxel_edge = a.voxel;
  cfg.batch_size = a.batch;
  cfg.workers = workers;
  cfg.submetrics = parse_submetrics(a.submetrics);
  cfg.similarity.overlap = a.overlap == "bev" ? OverlapMode::kBev : OverlapMode::k3D;
  if (a.fixed_p >= 0.0) {
    if (!(a.fixed_p <= 1.0)) {
      throw InvalidArgument("--fixed-p must lie in [0, 1]");
    }
    cfg.density.coeffs = {0.0, 0.0, 1.0};
    cfg.density.lambda = a.fixed_p;
    cfg.density.p_min = std::min(cfg.density.p_min, a.fixed_p);
    cfg.density.p_max = std::max(cfg.density.p_max, a.fixed_p);
  } else {
    const StoredDensity stored = load_density(a.density);
    cfg.density = stored.model;
    if (ref.enabled) {
      cfg.density.lambda = calibrate_lambda(cfg.density.coeffs, ref.range, ref.probability);
    }
    if (stored.voxel_edge != a.voxel) {
      spdlog::warn("density model was fitted with {} m voxels, sampling uses {} m", stored.voxel_edge, a.voxel);
    }
  }
  cfg.validate();

  RunBundle bundle;
  bundle.cloud = read_kitti_bin(a.cloud);
  if (!a.gt.empty()) {
    bundle.ground_truth = read_detections(a.gt);
  }
  auto detector = tools::make_detector(a.detector, std::chrono::milliseconds(a.timeout_ms));

  KeyValueFile& c = bundle.config;
  c.set("cloud", a.cloud);
  c.set("detector", a.detector);
  c.set("iterations", static_cast<std::uint64_t>(cfg.iterations));
  c.set("seed", cfg.seed);
  c.set("voxel_edge", cfg.voxel_edge);
  c.set("batch_size", static_cast<std::uint64_t>(cfg.batch_size));
  c.set("density_file", a.density.empty() ? std::string("none") : a.density);
  c.set("fixed_p", a.fixed_p >= 0.0 ? format_double(a.fixed_p) : std::string("none"));
  c.set("lambda_ref", a.lambda_ref);
  c.set("density.a", cfg.density.coeffs.a);
  c.set("density.b", cfg.density.coeffs.b);
  c.set("density.c", cfg.density.coeffs.c);
  c.set("density.lambda", cfg.density.lambda);
  c.set("density.p_min", cfg.density.p_min);
  c.set("density.p_max", cfg.density.p_max);
  std::string names;
  for (SubMetric m : cfg.submetrics) {
    names += names.empty() ? "" : ",";
    names += to_string(m);
  }
  c.set("submetrics", names);
  c.set("overlap", a.overlap);
  c.set("model", detector->capabilities().model_name);

  bundle.result = run_analysis(bundle.cloud, *detector, cfg);
  BundleWriteOptions wopts;
  wopts.timings = a.timings;
  wopts.workers = cfg.workers;
  write_bundle(a.out, bundle, wopts);
  if (!a.ply_dir.empty()) {
    fs::create_directories(a.ply_dir);
    for (std::size_t k = 0; k < bundle.result.maps.size(); ++k) {
      write_colored_cloud(fs::path(a.ply_dir) / fmt::format("target_{:03}.ply", k), bundle.cloud,
                          bundle.result.maps[k].scores());
    }
  }
  const RunMetadata& meta = bundle.result.metadata;
  fmt::print("{}: {} targets, {} points, N={}, lambda={:.6g}, mean kept {:.4f}, {:.2f} s\n", a.out,
             bundle.result.detections.size(), meta.points, meta.iterations, meta.lambda, meta.mean_kept_fraction,
             meta.seconds_total);
  return 0;
}

// ---- average ----

struct AverageArgs {
  std::vector<std::string> bundles;
  std::string label = "Car";
  std::string resolution = "32x32x16";
  double margin = 0.10;
  std::string out;
  std::string ply;
};

int run_average(const AverageArgs& a) {
  AverageMapOptions options;
  options.resolution = parse_resolution(a.resolution);
  options.margin = a.margin;
  auto bundles = load_bundles(a.bundles);
  const auto results = as_attributed(bundles);
  const AverageAttributionMap map = average_maps(results, a.label, options);
  KeyValueFile cfg;
  cfg.set("bundles", static_cast<std::uint64_t>(a.bundles.size()));
  cfg.set("class", a.label);
  cfg.set("margin", a.margin);
  write_average_map_csv(a.out, map, cfg);
  if (!a.ply.empty()) {
    write_average_map_ply(a.ply, map);
  }
  const auto occupied = static_cast<std::size_t>(std::count_if(map.count.begin(), map.count.end(),
                                                              [](std::uint64_t n) { return n > 0; }));
  fmt::print("{}: class {} over {} detections, {} occupied cells\n", a.out, a.label, map.detections, occupied);
  return 0;
}

// ---- drop-eval ----

struct DropArgs {
  std::vector<std::string> bundles;
  std::string detector;
  std::string fractions = "0:1:0.05";
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
  std::string out;
  long timeout_ms = 60000;
};

int run_drop_eval(const DropArgs& a) {
  if (!a.detector.empty()) {
    tools::check_detector_spec(a.detector);
  }
  DropCurveOptions options;
  options.fractions = parse_fractions(a.fractions);
  options.repeats = a.repeats;
  auto bundles = load_bundles(a.bundles);
  const std::vector<DropOrder> orders = {DropOrder::kDescending, DropOrder::kAscending, DropOrder::kRandom};
  std::vector<std::vector<DropCurve>> per_order(orders.size());
  for (std::size_t b = 0; b < bundles.size(); ++b) {
    const std::string spec = a.detector.empty() ? bundles[b].config.get("detector") : a.detector;
    auto detector = tools::make_detector(spec, std::chrono::milliseconds(a.timeout_ms));
    options.seed = a.seed + b;
    for (std::size_t o = 0; o < orders.size(); ++o) {
      per_order[o].push_back(drop_curve(bundles[b].cloud, *detector, bundles[b].result.maps, orders[o], options));
    }
  }
  std::vector<DropCurve> merged;
  for (const auto& curves : per_order) {
    merged.push_back(merge_curves(curves));
  }
  KeyValueFile cfg;
  cfg.set("bundles", static_cast<std::uint64_t>(bundles.size()));
  cfg.set("fractions", a.fractions);
  cfg.set("repeats", static_cast<std::uint64_t>(a.repeats));
  cfg.set("seed", a.seed);
  cfg.set("detector", a.detector.empty() ? std::string("from bundle") : a.detector);
  write_drop_curves_csv(a.out, merged, cfg);
  for (const DropCurve& c : merged) {
    fmt::print("{:<10} objects={} auc_confidence={:.4f} auc_iou={:.4f}\n", to_string(c.order), c.objects,
               curve_auc(c.fractions, c.mean_confidence), curve_auc(c.fractions, c.mean_iou));
  }
  return 0;
}

// ---- pointing-game ----

struct PointingArgs {
  std::vector<std::string> bundles;
  std::vector<double> dilations{1.0};
  double match_iou = 0.5;
  std::string out;
};

int run_pointing_game(const PointingArgs& a) {
  auto bundles = load_bundles(a.bundles);
  std::vector<DetectionSet> gt;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    if (!bundles[i].ground_truth) {
      throw InvalidArgument(fmt::format("bundle {} has no ground truth (analyze --gt)", a.bundles[i]));
    }
    gt.push_back(*bundles[i].ground_truth);
  }
  const auto results = as_attributed(bundles);
  std::string csv = fmt::format("# match_iou = {}\ndilation,hits,evaluated,targets,score\n", format_double(a.match_iou));
  for (double d : a.dilations) {
    PointingGameOptions options;
    options.dilation = d;
    options.match_iou = a.match_iou;
    const PointingGameResult r = pointing_game(results, gt, options);
    fmt::print("dilation {:.3f}: {}/{} hits, score {:.4f} ({} targets)\n", d, r.hits, r.evaluated, r.score,
               r.targets);
    csv += fmt::format("{},{},{},{},{}\n", format_double(d), r.hits, r.evaluated, r.targets, format_double(r.score));
  }
  if (!a.out.empty()) {
    std::ofstream out(a.out, std::ios::binary | std::ios::trunc);
    out << csv;
    if (!out) {
      throw FormatError(fmt::format("cannot write {}", a.out));
    }
  }
  return 0;
}

// ---- serve-check ----

struct ServeCheckArgs {
  std::string detector;
  std::string cloud;
  long timeout_ms = 60000;
};

int run_serve_check(const ServeCheckArgs& a) {
  tools::check_detector_spec(a.detector);
  PointCloud cloud = a.cloud.empty() ? generate_scene(SceneSpec{}).cloud : read_kitti_bin(a.cloud);
  auto detector = tools::make_detector(a.detector, std::chrono::milliseconds(a.timeout_ms));
  const DetectorCapabilities& caps = detector->capabilities();
  fmt::print("model {} (max batch {}, empty clouds {}), classes:", caps.model_name, caps.max_batch,
             caps.supports_empty_cloud ? "accepted" : "short-circuited");
  for (const auto& c : caps.classes) {
    fmt::print(" {}", c);
  }
  fmt::print("\n");
  const auto started = std::chrono::steady_clock::now();
  const std::vector<PointCloud> batch = {cloud, PointCloud{}, cloud};
  const auto out = detector->detect_batch(batch);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (out.size() != batch.size()) {
    throw ProtocolError(fmt::format("expected {} results, got {}", batch.size(), out.size()));
  }
  if (out[0] != out[2]) {
    throw DetectorError("detector is not deterministic: the same cloud gave different detections");
  }
  for (const Detection& d : out[0]) {
    const Box3D& b = d.box();
    fmt::print("  {} {:.4f} center ({:.3f}, {:.3f}, {:.3f}) dims ({:.3f}, {:.3f}, {:.3f}) yaw {:.4f}\n", d.label(),
               d.confidence(), b.center().x, b.center().y, b.center().z, b.length(), b.width(), b.height(), b.yaw());
  }
  fmt::print("ok: {} detections on {} points, {} on the empty cloud, {:.3f} s for the batch\n", out[0].size(),
             cloud.size(), out[1].size(), seconds);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box attribution for LiDAR object detectors"};
  app.require_subcommand(1);
  std::size_t workers = 0;
  bool verbose = false;
  app.add_option("--workers", workers, "Worker threads (0 = all cores)")->envname("MASKPROBE_WORKERS");
  app.add_flag("-v,--verbose", verbose, "Log progress");

  GenSceneArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-scene", "Generate synthetic scenes with ground truth");
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--objects", gen.objects);
  gen_cmd->add_option("--count", gen.count, "Scenes to generate (seeds seed, seed+1, ...)")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--min-range", gen.min_range);
  gen_cmd->add_option("--max-range", gen.max_range);
  gen_cmd->add_option("--ground-points", gen.ground_points);
  gen_cmd->add_option("--marker-fraction", gen.marker_fraction)->check(CLI::Range(0.0, 1.0));
  gen_cmd->add_option("--classes", gen.classes, "car or all")->check(CLI::IsMember({"car", "all"}));
  gen_cmd->add_option("--out-cloud", gen.out_cloud);
  gen_cmd->add_option("--out-gt", gen.out_gt);
  gen_cmd->add_option("--out-dir", gen.out_dir, "Write scene_NNNN.bin and scene_NNNN.gt.txt here");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit-density", "Fit the range density model over a directory of clouds");
  fit_cmd->add_option("--clouds", fit.clouds)->required()->check(CLI::ExistingDirectory);
  fit_cmd->add_option("--voxel", fit.voxel)->check(CLI::PositiveNumber);
  fit_cmd->add_option("--bin-width", fit.bin_width)->check(CLI::PositiveNumber);
  fit_cmd->add_option("--radius", fit.radius)->check(CLI::PositiveNumber);
  fit_cmd->add_option("--min-voxels", fit.min_voxels);
  fit_cmd->add_option("--lambda-ref", fit.lambda_ref, "RANGE:PROBABILITY or none");
  fit_cmd->add_option("--out", fit.out)->required();
  fit_cmd->add_option("--profile", fit.profile, "Also write the binned density profile as CSV");

  AnalyzeArgs an;
  auto* an_cmd = app.add_subcommand("analyze", "Attribution maps for every detection in one cloud");
  an_cmd->add_option("--cloud", an.cloud)->required()->check(CLI::ExistingFile);
  an_cmd->add_option("--detector", an.detector, "mock, wire:CMD or tcp:HOST:PORT");
  an_cmd->add_option("--density", an.density)->check(CLI::ExistingFile);
  an_cmd->add_option("--fixed-p", an.fixed_p, "Constant keep probability instead of a density model");
  an_cmd->add_option("--n", an.iterations, "Monte Carlo iterations")->check(CLI::Range(1u, 100000000u));
  an_cmd->add_option("--seed", an.seed);
  an_cmd->add_option("--lambda-ref", an.lambda_ref, "RANGE:PROBABILITY or none");
  an_cmd->add_option("--voxel", an.voxel)->check(CLI::PositiveNumber);
  an_cmd->add_option("--batch", an.batch)->check(CLI::Range(std::size_t{1}, std::size_t{4096}));
  an_cmd->add_option("--submetrics", an.submetrics, "Extra maps: class, overlap, confidence, translation, scale, orientation or all")
      ->delimiter(',');
  an_cmd->add_option("--overlap", an.overlap)->check(CLI::IsMember({"3d", "bev"}));
  an_cmd->add_option("--gt", an.gt, "Ground truth detections to store in the bundle")->check(CLI::ExistingFile);
  an_cmd->add_option("--out", an.out)->required();
  an_cmd->add_option("--ply", an.ply_dir, "Directory for turbo-colored PLY exports");
  an_cmd->add_flag("--timings", an.timings, "Write timing.txt into the bundle");
  an_cmd->add_option("--timeout-ms", an.timeout_ms)->check(CLI::PositiveNumber);

  AverageArgs avg;
  auto* avg_cmd = app.add_subcommand("average", "Class-averaged attribution in the normalized box frame");
  avg_cmd->add_option("--bundles", avg.bundles)->required()->check(CLI::ExistingDirectory);
  avg_cmd->add_option("--class", avg.label);
  avg_cmd->add_option("--res", avg.resolution);
  avg_cmd->add_option("--margin", avg.margin)->check(CLI::Range(0.0, 10.0));
  avg_cmd->add_option("--out", avg.out)->required();
  avg_cmd->add_option("--ply", avg.ply);

  DropArgs drop;
  auto* drop_cmd = app.add_subcommand("drop-eval", "Point-dropping curves (descending, ascending, random)");
  drop_cmd->add_option("--bundles", drop.bundles)->required()->check(CLI::ExistingDirectory);
  drop_cmd->add_option("--detector", drop.detector, "Defaults to the detector recorded in each bundle");
  drop_cmd->add_option("--fractions", drop.fractions, "LO:HI:STEP or a comma list");
  drop_cmd->add_option("--repeats", drop.repeats)->check(CLI::PositiveNumber);
  drop_cmd->add_option("--seed", drop.seed);
  drop_cmd->add_option("--out", drop.out)->required();
  drop_cmd->add_option("--timeout-ms", drop.timeout_ms)->check(CLI::PositiveNumber);

  PointingArgs pg;
  auto* pg_cmd = app.add_subcommand("pointing-game", "Arg-max attribution hits inside ground-truth boxes");
  pg_cmd->add_option("--bundles", pg.bundles)->required()->check(CLI::ExistingDirectory);
  pg_cmd->add_option("--dilation", pg.dilations, "Box scale factors")->check(CLI::PositiveNumber);
  pg_cmd->add_option("--match-iou", pg.match_iou)->check(CLI::Range(0.0, 1.0));
  pg_cmd->add_option("--out", pg.out);

  ServeCheckArgs sc;
  auto* sc_cmd = app.add_subcommand("serve-check", "Handshake with an external detector and run a test batch");
  sc_cmd->add_option("--detector", sc.detector)->required();
  sc_cmd->add_option("--cloud", sc.cloud)->check(CLI::ExistingFile);
  sc_cmd->add_option("--timeout-ms", sc.timeout_ms)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e);
    }
    std::cerr << "maskprobe: error: " << e.what() << '\n';
    return 2;
  }

  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);
  try {
    if (*gen_cmd) {
      return run_gen_scene(gen);
    }
    if (*fit_cmd) {
      return run_fit_density(fit);
    }
    if (*an_cmd) {
      return run_analyze(an, workers);
    }
    if (*avg_cmd) {
      return run_average(avg);
    }
    if (*drop_cmd) {
      return run_drop_eval(drop);
    }
    if (*pg_cmd) {
      return run_pointing_game(pg);
    }
    if (*sc_cmd) {
      return run_serve_check(sc);
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "maskprobe: error: " << msg << '\n';
    return 1;
  }
  return 1;
}
