#include "maskprobe/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "maskprobe/errors.hpp"
#include "turbo_lut.hpp"

namespace maskprobe {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw FormatError(fmt::format("cannot write {}", path.string()));
  }
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError(fmt::format("cannot open {}", path.string()));
  }
  return in;
}

void finish(std::ostream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) {
    throw FormatError(fmt::format("write failed for {}", path.string()));
  }
}

float load_le_float(const std::byte* p) {
  std::uint32_t bits = 0;
  std::memcpy(&bits, p, 4);
  if constexpr (std::endian::native == std::endian::big) {
    bits = __builtin_bswap32(bits);
  }
  return std::bit_cast<float>(bits);
}

void store_le_float(float v, char* p) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  if constexpr (std::endian::native == std::endian::big) {
    bits = __builtin_bswap32(bits);
  }
  std::memcpy(p, &bits, 4);
}

void write_config_header(std::ostream& out, const KeyValueFile& config) {
  for (const auto& [k, v] : config.entries()) {
    out << "# " << k << " = " << v << '\n';
  }
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) {
      ++i;
    }
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') {
      ++i;
    }
    if (i > start) {
      out.push_back(line.substr(start, i - start));
    }
  }
  return out;
}

double parse_number(std::string_view token, std::string_view where) {
  const std::string s(token);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw FormatError(fmt::format("{}: '{}' is not a number", where, token));
  }
  return v;
}

std::uint64_t parse_count(std::string_view token, std::string_view where) {
  const double v = parse_number(token, where);
  if (v < 0 || v != std::floor(v) || v > 1.8e19) {
    throw FormatError(fmt::format("{}: '{}' is not a non-negative integer", where, token));
  }
  return static_cast<std::uint64_t>(v);
}

}  // namespace

// ---- KITTI ----

PointCloud parse_kitti_bin(std::span<const std::byte> bytes, std::string_view source) {
  if (bytes.size() % 16 != 0) {
    throw FormatError(fmt::format("{}: size {} is not a multiple of 16 bytes; trailing data starts at byte offset {}",
                                  source, bytes.size(), bytes.size() - bytes.size() % 16));
  }
  const std::size_t count = bytes.size() / 16;
  std::vector<Point> points(count);
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < count; ++i) {
    float v[4];
    for (std::size_t c = 0; c < 4; ++c) {
      const std::size_t offset = i * 16 + c * 4;
      v[c] = load_le_float(bytes.data() + offset);
      if (!std::isfinite(v[c])) {
        throw FormatError(fmt::format("{}: non-finite value at byte offset {} (point {})", source, offset, i));
      }
    }
    if (v[3] < 0.0f || v[3] > 1.0f) {
      v[3] = std::clamp(v[3], 0.0f, 1.0f);
      ++clamped;
    }
    points[i] = {v[0], v[1], v[2], v[3]};
  }
  if (clamped > 0) {
    spdlog::warn("{}: clamped {} intensities into [0, 1]", source, clamped);
  }
  return PointCloud(std::move(points));
}

PointCloud read_kitti_bin(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_kitti_bin(std::as_bytes(std::span<const char>(raw)), path.string());
}

void write_kitti_bin(const std::filesystem::path& path, const PointCloud& cloud) {
  std::vector<char> raw(cloud.size() * 16);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point& p = cloud[i];
    store_le_float(p.x, raw.data() + i * 16);
    store_le_float(p.y, raw.data() + i * 16 + 4);
    store_le_float(p.z, raw.data() + i * 16 + 8);
    store_le_float(p.intensity, raw.data() + i * 16 + 12);
  }
  std::ofstream out = open_out(path);
  out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  finish(out, path);
}

// ---- colors ----

Rgb turbo(double t) {
  if (!(t >= 0.0)) {
    t = 0.0;
  }
  const auto idx = std::min<std::size_t>(255, static_cast<std::size_t>(std::min(t, 1.0) * 256.0));
  const double* c = detail::kTurbo[idx];
  auto to8 = [](double v) { return static_cast<std::uint8_t>(std::lround(v * 255.0)); };
  return {to8(c[0]), to8(c[1]), to8(c[2])};
}

std::vector<Rgb> colorize(std::span<const double> scores) {
  std::vector<Rgb> out(scores.size());
  if (scores.empty()) {
    return out;
  }
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  const double min = *lo;
  const double range = *hi - *lo;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = range > 0.0 ? turbo((scores[i] - min) / range) : turbo(0.5);
  }
  return out;
}

void write_colored_cloud(std::ostream& out, const PointCloud& cloud, std::span<const double> scores) {
  if (scores.size() != cloud.size()) {
    throw InvalidArgument(fmt::format("{} scores for a cloud of {} points", scores.size(), cloud.size()));
  }
  const std::vector<Rgb> colors = colorize(scores);
  std::string text = fmt::format(
      "ply\nformat ascii 1.0\ncomment colormap turbo, min-max normalized score\nelement vertex {}\n"
      "property float x\nproperty float y\nproperty float z\nproperty float intensity\n"
      "property double score\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
      cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point& p = cloud[i];
    fmt::format_to(std::back_inserter(text), "{:.9g} {:.9g} {:.9g} {:.9g} {} {} {} {}\n", p.x, p.y, p.z,
                   p.intensity, format_double(scores[i]), colors[i].r, colors[i].g, colors[i].b);
  }
  out << text;
}

void write_colored_cloud(const std::filesystem::path& path, const PointCloud& cloud, std::span<const double> scores) {
  std::ofstream out = open_out(path);
  write_colored_cloud(out, cloud, scores);
  finish(out, path);
}

// ---- attribution ----

void write_attribution(std::ostream& out, const AttributionMap& map) {
  const Detection& t = map.target();
  const Box3D& b = t.box();
  std::string text = fmt::format("maskprobe-attribution {}\n", kAttributionFormatVersion);
  fmt::format_to(std::back_inserter(text), "label {}\nconfidence {}\nbox {} {} {} {} {} {} {}\niterations {}\npoints {}\n",
                 t.label(), format_double(t.confidence()), format_double(b.center().x), format_double(b.center().y),
                 format_double(b.center().z), format_double(b.length()), format_double(b.width()),
                 format_double(b.height()), format_double(b.yaw()), map.iterations(), map.size());
  text += "# index score visible_count flags (1 = unobserved)\n";
  for (std::size_t j = 0; j < map.size(); ++j) {
    fmt::format_to(std::back_inserter(text), "{} {} {} {}\n", j, format_double(map.scores()[j]),
                   map.visible_counts()[j], map.unobserved(j) ? 1 : 0);
  }
  text += "end\n";
  out << text;
}

void write_attribution(const std::filesystem::path& path, const AttributionMap& map) {
  std::ofstream out = open_out(path);
  write_attribution(out, map);
  finish(out, path);
}

AttributionMap read_attribution(std::istream& in, std::string_view source) {
  std::string line;
  std::size_t line_no = 0;
  auto next = [&](std::string_view expect) -> std::string {
    for (;;) {
      if (!std::getline(in, line)) {
        throw FormatError(fmt::format("{}: truncated, expected {} after line {}", source, expect, line_no));
      }
      ++line_no;
      if (!line.empty() && line.back() == '\r') {
        line.pop_back();
      }
      if (!line.empty() && line.front() != '#') {
        return line;
      }
    }
  };
  auto field = [&](std::string_view key) -> std::string {
    const std::string l = next(key);
    if (l.size() <= key.size() || l.compare(0, key.size(), key) != 0 || l[key.size()] != ' ') {
      throw FormatError(fmt::format("{}:{}: expected '{}'", source, line_no, key));
    }
    return l.substr(key.size() + 1);
  };
  const std::string where = std::string(source);

  const std::string header_line = next("header");
  const auto header = split_ws(header_line);
  if (header.size() != 2 || header[0] != "maskprobe-attribution") {
    throw FormatError(fmt::format("{}: not an attribution file", source));
  }
  if (header[1] != std::to_string(kAttributionFormatVersion)) {
    throw FormatError(fmt::format("{}: unsupported attribution format version {} (expected {})", source, header[1],
                                  kAttributionFormatVersion));
  }
  const std::string label = field("label");
  const double confidence = parse_number(field("confidence"), where);
  const std::string box_line = field("box");
  const auto box = split_ws(box_line);
  if (box.size() != 7) {
    throw FormatError(fmt::format("{}:{}: box needs 7 values", source, line_no));
  }
  double b[7];
  for (std::size_t i = 0; i < 7; ++i) {
    b[i] = parse_number(box[i], where);
  }
  const auto iterations = parse_count(field("iterations"), where);
  const auto points = parse_count(field("points"), where);

  std::vector<double> scores;
  std::vector<std::uint32_t> counts;
  scores.reserve(points);
  counts.reserve(points);
  for (std::uint64_t j = 0; j < points; ++j) {
    const std::string row = next("a score row");
    const auto cols = split_ws(row);
    const std::string at = fmt::format("{}:{}", source, line_no);
    if (cols.size() != 4 || parse_count(cols[0], at) != j) {
      throw FormatError(fmt::format("{}: malformed row for point {}", at, j));
    }
    scores.push_back(parse_number(cols[1], at));
    const auto visible = parse_count(cols[2], at);
    const auto flag = parse_count(cols[3], at);
    if (visible > 0xffffffffULL || flag > 1 || (flag == 1) != (visible == 0)) {
      throw FormatError(fmt::format("{}: inconsistent count or flag for point {}", at, j));
    }
    counts.push_back(static_cast<std::uint32_t>(visible));
  }
  if (next("end marker") != "end") {
    throw FormatError(fmt::format("{}:{}: expected end marker", source, line_no));
  }
  try {
    return AttributionMap(Detection(label, confidence, Box3D({b[0], b[1], b[2]}, {b[3], b[4], b[5]}, b[6])),
                          std::move(scores), std::move(counts), static_cast<std::uint32_t>(iterations));
  } catch (const InvalidArgument& e) {
    throw FormatError(fmt::format("{}: {}", source, e.what()));
  }
}

AttributionMap read_attribution(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  return read_attribution(in, path.string());
}

// ---- density ----

KeyValueFile density_to_keyvalue(const DensityModel& model, double voxel_edge, const DensityFit* fit) {
  KeyValueFile kv;
  kv.set("format", "maskprobe-density 1");
  kv.set("a", model.coeffs.a);
  kv.set("b", model.coeffs.b);
  kv.set("c", model.coeffs.c);
  kv.set("lambda", model.lambda);
  kv.set("p_min", model.p_min);
  kv.set("p_max", model.p_max);
  kv.set("voxel_edge", voxel_edge);
  if (fit != nullptr) {
    kv.set("fit.clouds", static_cast<std::uint64_t>(fit->clouds));
    kv.set("fit.bin_width", fit->profile.bin_width);
    kv.set("fit.bins_used", static_cast<std::uint64_t>(fit->profile.used_bins()));
    kv.set("fit.neighborhood_radius", fit->neighborhood_radius);
    kv.set("fit.neighborhood_metric", "L2 over voxel centers");
    kv.set("fit.constant_pinned", fit->constant_pinned);
  }
  return kv;
}

StoredDensity density_from_keyvalue(const KeyValueFile& kv) {
  if (kv.get("format") != "maskprobe-density 1") {
    throw FormatError(fmt::format("unsupported density format '{}'", kv.get("format")));
  }
  StoredDensity out;
  out.model.coeffs = {kv.get_double("a"), kv.get_double("b"), kv.get_double("c")};
  out.model.lambda = kv.get_double("lambda");
  out.model.p_min = kv.get_double("p_min");
  out.model.p_max = kv.get_double("p_max");
  out.voxel_edge = kv.get_double("voxel_edge");
  try {
    out.model.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(fmt::format("invalid density model: {}", e.what()));
  }
  return out;
}

void save_density(const std::filesystem::path& path, const DensityModel& model, double voxel_edge,
                  const DensityFit* fit) {
  density_to_keyvalue(model, voxel_edge, fit).save(path);
}

StoredDensity load_density(const std::filesystem::path& path) {
  try {
    return density_from_keyvalue(KeyValueFile::load(path));
  } catch (const FormatError& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

// ---- detections ----

void write_detections(const std::filesystem::path& path, const DetectionSet& detections) {
  std::string text = "# label confidence cx cy cz dx dy dz yaw\n";
  for (const Detection& d : detections) {
    if (d.label().empty() || d.label().find_first_of(" \t\n#") != std::string::npos) {
      throw InvalidArgument(fmt::format("label '{}' cannot be written to a detection list", d.label()));
    }
    const Box3D& b = d.box();
    fmt::format_to(std::back_inserter(text), "{} {} {} {} {} {} {} {} {}\n", d.label(),
                   format_double(d.confidence()), format_double(b.center().x), format_double(b.center().y),
                   format_double(b.center().z), format_double(b.length()), format_double(b.width()),
                   format_double(b.height()), format_double(b.yaw()));
  }
  std::ofstream out = open_out(path);
  out << text;
  finish(out, path);
}

DetectionSet read_detections(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  DetectionSet out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const auto cols = split_ws(std::string_view(line).substr(0, hash));
    if (cols.empty()) {
      continue;
    }
    const std::string at = fmt::format("{}:{}", path.string(), line_no);
    if (cols.size() != 9) {
      throw FormatError(fmt::format("{}: expected 9 columns, got {}", at, cols.size()));
    }
    double v[8];
    for (std::size_t i = 0; i < 8; ++i) {
      v[i] = parse_number(cols[i + 1], at);
    }
    try {
      out.emplace_back(std::string(cols[0]), v[0], Box3D({v[1], v[2], v[3]}, {v[4], v[5], v[6]}, v[7]));
    } catch (const InvalidArgument& e) {
      throw FormatError(fmt::format("{}: {}", at, e.what()));
    }
  }
  return out;
}

// ---- CSV ----

void write_drop_curves_csv(const std::filesystem::path& path, std::span<const DropCurve> curves,
                           const KeyValueFile& config) {
  std::ostringstream out;
  write_config_header(out, config);
  out << "ordering,fraction,mean_iou,mean_confidence,objects,repeats\n";
  for (const DropCurve& c : curves) {
    for (std::size_t i = 0; i < c.fractions.size(); ++i) {
      out << fmt::format("{},{},{},{},{},{}\n", to_string(c.order), format_double(c.fractions[i]),
                         format_double(c.mean_iou[i]), format_double(c.mean_confidence[i]), c.objects, c.repeats);
    }
  }
  std::ofstream file = open_out(path);
  file << out.str();
  finish(file, path);
}

void write_average_map_csv(const std::filesystem::path& path, const AverageAttributionMap& map,
                           const KeyValueFile& config) {
  std::ostringstream out;
  write_config_header(out, config);
  out << fmt::format("# label = {}\n# detections = {}\n# resolution = {}x{}x{}\n# margin_cells = {}x{}x{}\n",
                     map.label, map.detections, map.resolution[0], map.resolution[1], map.resolution[2],
                     map.margin_cells[0], map.margin_cells[1], map.margin_cells[2]);
  out << "ix,iy,iz,u,v,w,count,mean_score,mean_intensity\n";
  const auto s = map.shape();
  for (std::size_t ix = 0; ix < s[0]; ++ix) {
    for (std::size_t iy = 0; iy < s[1]; ++iy) {
      for (std::size_t iz = 0; iz < s[2]; ++iz) {
        const std::size_t c = map.index(ix, iy, iz);
        if (map.count[c] == 0) {
          continue;
        }
        const Vec3 u = map.cell_center(ix, iy, iz);
        out << fmt::format("{},{},{},{},{},{},{},{},{}\n", ix, iy, iz, format_double(u.x), format_double(u.y),
                           format_double(u.z), map.count[c], format_double(map.mean_score(c)),
                           format_double(map.mean_intensity(c)));
      }
    }
  }
  std::ofstream file = open_out(path);
  file << out.str();
  finish(file, path);
}

void write_average_map_ply(const std::filesystem::path& path, const AverageAttributionMap& map) {
  std::vector<Point> points;
  std::vector<double> scores;
  const auto s = map.shape();
  for (std::size_t ix = 0; ix < s[0]; ++ix) {
    for (std::size_t iy = 0; iy < s[1]; ++iy) {
      for (std::size_t iz = 0; iz < s[2]; ++iz) {
        const std::size_t c = map.index(ix, iy, iz);
        if (map.count[c] == 0) {
          continue;
        }
        const Vec3 u = map.cell_center(ix, iy, iz);
        points.push_back({static_cast<float>(u.x), static_cast<float>(u.y), static_cast<float>(u.z),
                          static_cast<float>(std::clamp(map.mean_intensity(c), 0.0, 1.0))});
        scores.push_back(map.mean_score(c));
      }
    }
  }
  write_colored_cloud(path, PointCloud(std::move(points)), scores);
}

void write_density_profile_csv(const std::filesystem::path& path, const DensityFit& fit) {
  std::ostringstream out;
  out << fmt::format("# a = {}\n# b = {}\n# c = {}\n", format_double(fit.coeffs.a), format_double(fit.coeffs.b),
                     format_double(fit.coeffs.c));
  out << "bin_lower,mean_range,mean_density,voxels,used,fitted_density\n";
  for (std::size_t i = 0; i < fit.profile.bins.size(); ++i) {
    const DensityBin& b = fit.profile.bins[i];
    if (b.voxels == 0) {
      continue;
    }
    const double poly = fit.coeffs.evaluate(b.mean_range);
    out << fmt::format("{},{},{},{},{},{}\n", format_double(static_cast<double>(i) * fit.profile.bin_width),
                       format_double(b.mean_range), format_double(b.mean_density), b.voxels, b.used ? 1 : 0,
                       format_double(poly > 0 ? 1.0 / poly : 0.0));
  }
  std::ofstream file = open_out(path);
  file << out.str();
  finish(file, path);
}

}  // namespace maskprobe
