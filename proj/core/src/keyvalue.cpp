#include "maskprobe/keyvalue.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "maskprobe/errors.hpp"

namespace maskprobe {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::string format_double(double value) {
  // {:.17g} always round-trips; shorter forms are tried first for readability.
  for (int digits = 15; digits <= 17; ++digits) {
    std::string text = fmt::format("{:.{}g}", value, digits);
    if (std::strtod(text.c_str(), nullptr) == value) {
      return text;
    }
  }
  return fmt::format("{:.17g}", value);
}

void KeyValueFile::set(std::string_view key, std::string value) {
  if (key.empty() || trim(key) != key || key.find_first_of("=#\n") != std::string_view::npos) {
    throw InvalidArgument(fmt::format("invalid key '{}'", key));
  }
  if (value.find('\n') != std::string::npos) {
    throw InvalidArgument(fmt::format("value for '{}' contains a newline", key));
  }
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::string(key), std::move(value));
}

const std::string* KeyValueFile::find(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) {
      return &v;
    }
  }
  return nullptr;
}

const std::string& KeyValueFile::get(std::string_view key) const {
  const std::string* v = find(key);
  if (v == nullptr) {
    throw FormatError(fmt::format("missing key '{}'", key));
  }
  return *v;
}

double KeyValueFile::get_double(std::string_view key) const {
  const std::string& v = get(key);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw FormatError(fmt::format("key '{}': '{}' is not a number", key, v));
  }
  return out;
}

std::uint64_t KeyValueFile::get_uint(std::string_view key) const {
  const std::string& v = get(key);
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw FormatError(fmt::format("key '{}': '{}' is not a non-negative integer", key, v));
  }
  return out;
}

bool KeyValueFile::get_bool(std::string_view key) const {
  const std::string& v = get(key);
  if (v == "true") {
    return true;
  }
  if (v == "false") {
    return false;
  }
  throw FormatError(fmt::format("key '{}': '{}' is not true/false", key, v));
}

std::string KeyValueFile::to_string() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

KeyValueFile KeyValueFile::parse(std::string_view text, std::string_view source) {
  KeyValueFile kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    line = trim(line);
    if (line.empty() || line.front() == '#') {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError(fmt::format("{}:{}: expected 'key = value'", source, line_no));
    }
    const std::string_view key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw FormatError(fmt::format("{}:{}: empty key", source, line_no));
    }
    if (kv.contains(key)) {
      throw FormatError(fmt::format("{}:{}: duplicate key '{}'", source, line_no, key));
    }
    kv.entries_.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError(fmt::format("cannot open {}", path.string()));
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path.string());
}

void KeyValueFile::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw FormatError(fmt::format("cannot write {}", path.string()));
  }
  out << to_string();
  if (!out) {
    throw FormatError(fmt::format("write failed for {}", path.string()));
  }
}

}  // namespace maskprobe
