#include "detsel/io.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "detsel/error.hpp"

namespace detsel {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  // strtod needs a terminated buffer; gcc 11 has from_chars for double but
  // strtod keeps the accepted grammar identical to printf's output.
  std::string buf(s);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size() || errno == ERANGE) return std::nullopt;
  return v;
}

std::optional<long long> parse_int(std::string_view s) {
  s = trim(s);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string format_sig(double v, int sig) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", sig, v);
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw ValidationError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

KeyValueFile KeyValueFile::parse(std::string_view text, const std::string& origin) {
  KeyValueFile kv;
  kv.origin_ = origin;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(origin + ": expected `key = value`", line_no, 1);
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ParseError(origin + ": empty key", line_no, 1);
    if (kv.entries_.count(key)) {
      throw ParseError(origin + ": duplicate key '" + key + "'", line_no, 1);
    }
    kv.entries_[key] = Entry{value, line_no};
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.string());
}

void KeyValueFile::reject_unknown(const std::set<std::string>& known) const {
  std::string bad;
  for (const auto& [key, entry] : entries_) {
    if (!known.count(key)) {
      if (!bad.empty()) bad += ", ";
      bad += key + " (line " + std::to_string(entry.line) + ")";
    }
  }
  if (!bad.empty()) throw ValidationError(origin_ + ": unknown keys: " + bad);
}

const KeyValueFile::Entry& KeyValueFile::require(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ValidationError(origin_ + ": missing key '" + key + "'");
  return it->second;
}

std::string KeyValueFile::get_string(const std::string& key) const { return require(key).value; }

std::string KeyValueFile::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

double KeyValueFile::get_double(const std::string& key) const {
  const auto& e = require(key);
  const auto v = parse_double(e.value);
  if (!v) throw ParseError(origin_ + ": '" + key + "' is not a number", e.line, 1);
  return *v;
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long long KeyValueFile::get_int(const std::string& key) const {
  const auto& e = require(key);
  const auto v = parse_int(e.value);
  if (!v) throw ParseError(origin_ + ": '" + key + "' is not an integer", e.line, 1);
  return *v;
}

long long KeyValueFile::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const auto& e = require(key);
  if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
  if (e.value == "false" || e.value == "0" || e.value == "no") return false;
  throw ParseError(origin_ + ": '" + key + "' is not a boolean", e.line, 1);
}

std::vector<double> KeyValueFile::get_doubles(const std::string& key) const {
  const auto& e = require(key);
  std::vector<double> out;
  for (const auto& part : split(e.value, ',')) {
    const auto v = parse_double(part);
    if (!v) throw ParseError(origin_ + ": '" + key + "' has a non-numeric entry", e.line, 1);
    out.push_back(*v);
  }
  return out;
}

std::vector<std::string> KeyValueFile::get_strings(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& part : split(require(key).value, ',')) out.emplace_back(trim(part));
  return out;
}

}  // namespace detsel
