#ifndef DETSEL_IO_HPP_
#define DETSEL_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace detsel {

// Parsed `key = value` text file. Blank lines and lines starting with '#'
// are ignored. Duplicate keys are a parse error.
class KeyValueFile {
 public:
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };

  static KeyValueFile parse(std::string_view text, const std::string& origin = "<string>");
  static KeyValueFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  // Throws ValidationError naming every key not in `known`.
  void reject_unknown(const std::set<std::string>& known) const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::string> get_strings(const std::string& key) const;

  const std::string& origin() const { return origin_; }

 private:
  const Entry& require(const std::string& key) const;

  std::string origin_;
  std::map<std::string, Entry> entries_;
};

std::vector<std::string> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

// Strict numeric parses; nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

// Fixed-point decimal with `digits` fractional digits ("%.*f").
std::string format_fixed(double v, int digits);
// Shortest round-trippable-enough text with `sig` significant digits ("%.*g").
std::string format_sig(double v, int sig);

// Write-then-rename so readers never observe a half-written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

// 64-bit FNV-1a, used for corpus identity checks.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace detsel

#endif  // DETSEL_IO_HPP_
