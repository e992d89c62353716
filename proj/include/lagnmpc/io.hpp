#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace lagnmpc {

/// Shortest form that parses back to the same double (17 significant digits).
std::string format_double(double v);
double parse_double(std::string_view s);

std::vector<std::string> split(std::string_view line, char delimiter);

/// "# key=value" lines at the top of every output file.
struct FileHeader {
  std::map<std::string, std::string> entries;

  const std::string& at(const std::string& key) const;
  bool has(const std::string& key) const { return entries.count(key) > 0; }
};

void write_header(std::ostream& out, std::string_view kind, const FileHeader& header);
/// Consumes leading '#' lines. Plain comments without '=' are ignored.
FileHeader read_header(std::istream& in);

/// 64-bit FNV-1a, used for config fingerprints.
std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

}  // namespace lagnmpc
