#include "lagnmpc/io.hpp"

#include <fmt/format.h>

#include <charconv>
#include <stdexcept>

namespace lagnmpc {

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string> split(std::string_view line, char delimiter) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delimiter, start);
    fields.emplace_back(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

const std::string& FileHeader::at(const std::string& key) const {
  const auto it = entries.find(key);
  if (it == entries.end()) throw std::invalid_argument("file header lacks '" + key + "'");
  return it->second;
}

void write_header(std::ostream& out, std::string_view kind, const FileHeader& header) {
  out << "# lagnmpc " << kind << '\n';
  for (const auto& [k, v] : header.entries) out << "# " << k << '=' << v << '\n';
}

FileHeader read_header(std::istream& in) {
  FileHeader header;
  while (in.peek() == '#') {
    std::string line;
    std::getline(in, line);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(1, eq - 1);
    key.erase(0, key.find_first_not_of(' '));
    std::string value = line.substr(eq + 1);
    if (!value.empty() && value.back() == '\r') value.pop_back();
    header.entries[key] = value;
  }
  return header;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

}  // namespace lagnmpc
