#include "lagnmpc/evaluation.hpp"

#include "lagnmpc/parallel.hpp"

#include <fmt/format.h>

#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>

namespace lagnmpc {

GridSpec GridSpec::over(const BoxSet& box, int count1, int count2) {
  if (box.dim() != 2) throw std::invalid_argument("law maps need a two-dimensional state box");
  GridSpec g;
  g.lower = box.lower;
  g.upper = box.upper;
  g.count1 = count1;
  g.count2 = count2;
  g.validate();
  return g;
}

Vector GridSpec::node(std::size_t k) const {
  const auto i = static_cast<int>(k / static_cast<std::size_t>(count2));
  const auto j = static_cast<int>(k % static_cast<std::size_t>(count2));
  auto axis = [](double lo, double hi, int idx, int count) {
    if (count == 1) return lo;
    if (idx == count - 1) return hi;
    return lo + (hi - lo) * static_cast<double>(idx) / static_cast<double>(count - 1);
  };
  Vector x(2);
  x << axis(lower(0), upper(0), i, count1), axis(lower(1), upper(1), j, count2);
  return x;
}

void GridSpec::validate() const {
  if (count1 < 1 || count2 < 1) throw ConfigError("grid counts must be positive");
  if (!(lower.array() <= upper.array()).all()) throw ConfigError("grid lower corner exceeds the upper corner");
}

namespace {

void map_node(Controller& c, const PlantModel& plant, const BoxSet& state_box, LawMap& map, std::size_t k) {
  const Vector x = map.grid.node(k);
  const ControlOutput out = c.control(x, false);
  if (!out.ok) {
    map.u[k] = std::numeric_limits<double>::quiet_NaN();
    map.next.col(static_cast<Eigen::Index>(k)).setConstant(std::numeric_limits<double>::quiet_NaN());
    return;
  }
  map.u[k] = out.u;
  map.feasible[k] = 1;
  const Vector next = plant.next_state(x, out.u);
  map.next.col(static_cast<Eigen::Index>(k)) = next;
  map.violation[k] = !state_box.contains(next);
}

LawMap empty_map(const GridSpec& grid) {
  grid.validate();
  LawMap map;
  map.grid = grid;
  map.u.assign(grid.size(), 0.0);
  map.violation.assign(grid.size(), 0);
  map.feasible.assign(grid.size(), 0);
  map.next.resize(2, static_cast<Eigen::Index>(grid.size()));
  return map;
}

}  // namespace

LawMap control_law_map(const std::function<Controller()>& make, const PlantModel& plant, const GridSpec& grid,
                       const BoxSet& state_box) {
  LawMap map = empty_map(grid);
  const auto n = static_cast<std::int64_t>(grid.size());
  omp::ExceptionSlot error;
#pragma omp parallel
  {
    std::optional<Controller> c;
    error.run([&] { c.emplace(make()); });
#pragma omp for schedule(dynamic, 16)
    for (std::int64_t k = 0; k < n; ++k) {
      if (c) error.run([&] { map_node(*c, plant, state_box, map, static_cast<std::size_t>(k)); });
    }
  }
  error.rethrow();
  return map;
}

LawMap control_law_map_serial(const std::function<Controller()>& make, const PlantModel& plant,
                              const GridSpec& grid, const BoxSet& state_box) {
  LawMap map = empty_map(grid);
  Controller c = make();
  for (std::size_t k = 0; k < grid.size(); ++k) map_node(c, plant, state_box, map, k);
  return map;
}

std::size_t violation_count(const LawMap& map) {
  std::size_t n = 0;
  for (auto v : map.violation) n += v != 0;
  return n;
}

std::size_t violation_count(const LawMap& map, const std::vector<std::uint8_t>& mask) {
  if (mask.size() != map.size()) throw std::invalid_argument("mask does not match the map");
  std::size_t n = 0;
  for (std::size_t k = 0; k < map.size(); ++k) n += map.violation[k] != 0 && mask[k] != 0;
  return n;
}

std::size_t violation_count(const LawMap& map, int coordinate, const BoxSet& state_box,
                            const std::vector<std::uint8_t>* mask) {
  if (coordinate < 0 || coordinate >= state_box.dim() || map.next.rows() != state_box.dim()) {
    throw std::invalid_argument("coordinate out of range");
  }
  if (mask && mask->size() != map.size()) throw std::invalid_argument("mask does not match the map");
  std::size_t n = 0;
  for (std::size_t k = 0; k < map.size(); ++k) {
    if (!map.feasible[k] || (mask && !(*mask)[k])) continue;
    const double v = map.next(coordinate, static_cast<Eigen::Index>(k));
    n += v < state_box.lower(coordinate) || v > state_box.upper(coordinate);
  }
  return n;
}

void write_law_map(std::ostream& out, const LawMap& map, const FileHeader& provenance) {
  FileHeader header = provenance;
  const GridSpec& g = map.grid;
  header.entries["x1_min"] = format_double(g.lower(0));
  header.entries["x1_max"] = format_double(g.upper(0));
  header.entries["x2_min"] = format_double(g.lower(1));
  header.entries["x2_max"] = format_double(g.upper(1));
  header.entries["count1"] = std::to_string(g.count1);
  header.entries["count2"] = std::to_string(g.count2);
  header.entries["violations"] = std::to_string(violation_count(map));
  write_header(out, "lawmap", header);
  out << "x1,x2,u,violation,feasible\n";
  for (std::size_t k = 0; k < map.size(); ++k) {
    const Vector x = g.node(k);
    out << format_double(x(0)) << ',' << format_double(x(1)) << ',' << format_double(map.u[k]) << ','
        << int{map.violation[k]} << ',' << int{map.feasible[k]} << '\n';
  }
}

LawMap read_law_map(std::istream& in) {
  const FileHeader h = read_header(in);
  GridSpec g;
  g.lower << parse_double(h.at("x1_min")), parse_double(h.at("x2_min"));
  g.upper << parse_double(h.at("x1_max")), parse_double(h.at("x2_max"));
  g.count1 = std::stoi(h.at("count1"));
  g.count2 = std::stoi(h.at("count2"));
  LawMap map = empty_map(g);
  map.next.setConstant(std::numeric_limits<double>::quiet_NaN());
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("law map file lacks a column header");
  std::size_t k = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (k >= map.size()) throw std::invalid_argument("law map file has too many rows");
    const auto f = split(line, ',');
    if (f.size() != 5) throw std::invalid_argument("law map row has the wrong number of fields");
    map.u[k] = parse_double(f[2]);
    map.violation[k] = f[3] == "1";
    map.feasible[k] = f[4] == "1";
    ++k;
  }
  if (k != map.size()) throw std::invalid_argument("law map file has too few rows");
  return map;
}

std::string heat_color(double u, double lo, double hi) {
  // Viridis control points.
  static constexpr std::array<std::array<double, 3>, 5> ramp{{{68, 1, 84},
                                                             {59, 82, 139},
                                                             {33, 145, 140},
                                                             {94, 201, 98},
                                                             {253, 231, 37}}};
  double t = hi > lo ? (std::min(std::max(u, lo), hi) - lo) / (hi - lo) : 0.0;
  if (std::isnan(u)) t = 0.0;
  const double pos = t * (ramp.size() - 1);
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(pos), ramp.size() - 2);
  const double w = pos - static_cast<double>(i);
  std::array<int, 3> rgb{};
  for (int c = 0; c < 3; ++c) rgb[c] = static_cast<int>(std::lround((1 - w) * ramp[i][c] + w * ramp[i + 1][c]));
  return fmt::format("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2]);
}

void write_heatmap_svg(std::ostream& out, const LawMap& map, double u_min, double u_max, const std::string& title) {
  const GridSpec& g = map.grid;
  const double cell = std::max(2.0, 500.0 / std::max(g.count1, g.count2));
  const double w = cell * g.count1;
  const double h = cell * g.count2;
  const double margin = 50.0;
  out << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{:.0f}" height="{:.0f}" font-family="sans-serif" font-size="12">)",
                     w + 2 * margin + 80, h + 2 * margin)
      << '\n';
  if (!title.empty()) out << fmt::format(R"(<text x="{}" y="20">{}</text>)", margin, title) << '\n';
  // x1 runs left to right, x2 bottom to top.
  for (std::size_t k = 0; k < map.size(); ++k) {
    const int i = static_cast<int>(k / g.count2);
    const int j = static_cast<int>(k % g.count2);
    const double px = margin + i * cell;
    const double py = margin + (g.count2 - 1 - j) * cell;
    const std::string fill = map.feasible[k] ? heat_color(map.u[k], u_min, u_max) : std::string("#cccccc");
    out << fmt::format(R"(<rect x="{:.2f}" y="{:.2f}" width="{:.2f}" height="{:.2f}" fill="{}"/>)", px, py, cell,
                       cell, fill)
        << '\n';
  }
  for (std::size_t k = 0; k < map.size(); ++k) {
    if (!map.violation[k]) continue;
    const int i = static_cast<int>(k / g.count2);
    const int j = static_cast<int>(k % g.count2);
    out << fmt::format(R"(<circle cx="{:.2f}" cy="{:.2f}" r="{:.2f}" fill="red"/>)", margin + (i + 0.5) * cell,
                       margin + (g.count2 - 0.5 - j) * cell, cell * 0.35)
        << '\n';
  }
  const double bar_x = margin + w + 20;
  for (int s = 0; s < 50; ++s) {
    const double u = u_min + (u_max - u_min) * (49 - s) / 49.0;
    out << fmt::format(R"(<rect x="{:.2f}" y="{:.2f}" width="20" height="{:.2f}" fill="{}"/>)", bar_x,
                       margin + s * h / 50, h / 50 + 0.5, heat_color(u, u_min, u_max))
        << '\n';
  }
  out << fmt::format(R"(<text x="{:.2f}" y="{:.2f}">{}</text>)", bar_x + 25, margin + 10, u_max) << '\n';
  out << fmt::format(R"(<text x="{:.2f}" y="{:.2f}">{}</text>)", bar_x + 25, margin + h, u_min) << '\n';
  out << fmt::format(R"(<text x="{:.2f}" y="{:.2f}">x1 [{}, {}]</text>)", margin, margin + h + 30, g.lower(0),
                     g.upper(0))
      << '\n';
  out << fmt::format(R"svg(<text x="5" y="{:.2f}" transform="rotate(-90 5 {:.2f})">x2 [{}, {}]</text>)svg",
                     margin + h, margin + h, g.lower(1), g.upper(1))
      << '\n';
  out << "</svg>\n";
}

void export_heatmap(const LawMap& map, const std::string& stem, double u_min, double u_max,
                    const FileHeader& provenance) {
  std::ofstream csv(stem + ".csv");
  if (!csv) throw std::runtime_error("cannot write " + stem + ".csv");
  write_law_map(csv, map, provenance);
  std::ofstream svg(stem + ".svg");
  if (!svg) throw std::runtime_error("cannot write " + stem + ".svg");
  write_heatmap_svg(svg, map, u_min, u_max);
  if (!csv || !svg) throw std::runtime_error("failed writing " + stem);
}

}  // namespace lagnmpc
