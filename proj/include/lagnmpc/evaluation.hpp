#pragma once

#include "lagnmpc/closed_loop.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace lagnmpc {

/// Regular 2-D grid; node k = i * count2 + j sits at lower + (upper - lower) * (i, j) / (count - 1).
struct GridSpec {
  Eigen::Vector2d lower{0.01, -20.0};
  Eigen::Vector2d upper{2.0, 0.0};
  int count1 = 100;
  int count2 = 100;

  static GridSpec over(const BoxSet& box, int count1, int count2);
  std::size_t size() const { return static_cast<std::size_t>(count1) * static_cast<std::size_t>(count2); }
  Vector node(std::size_t k) const;
  void validate() const;
};

struct LawMap {
  GridSpec grid;
  std::vector<double> u;               // NaN where the controller failed
  std::vector<std::uint8_t> violation; // x+ outside X
  std::vector<std::uint8_t> feasible;  // controller produced an input
  Matrix next;                         // x+ per node (2 x size), NaN where infeasible

  std::size_t size() const { return u.size(); }
};

/// Evaluates the law at every node with the offset-free correction disabled.
/// `make` builds one controller per worker thread.
LawMap control_law_map(const std::function<Controller()>& make, const PlantModel& plant, const GridSpec& grid,
                       const BoxSet& state_box = default_state_box());
/// Single-threaded reference.
LawMap control_law_map_serial(const std::function<Controller()>& make, const PlantModel& plant,
                              const GridSpec& grid, const BoxSet& state_box = default_state_box());

std::size_t violation_count(const LawMap& map);
/// Nodes whose x+ leaves the bound of one coordinate; nodes with mask[k] == 0 are skipped.
std::size_t violation_count(const LawMap& map, int coordinate, const BoxSet& state_box,
                            const std::vector<std::uint8_t>* mask = nullptr);
/// Violating nodes restricted to mask[k] != 0.
std::size_t violation_count(const LawMap& map, const std::vector<std::uint8_t>& mask);

/// Columns x1,x2,u,violation,feasible.
void write_law_map(std::ostream& out, const LawMap& map, const FileHeader& provenance = {});
LawMap read_law_map(std::istream& in);

/// "#rrggbb" on a perceptually ordered ramp; u is clamped to [lo, hi] first.
std::string heat_color(double u, double lo, double hi);
void write_heatmap_svg(std::ostream& out, const LawMap& map, double u_min, double u_max,
                       const std::string& title = {});

/// Writes <stem>.csv and <stem>.svg. Throws std::runtime_error when unwritable.
void export_heatmap(const LawMap& map, const std::string& stem, double u_min, double u_max,
                    const FileHeader& provenance = {});

}  // namespace lagnmpc
