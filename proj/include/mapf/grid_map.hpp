#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "mapf/common.hpp"

namespace mapf {

inline constexpr int kUnreachable = std::numeric_limits<int>::max();

// Static occupancy grid. The spawn region is the largest 4-connected free
// component; every start and goal is drawn from it.
class GridMap {
 public:
  GridMap() = default;
  GridMap(int width, int height, std::vector<std::uint8_t> occupancy,
          std::uint64_t seed = 0);

  int width() const { return width_; }
  int height() const { return height_; }
  int size() const { return width_ * height_; }
  std::uint64_t seed() const { return seed_; }

  bool in_bounds(Cell c) const {
    return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_;
  }
  bool is_obstacle(Cell c) const { return occupancy_[index(c)] != 0; }
  // Out-of-bounds cells count as blocked.
  bool blocked(Cell c) const { return !in_bounds(c) || is_obstacle(c); }

  int index(Cell c) const { return c.y * width_ + c.x; }
  Cell cell(int idx) const { return {idx % width_, idx / width_}; }

  const std::vector<std::uint8_t>& occupancy() const { return occupancy_; }
  const std::vector<int>& spawn_region() const { return spawn_region_; }
  bool in_spawn_region(Cell c) const;
  int obstacle_count() const;
  double obstacle_fraction() const;

  // 4-connected components of free cells, largest first; ties broken by the
  // smallest member index.
  std::vector<std::vector<int>> free_components() const;

  std::string fingerprint() const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<std::uint8_t> occupancy_;
  std::vector<int> spawn_region_;
  std::vector<std::uint8_t> region_mask_;
};

// Obstacle-fraction distribution; lo == peak == hi is a point mass.
struct Triangular {
  double lo = 0.0;
  double peak = 0.33;
  double hi = 0.5;
};

double sample_triangular(const Triangular& t, std::mt19937_64& rng);

// Random map whose obstacle count is round(rho * W * H), rho ~ density.
// Retries (bounded) until the largest free component holds min_free cells.
GridMap generate_map(int width, int height, const Triangular& density,
                     std::uint64_t seed, int min_free = 2);

// Shelf rows separated by aisles of the given width; density thins shelves.
GridMap generate_warehouse(int width, int height, int aisle_width,
                           double density, std::uint64_t seed,
                           int min_free = 2);

// Rectangular blocks with irregular streets; density controls block fill.
GridMap generate_city(int width, int height, double density,
                      std::uint64_t seed, int min_free = 2);

// BFS distance from `source` over free cells; kUnreachable where cut off.
// `extra_blocked`, when given, marks additional cells (by index) as walls.
std::vector<int> bfs_distances(const GridMap& map, Cell source,
                               const std::vector<std::uint8_t>* extra_blocked = nullptr);

// MovingAI-compatible map text: `type octile`, `height H`, `width W`, `map`.
std::string map_to_string(const GridMap& map);
GridMap parse_map(const std::string& text);
GridMap load_map_file(const std::string& path);
void save_map_file(const GridMap& map, const std::string& path);

struct ScenarioEntry {
  int agent_id = 0;
  Cell start;
  Cell goal;
};

std::string scenario_to_string(const std::vector<ScenarioEntry>& entries);
std::vector<ScenarioEntry> parse_scenario(const std::string& text);
std::vector<ScenarioEntry> load_scenario_file(const std::string& path);
void save_scenario_file(const std::vector<ScenarioEntry>& entries,
                        const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace mapf
