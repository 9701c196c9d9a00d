#include "mapf/grid_map.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mapf {

GridMap::GridMap(int width, int height, std::vector<std::uint8_t> occupancy,
                 std::uint64_t seed)
    : width_(width), height_(height), seed_(seed), occupancy_(std::move(occupancy)) {
  if (width_ < 1 || height_ < 1) {
    throw std::invalid_argument("map must be non-empty");
  }
  if (static_cast<int>(occupancy_.size()) != width_ * height_) {
    throw std::invalid_argument("occupancy size does not match width*height");
  }
  auto comps = free_components();
  region_mask_.assign(occupancy_.size(), 0);
  if (!comps.empty()) {
    spawn_region_ = std::move(comps.front());
    std::sort(spawn_region_.begin(), spawn_region_.end());
    for (int idx : spawn_region_) region_mask_[idx] = 1;
  }
}

bool GridMap::in_spawn_region(Cell c) const {
  return in_bounds(c) && region_mask_[index(c)] != 0;
}

int GridMap::obstacle_count() const {
  return static_cast<int>(std::count(occupancy_.begin(), occupancy_.end(), 1));
}

double GridMap::obstacle_fraction() const {
  return static_cast<double>(obstacle_count()) / static_cast<double>(size());
}

std::vector<std::vector<int>> GridMap::free_components() const {
  std::vector<int> label(occupancy_.size(), -1);
  std::vector<std::vector<int>> comps;
  for (int start = 0; start < size(); ++start) {
    if (occupancy_[start] || label[start] >= 0) continue;
    std::vector<int> members;
    std::deque<int> queue{start};
    label[start] = static_cast<int>(comps.size());
    while (!queue.empty()) {
      int idx = queue.front();
      queue.pop_front();
      members.push_back(idx);
      Cell c = cell(idx);
      for (int a = 0; a < 4; ++a) {
        Cell n = apply_action(c, a);
        if (blocked(n)) continue;
        int ni = index(n);
        if (label[ni] >= 0) continue;
        label[ni] = label[start];
        queue.push_back(ni);
      }
    }
    comps.push_back(std::move(members));
  }
  // Components are discovered in increasing order of their smallest index, so
  // a stable sort by size keeps that tie-break.
  std::stable_sort(comps.begin(), comps.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
  return comps;
}

std::string GridMap::fingerprint() const {
  Fnv1a h;
  h.add_int(width_);
  h.add_int(height_);
  h.add(std::string_view(reinterpret_cast<const char*>(occupancy_.data()),
                         occupancy_.size()));
  return h.hex();
}

double sample_triangular(const Triangular& t, std::mt19937_64& rng) {
  if (!(0.0 <= t.lo && t.lo <= t.peak && t.peak <= t.hi && t.hi < 1.0)) {
    throw std::invalid_argument("triangular density requires 0 <= lo <= peak <= hi < 1");
  }
  if (t.hi == t.lo) return t.lo;
  std::vector<double> bounds;
  std::vector<double> weights;
  if (t.lo == t.peak) {
    bounds = {t.lo, t.hi};
    weights = {1.0, 0.0};
  } else if (t.peak == t.hi) {
    bounds = {t.lo, t.hi};
    weights = {0.0, 1.0};
  } else {
    bounds = {t.lo, t.peak, t.hi};
    weights = {0.0, 1.0, 0.0};
  }
  std::piecewise_linear_distribution<double> dist(bounds.begin(), bounds.end(),
                                                  weights.begin());
  return dist(rng);
}

namespace {

constexpr int kMaxMapRetries = 100;

template <typename Fill>
GridMap generate_with_retries(int width, int height, std::uint64_t seed, int min_free,
                              Fill fill) {
  if (width < 2 || height < 2) throw std::invalid_argument("map must be at least 2x2");
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < kMaxMapRetries; ++attempt) {
    std::vector<std::uint8_t> occ(static_cast<size_t>(width) * height, 0);
    fill(occ, rng);
    GridMap map(width, height, std::move(occ), seed);
    if (static_cast<int>(map.spawn_region().size()) >= min_free) return map;
  }
  throw InfeasibleSpawn("could not generate a map whose free region holds " +
                        std::to_string(min_free) + " cells");
}

}  // namespace

GridMap generate_map(int width, int height, const Triangular& density,
                     std::uint64_t seed, int min_free) {
  return generate_with_retries(
      width, height, seed, min_free, [&](std::vector<std::uint8_t>& occ, std::mt19937_64& rng) {
        double rho = sample_triangular(density, rng);
        int count = static_cast<int>(std::lround(rho * static_cast<double>(occ.size())));
        std::vector<int> order(occ.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (int i = 0; i < count; ++i) occ[order[i]] = 1;
      });
}

GridMap generate_warehouse(int width, int height, int aisle_width, double density,
                           std::uint64_t seed, int min_free) {
  aisle_width = std::max(1, aisle_width);
  return generate_with_retries(
      width, height, seed, min_free, [&](std::vector<std::uint8_t>& occ, std::mt19937_64& rng) {
        // Shelf rows every (aisle+1) rows, broken by a cross-aisle every 6
        // columns; the outer ring stays free.
        std::vector<int> shelf_cells;
        for (int y = 1; y < height - 1; ++y) {
          if ((y - 1) % (aisle_width + 1) != 0) continue;
          for (int x = 1; x < width - 1; ++x) {
            if (x % 6 == 0) continue;
            shelf_cells.push_back(y * width + x);
          }
        }
        if (shelf_cells.empty()) return;
        double max_frac = static_cast<double>(shelf_cells.size()) / occ.size();
        double keep = std::clamp(density / std::max(max_frac, 1e-9), 0.0, 1.0);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int idx : shelf_cells) {
          if (u(rng) < keep) occ[idx] = 1;
        }
      });
}

GridMap generate_city(int width, int height, double density, std::uint64_t seed,
                      int min_free) {
  return generate_with_retries(
      width, height, seed, min_free, [&](std::vector<std::uint8_t>& occ, std::mt19937_64& rng) {
        std::uniform_int_distribution<int> block(2, 5);
        std::uniform_int_distribution<int> street(1, 2);
        std::vector<std::pair<int, int>> xs;
        std::vector<std::pair<int, int>> ys;
        for (int x = street(rng); x < width;) {
          int w = block(rng);
          xs.emplace_back(x, std::min(width, x + w));
          x += w + street(rng);
        }
        for (int y = street(rng); y < height;) {
          int h = block(rng);
          ys.emplace_back(y, std::min(height, y + h));
          y += h + street(rng);
        }
        int block_cells = 0;
        for (auto [x0, x1] : xs)
          for (auto [y0, y1] : ys) block_cells += (x1 - x0) * (y1 - y0);
        if (block_cells == 0) return;
        double fill = std::clamp(density * occ.size() / block_cells, 0.0, 1.0);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (auto [x0, x1] : xs) {
          for (auto [y0, y1] : ys) {
            // Each block is carved by a random passage so the layout reads as
            // a maze of buildings rather than solid squares.
            bool carve_row = u(rng) < 0.5;
            int cut = carve_row ? std::uniform_int_distribution<int>(y0, y1 - 1)(rng)
                                : std::uniform_int_distribution<int>(x0, x1 - 1)(rng);
            for (int y = y0; y < y1; ++y) {
              for (int x = x0; x < x1; ++x) {
                if ((carve_row && y == cut) || (!carve_row && x == cut)) continue;
                if (u(rng) < fill) occ[y * width + x] = 1;
              }
            }
          }
        }
      });
}

std::vector<int> bfs_distances(const GridMap& map, Cell source,
                               const std::vector<std::uint8_t>* extra_blocked) {
  std::vector<int> dist(map.size(), kUnreachable);
  if (map.blocked(source)) return dist;
  std::vector<int> queue;
  queue.reserve(map.size());
  dist[map.index(source)] = 0;
  queue.push_back(map.index(source));
  for (size_t head = 0; head < queue.size(); ++head) {
    int idx = queue[head];
    Cell c = map.cell(idx);
    for (int a = 0; a < 4; ++a) {
      Cell n = apply_action(c, a);
      if (map.blocked(n)) continue;
      int ni = map.index(n);
      if (dist[ni] != kUnreachable) continue;
      if (extra_blocked && (*extra_blocked)[ni]) continue;
      dist[ni] = dist[idx] + 1;
      queue.push_back(ni);
    }
  }
  return dist;
}

std::string map_to_string(const GridMap& map) {
  std::ostringstream out;
  out << "type octile\nheight " << map.height() << "\nwidth " << map.width() << "\nmap\n";
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) out << (map.is_obstacle({x, y}) ? '@' : '.');
    out << '\n';
  }
  return out.str();
}

GridMap parse_map(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int height = -1;
  int width = -1;
  bool in_grid = false;
  std::vector<std::uint8_t> occ;
  int rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!in_grid) {
      std::istringstream ls(line);
      std::string key;
      ls >> key;
      if (key == "type") continue;
      if (key == "height") {
        ls >> height;
      } else if (key == "width") {
        ls >> width;
      } else if (key == "map") {
        if (height < 2 || width < 2) throw std::runtime_error("map header missing height/width");
        in_grid = true;
      } else if (!key.empty()) {
        throw std::runtime_error("unexpected map header line: " + line);
      }
      continue;
    }
    if (rows == height) {
      if (line.empty()) continue;
      throw std::runtime_error("map has more rows than declared height");
    }
    if (static_cast<int>(line.size()) != width) {
      throw std::runtime_error("map row " + std::to_string(rows) + " has width " +
                               std::to_string(line.size()) + ", expected " +
                               std::to_string(width));
    }
    for (char c : line) {
      switch (c) {
        case '.':
        case 'G':
        case 'S':
          occ.push_back(0);
          break;
        case '@':
        case 'O':
        case 'T':
        case 'W':
          occ.push_back(1);
          break;
        default:
          throw std::runtime_error(std::string("invalid map character '") + c + "'");
      }
    }
    ++rows;
  }
  if (!in_grid || rows != height) throw std::runtime_error("truncated map file");
  return GridMap(width, height, std::move(occ));
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path);
}

GridMap load_map_file(const std::string& path) { return parse_map(read_text_file(path)); }

void save_map_file(const GridMap& map, const std::string& path) {
  write_text_file(path, map_to_string(map));
}

std::string scenario_to_string(const std::vector<ScenarioEntry>& entries) {
  std::ostringstream out;
  out << "agent_id,start_x,start_y,goal_x,goal_y\n";
  for (const auto& e : entries) {
    out << e.agent_id << ',' << e.start.x << ',' << e.start.y << ',' << e.goal.x << ','
        << e.goal.y << '\n';
  }
  return out.str();
}

std::vector<ScenarioEntry> parse_scenario(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<ScenarioEntry> entries;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("agent_id", 0) == 0) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    ScenarioEntry e;
    if (!(ls >> e.agent_id >> e.start.x >> e.start.y >> e.goal.x >> e.goal.y)) {
      throw std::runtime_error("malformed scenario line " + std::to_string(line_no));
    }
    entries.push_back(e);
  }
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.agent_id < b.agent_id; });
  for (size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].agent_id != static_cast<int>(i)) {
      throw std::runtime_error("scenario agent ids must be 0..N-1");
    }
  }
  return entries;
}

std::vector<ScenarioEntry> load_scenario_file(const std::string& path) {
  return parse_scenario(read_text_file(path));
}

void save_scenario_file(const std::vector<ScenarioEntry>& entries, const std::string& path) {
  write_text_file(path, scenario_to_string(entries));
}

}  // namespace mapf
