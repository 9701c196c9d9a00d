#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <cstdlib>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mapf {

// x is the column, y is the row; (0,0) is the top-left corner as in map files.
struct Cell {
  int x = 0;
  int y = 0;
  auto operator<=>(const Cell&) const = default;
};

enum class Action : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kStay = 4 };
inline constexpr int kNumActions = 5;
// Bitmask with one bit per action.
inline constexpr std::uint8_t kAllActions = (1u << kNumActions) - 1;

inline constexpr std::array<int, kNumActions> kDx = {0, 0, -1, 1, 0};
inline constexpr std::array<int, kNumActions> kDy = {-1, 1, 0, 0, 0};

inline Cell apply_action(Cell c, int action) {
  return {c.x + kDx[action], c.y + kDy[action]};
}

inline int manhattan(Cell a, Cell b) {
  return std::abs(a.x - b.x) + std::abs(a.y - b.y);
}

// Returns the action index moving a onto b, or -1 when the cells are not
// equal or 4-adjacent.
int action_between(Cell a, Cell b);

std::string_view action_name(int action);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InfeasibleSpawn : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, int layer)
      : std::runtime_error(what), layer_(layer) {}
  int layer() const { return layer_; }

 private:
  int layer_;
};

// 64-bit FNV-1a; stable across platforms and runs, used for instance and
// config fingerprints.
class Fnv1a {
 public:
  void add(std::string_view bytes);
  void add_int(std::int64_t v);
  std::uint64_t digest() const { return h_; }
  std::string hex() const;

 private:
  std::uint64_t h_ = 1469598103934665603ULL;
};

// splitmix64 finaliser chained over the parts; used to derive independent
// per-instance / per-worker seeds from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts);

}  // namespace mapf
