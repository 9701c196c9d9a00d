#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <vector>

#include "mapf/common.hpp"
#include "mapf/grid_map.hpp"

namespace mapf {

struct RewardSchedule {
  double move = -0.3;
  double stay_on_goal = 0.0;
  double stay_off_goal = -0.3;
  double collision = -2.0;
  double blocking = -1.0;
};

struct EnvConfig {
  int fov = 3;                // odd side length of the square field of view
  int max_steps = 256;
  int memory_length = 8;      // short-term position buffer for the intrinsic reward
  double intrinsic_scale = 0.1;
  RewardSchedule rewards;
};

struct AgentState {
  int id = 0;
  Cell pos;
  Cell goal;
  int last_action = static_cast<int>(Action::kStay);
  double last_extrinsic_reward = 0.0;
  double last_intrinsic_reward = 0.0;
  double last_min_memory_distance = 0.0;
  std::deque<Cell> memory;  // positions held before the current one, oldest first
  bool done = false;
};

struct WorldState {
  GridMap map;
  std::vector<AgentState> agents;
  int step_index = 0;

  std::vector<Cell> positions() const;
};

inline constexpr int kObservationChannels = 8;
inline constexpr int kObservationScalars = 7;

// Channel order: 0-3 heuristic maps for up/down/left/right, 4 obstacles
// (out-of-bounds included), 5 other agents, 6 own goal (projected onto the
// FOV border when outside), 7 goals of visible peers (projected likewise).
// Scalars: dx, dy, d (normalised by the map diagonal), previous extrinsic
// and intrinsic reward, previous min memory distance / fov, previous action / 4.
struct Observation {
  int fov = 3;
  std::vector<double> maps;  // kObservationChannels * fov * fov, channel-major
  std::array<double, kObservationScalars> vec{};

  double at(int channel, int row, int col) const {
    return maps[(channel * fov + row) * fov + col];
  }
  double& at(int channel, int row, int col) { return maps[(channel * fov + row) * fov + col]; }
};

using JointAction = std::vector<int>;

struct StepOutcome {
  std::vector<Cell> positions;
  std::vector<int> actions;  // as requested
  std::vector<double> extrinsic;
  std::vector<double> intrinsic;
  std::vector<std::uint8_t> collision;
  std::vector<std::uint8_t> blocking;
  bool episode_done = false;
  int step_index = 0;
};

// Simultaneous-move resolution. A move is reverted when it leaves the map,
// enters an obstacle, swaps with another agent, or targets a cell claimed by
// another agent (including one that stays). Reversions are iterated to a
// fixed point since a reverted agent can invalidate a move into its cell.
struct MoveResolution {
  std::vector<Cell> positions;
  std::vector<std::uint8_t> reverted;
};
MoveResolution resolve_moves(const GridMap& map, const std::vector<Cell>& positions,
                             const JointAction& actions);

// n distinct starts and n distinct goals (2n distinct cells) drawn from the
// map's spawn region.
std::vector<AgentState> spawn(const GridMap& map, int n_agents, std::uint64_t seed);

Observation observe(const WorldState& state, const EnvConfig& cfg, int agent_id,
                    const std::vector<int>& goal_distances);
Observation observe(const WorldState& state, const EnvConfig& cfg, int agent_id);

double intrinsic_reward(const WorldState& state, const EnvConfig& cfg, int agent_id);
// Unscaled min Euclidean distance to the memory buffer, clipped to fov; 0 when
// the buffer is empty.
double min_memory_distance(const AgentState& agent, const EnvConfig& cfg);

std::vector<std::vector<int>> manhattan_matrix(const WorldState& state);
std::vector<std::vector<int>> manhattan_matrix(const std::vector<Cell>& positions);

// Agent i blocks when some other non-done agent j inside i's FOV gets a
// strictly shorter BFS distance to its goal once i is lifted off the map
// (all other agents stay as temporary walls).
std::vector<std::uint8_t> blocking_flags(const WorldState& state, const EnvConfig& cfg);

class GridWorld {
 public:
  GridWorld(GridMap map, std::vector<AgentState> agents, EnvConfig cfg = {});

  StepOutcome step(const JointAction& actions);
  Observation observe(int agent_id) const;

  const WorldState& state() const { return state_; }
  const EnvConfig& config() const { return cfg_; }
  int num_agents() const { return static_cast<int>(state_.agents.size()); }
  bool terminal() const { return terminal_; }
  bool all_at_goal() const;
  // Blocking flags of the current state (computed on reset and after each step).
  const std::vector<std::uint8_t>& current_blocking() const { return blocking_; }
  const std::vector<int>& goal_distances(int agent_id) const { return goal_dist_[agent_id]; }

 private:
  WorldState state_;
  EnvConfig cfg_;
  std::vector<std::vector<int>> goal_dist_;
  std::vector<std::uint8_t> blocking_;
  bool terminal_ = false;
};

}  // namespace mapf
