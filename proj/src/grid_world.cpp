#include "mapf/grid_world.hpp"

#include <algorithm>
#include <cmath>

namespace mapf {

std::vector<Cell> WorldState::positions() const {
  std::vector<Cell> out;
  out.reserve(agents.size());
  for (const auto& a : agents) out.push_back(a.pos);
  return out;
}

MoveResolution resolve_moves(const GridMap& map, const std::vector<Cell>& positions,
                             const JointAction& actions) {
  const size_t n = positions.size();
  if (actions.size() != n) throw ShapeError("joint action length does not match agent count");
  MoveResolution res;
  res.positions.resize(n);
  res.reverted.assign(n, 0);
  auto& target = res.positions;
  for (size_t i = 0; i < n; ++i) {
    if (actions[i] < 0 || actions[i] >= kNumActions) {
      throw std::invalid_argument("action index out of range");
    }
    target[i] = apply_action(positions[i], actions[i]);
    if (target[i] != positions[i] && map.blocked(target[i])) {
      target[i] = positions[i];
      res.reverted[i] = 1;
    }
  }
  auto revert = [&](size_t i) {
    if (target[i] == positions[i]) return false;
    target[i] = positions[i];
    res.reverted[i] = 1;
    return true;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = i + 1; j < n; ++j) {
        bool swap = target[i] == positions[j] && target[j] == positions[i] &&
                    target[i] != positions[i];
        if (swap || target[i] == target[j]) {
          // Two reverts in one statement would short-circuit; keep both.
          bool ri = revert(i);
          bool rj = revert(j);
          changed = changed || ri || rj;
        }
      }
    }
  }
  return res;
}

std::vector<AgentState> spawn(const GridMap& map, int n_agents, std::uint64_t seed) {
  if (n_agents < 1) throw std::invalid_argument("need at least one agent");
  std::vector<int> region = map.spawn_region();
  if (static_cast<int>(region.size()) < 2 * n_agents) {
    throw InfeasibleSpawn("free region of " + std::to_string(region.size()) +
                          " cells cannot hold " + std::to_string(n_agents) +
                          " distinct starts and goals");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(region.begin(), region.end(), rng);
  std::vector<AgentState> agents(n_agents);
  for (int i = 0; i < n_agents; ++i) {
    agents[i].id = i;
    agents[i].pos = map.cell(region[i]);
    agents[i].goal = map.cell(region[n_agents + i]);
  }
  return agents;
}

Observation observe(const WorldState& state, const EnvConfig& cfg, int agent_id,
                    const std::vector<int>& goal_distances) {
  const GridMap& map = state.map;
  const AgentState& self = state.agents.at(agent_id);
  const int f = cfg.fov;
  const int r = f / 2;
  Observation obs;
  obs.fov = f;
  obs.maps.assign(static_cast<size_t>(kObservationChannels) * f * f, 0.0);

  auto project = [&](Cell target, Cell origin) {
    int col = std::clamp(target.x - origin.x, -r, r) + r;
    int row = std::clamp(target.y - origin.y, -r, r) + r;
    return std::pair{row, col};
  };

  for (int row = 0; row < f; ++row) {
    for (int col = 0; col < f; ++col) {
      Cell c{self.pos.x + col - r, self.pos.y + row - r};
      if (map.blocked(c)) {
        obs.at(4, row, col) = 1.0;
        continue;
      }
      int here = goal_distances[map.index(c)];
      if (here == kUnreachable) continue;
      for (int a = 0; a < 4; ++a) {
        Cell n = apply_action(c, a);
        if (!map.blocked(n) && goal_distances[map.index(n)] < here) obs.at(a, row, col) = 1.0;
      }
    }
  }
  {
    auto [row, col] = project(self.goal, self.pos);
    obs.at(6, row, col) = 1.0;
  }
  for (const auto& other : state.agents) {
    if (other.id == self.id) continue;
    int dx = other.pos.x - self.pos.x;
    int dy = other.pos.y - self.pos.y;
    if (std::abs(dx) > r || std::abs(dy) > r) continue;
    obs.at(5, dy + r, dx + r) = 1.0;
    auto [row, col] = project(other.goal, self.pos);
    obs.at(7, row, col) = 1.0;
  }

  const double diag = std::hypot(static_cast<double>(map.width()), static_cast<double>(map.height()));
  const double gx = self.goal.x - self.pos.x;
  const double gy = self.goal.y - self.pos.y;
  obs.vec[0] = gx / diag;
  obs.vec[1] = gy / diag;
  obs.vec[2] = std::hypot(gx, gy) / diag;
  obs.vec[3] = self.last_extrinsic_reward;
  obs.vec[4] = self.last_intrinsic_reward;
  obs.vec[5] = self.last_min_memory_distance / static_cast<double>(f);
  obs.vec[6] = static_cast<double>(self.last_action) / 4.0;
  return obs;
}

Observation observe(const WorldState& state, const EnvConfig& cfg, int agent_id) {
  const AgentState& self = state.agents.at(agent_id);
  return observe(state, cfg, agent_id, bfs_distances(state.map, self.goal));
}

double min_memory_distance(const AgentState& agent, const EnvConfig& cfg) {
  if (agent.memory.empty()) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (Cell m : agent.memory) {
    best = std::min(best, std::hypot(static_cast<double>(agent.pos.x - m.x),
                                     static_cast<double>(agent.pos.y - m.y)));
  }
  return std::min(best, static_cast<double>(cfg.fov));
}

double intrinsic_reward(const WorldState& state, const EnvConfig& cfg, int agent_id) {
  const AgentState& a = state.agents.at(agent_id);
  if (a.memory.empty() || a.pos == a.goal) return 0.0;
  return cfg.intrinsic_scale * min_memory_distance(a, cfg);
}

std::vector<std::vector<int>> manhattan_matrix(const std::vector<Cell>& positions) {
  const size_t n = positions.size();
  std::vector<std::vector<int>> d(n, std::vector<int>(n, 0));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      d[i][j] = d[j][i] = manhattan(positions[i], positions[j]);
    }
  }
  return d;
}

std::vector<std::vector<int>> manhattan_matrix(const WorldState& state) {
  return manhattan_matrix(state.positions());
}

std::vector<std::uint8_t> blocking_flags(const WorldState& state, const EnvConfig& cfg) {
  const GridMap& map = state.map;
  const size_t n = state.agents.size();
  const int r = cfg.fov / 2;
  std::vector<std::uint8_t> flags(n, 0);
  if (n < 2) return flags;
  std::vector<std::uint8_t> walls(map.size(), 0);
  for (const auto& a : state.agents) walls[map.index(a.pos)] = 1;

  for (const auto& j : state.agents) {
    if (j.pos == j.goal) continue;
    const int jpos = map.index(j.pos);
    walls[jpos] = 0;
    const int goal = map.index(j.goal);
    const int base = bfs_distances(map, j.pos, &walls)[goal];
    for (const auto& i : state.agents) {
      if (i.id == j.id || flags[i.id]) continue;
      if (std::abs(i.pos.x - j.pos.x) > r || std::abs(i.pos.y - j.pos.y) > r) continue;
      const int ipos = map.index(i.pos);
      walls[ipos] = 0;
      const int without = bfs_distances(map, j.pos, &walls)[goal];
      walls[ipos] = 1;
      if (without < base) flags[i.id] = 1;
    }
    walls[jpos] = 1;
  }
  return flags;
}

GridWorld::GridWorld(GridMap map, std::vector<AgentState> agents, EnvConfig cfg)
    : cfg_(cfg) {
  if (cfg_.fov < 1 || cfg_.fov % 2 == 0) throw std::invalid_argument("fov must be odd and positive");
  if (cfg_.max_steps < 1) throw std::invalid_argument("max_steps must be positive");
  state_.map = std::move(map);
  state_.agents = std::move(agents);
  std::vector<Cell> seen_starts;
  std::vector<Cell> seen_goals;
  for (size_t i = 0; i < state_.agents.size(); ++i) {
    auto& a = state_.agents[i];
    a.id = static_cast<int>(i);
    if (state_.map.blocked(a.pos) || state_.map.blocked(a.goal)) {
      throw std::invalid_argument("agent " + std::to_string(i) + " start or goal is not a free cell");
    }
    seen_starts.push_back(a.pos);
    seen_goals.push_back(a.goal);
    a.done = a.pos == a.goal;
    goal_dist_.push_back(bfs_distances(state_.map, a.goal));
  }
  std::sort(seen_starts.begin(), seen_starts.end());
  std::sort(seen_goals.begin(), seen_goals.end());
  if (std::adjacent_find(seen_starts.begin(), seen_starts.end()) != seen_starts.end() ||
      std::adjacent_find(seen_goals.begin(), seen_goals.end()) != seen_goals.end()) {
    throw std::invalid_argument("starts and goals must be pairwise distinct");
  }
  blocking_ = blocking_flags(state_, cfg_);
  terminal_ = all_at_goal();
}

bool GridWorld::all_at_goal() const {
  return std::all_of(state_.agents.begin(), state_.agents.end(),
                     [](const AgentState& a) { return a.pos == a.goal; });
}

Observation GridWorld::observe(int agent_id) const {
  return mapf::observe(state_, cfg_, agent_id, goal_dist_.at(agent_id));
}

StepOutcome GridWorld::step(const JointAction& actions) {
  if (terminal_) throw std::logic_error("step called on a terminal episode");
  const size_t n = state_.agents.size();
  if (actions.size() != n) throw ShapeError("joint action length does not match agent count");
  const std::vector<Cell> before = state_.positions();
  MoveResolution res = resolve_moves(state_.map, before, actions);

  StepOutcome out;
  out.actions = actions;
  out.positions = res.positions;
  out.collision = res.reverted;
  out.extrinsic.assign(n, 0.0);
  out.intrinsic.assign(n, 0.0);
  const RewardSchedule& rw = cfg_.rewards;
  for (size_t i = 0; i < n; ++i) {
    auto& a = state_.agents[i];
    a.memory.push_back(a.pos);
    while (static_cast<int>(a.memory.size()) > cfg_.memory_length) a.memory.pop_front();
    a.pos = res.positions[i];
    double r;
    if (res.reverted[i]) {
      r = rw.collision;
    } else if (actions[i] != static_cast<int>(Action::kStay)) {
      r = rw.move;
    } else {
      r = a.pos == a.goal ? rw.stay_on_goal : rw.stay_off_goal;
    }
    out.extrinsic[i] = r;
  }
  ++state_.step_index;
  blocking_ = blocking_flags(state_, cfg_);
  out.blocking = blocking_;
  for (size_t i = 0; i < n; ++i) {
    auto& a = state_.agents[i];
    if (blocking_[i]) out.extrinsic[i] += rw.blocking;
    out.intrinsic[i] = intrinsic_reward(state_, cfg_, static_cast<int>(i));
    a.last_action = actions[i];
    a.last_extrinsic_reward = out.extrinsic[i];
    a.last_intrinsic_reward = out.intrinsic[i];
    a.last_min_memory_distance = min_memory_distance(a, cfg_);
    a.done = a.pos == a.goal;
  }
  terminal_ = all_at_goal() || state_.step_index >= cfg_.max_steps;
  out.episode_done = terminal_;
  out.step_index = state_.step_index;
  return out;
}

}  // namespace mapf
