#include "mapf/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <climits>
#include <memory>
#include <queue>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"

namespace mapf::baselines {

int path_cost(const Path& path) {
  if (path.empty()) return 0;
  int c = static_cast<int>(path.size()) - 1;
  while (c > 0 && path[c - 1] == path.back()) --c;
  return c;
}

Cell position_at(const Path& path, int t) {
  if (path.empty()) throw std::invalid_argument("empty path");
  if (t < 0) t = 0;
  if (t >= static_cast<int>(path.size())) return path.back();
  return path[t];
}

void ReservationTable::reserve(const Path& path) {
  if (path.empty()) return;
  const int last = static_cast<int>(path.size()) - 1;
  for (int t = 0; t <= last; ++t) {
    vertex_.emplace(path[t].x, path[t].y, t);
    auto& l = last_[path[t]];
    l = std::max(l, t);
    if (t > 0 && path[t - 1] != path[t]) {
      edges_.emplace(path[t - 1].x, path[t - 1].y, path[t].x, path[t].y, t);
    }
  }
  auto [it, inserted] = parked_.emplace(path.back(), last);
  if (!inserted) it->second = std::min(it->second, last);
  max_time_ = std::max(max_time_, last);
}

bool ReservationTable::vertex_reserved(Cell c, int t) const {
  auto p = parked_.find(c);
  if (p != parked_.end() && t >= p->second) return true;
  return vertex_.count({c.x, c.y, t}) > 0;
}

bool ReservationTable::swap_reserved(Cell from, Cell to, int t) const {
  return edges_.count({to.x, to.y, from.x, from.y, t}) > 0;
}

int ReservationTable::last_reserved(Cell c) const {
  if (parked_.count(c)) return INT_MAX;
  auto it = last_.find(c);
  return it == last_.end() ? -1 : it->second;
}

namespace {

struct Node {
  Cell cell;
  int t = 0;
  int parent = -1;
};

struct QueueEntry {
  int f = 0;
  int g = 0;
  long long seq = 0;
  int node = 0;
  bool operator<(const QueueEntry& o) const {
    // std::priority_queue pops the largest: smallest f, then largest g, then oldest.
    if (f != o.f) return f > o.f;
    if (g != o.g) return g < o.g;
    return seq > o.seq;
  }
};

}  // namespace

std::optional<Path> astar_spacetime(const GridMap& map, Cell start, Cell goal,
                                    const std::vector<Constraint>& constraints,
                                    const ReservationTable* reservations, int horizon,
                                    SearchStats* stats) {
  if (map.blocked(start) || map.blocked(goal)) return std::nullopt;
  std::set<std::tuple<int, int, int>> vcons;
  std::set<std::tuple<int, int, int, int, int>> econs;
  int last_constraint = 0;  // times beyond this (and the reservations) look alike
  int goal_free_after = -1;  // last time the goal cell is forbidden
  for (const Constraint& c : constraints) {
    last_constraint = std::max(last_constraint, c.time);
    if (c.edge) {
      econs.emplace(c.cell.x, c.cell.y, c.to.x, c.to.y, c.time);
    } else {
      vcons.emplace(c.cell.x, c.cell.y, c.time);
      if (c.cell == goal) goal_free_after = std::max(goal_free_after, c.time);
    }
  }
  if (reservations) {
    last_constraint = std::max(last_constraint, reservations->horizon());
    int r = reservations->last_reserved(goal);
    if (r == INT_MAX) return std::nullopt;
    goal_free_after = std::max(goal_free_after, r);
  }
  if (horizon < 0) horizon = last_constraint + 4 * (map.width() + map.height());

  auto vertex_ok = [&](Cell c, int t) {
    if (vcons.count({c.x, c.y, t})) return false;
    return !(reservations && reservations->vertex_reserved(c, t));
  };
  auto edge_ok = [&](Cell from, Cell to, int t) {
    if (econs.count({from.x, from.y, to.x, to.y, t})) return false;
    return !(reservations && reservations->swap_reserved(from, to, t));
  };
  if (!vertex_ok(start, 0)) return std::nullopt;

  // Closed states keyed by (cell, min(t, last_constraint + 1)).
  const long long slab = static_cast<long long>(map.size());
  auto key = [&](Cell c, int t) {
    return static_cast<long long>(std::min(t, last_constraint + 1)) * slab + map.index(c);
  };
  std::vector<Node> nodes;
  std::priority_queue<QueueEntry> open;
  std::unordered_set<long long> closed;
  long long seq = 0;
  nodes.push_back({start, 0, -1});
  open.push({manhattan(start, goal), 0, seq++, 0});
  long long expansions = 0;
  std::optional<Path> result;
  while (!open.empty()) {
    QueueEntry top = open.top();
    open.pop();
    const Node cur = nodes[top.node];
    if (!closed.insert(key(cur.cell, cur.t)).second) continue;
    ++expansions;
    if (cur.cell == goal && cur.t > goal_free_after) {
      Path p;
      for (int k = top.node; k >= 0; k = nodes[k].parent) p.push_back(nodes[k].cell);
      std::reverse(p.begin(), p.end());
      result = std::move(p);
      break;
    }
    if (cur.t >= horizon) continue;
    const int nt = cur.t + 1;
    for (int a = 0; a < kNumActions; ++a) {
      Cell next = apply_action(cur.cell, a);
      if (map.blocked(next)) continue;
      if (!vertex_ok(next, nt)) continue;
      if (next != cur.cell && !edge_ok(cur.cell, next, nt)) continue;
      if (closed.count(key(next, nt))) continue;
      nodes.push_back({next, nt, top.node});
      open.push({nt + manhattan(next, goal), nt, seq++, static_cast<int>(nodes.size()) - 1});
    }
  }
  if (stats) stats->expansions += expansions;
  return result;
}

void finalize_costs(Solution& s) {
  s.makespan = 0;
  s.soc = 0;
  for (const Path& p : s.paths) {
    int c = path_cost(p);
    s.makespan = std::max(s.makespan, c);
    s.soc += c;
  }
}

namespace {

void check_tasks(const GridMap& map, const std::vector<AgentTask>& agents) {
  std::set<Cell> starts, goals;
  for (const AgentTask& a : agents) {
    if (map.blocked(a.start) || map.blocked(a.goal)) {
      throw std::invalid_argument("agent start or goal is not a free cell");
    }
    if (!starts.insert(a.start).second || !goals.insert(a.goal).second) {
      throw std::invalid_argument("starts and goals must be pairwise distinct");
    }
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Solution cooperative_astar(const GridMap& map, const std::vector<AgentTask>& agents,
                           const std::vector<int>& priority) {
  check_tasks(map, agents);
  auto t0 = std::chrono::steady_clock::now();
  std::vector<int> order = priority;
  if (order.empty()) {
    order.resize(agents.size());
    for (size_t i = 0; i < agents.size(); ++i) order[i] = static_cast<int>(i);
  }
  if (order.size() != agents.size()) throw std::invalid_argument("priority must list every agent");
  Solution s;
  s.solver = "ca_star";
  s.paths.assign(agents.size(), {});
  s.success = true;
  ReservationTable table;
  SearchStats stats;
  for (int id : order) {
    auto path = astar_spacetime(map, agents.at(id).start, agents.at(id).goal, {}, &table, -1,
                                &stats);
    if (!path) {
      s.success = false;
      s.failed_agent = id;
      s.note = "no path for agent " + std::to_string(id) + " around higher-priority reservations";
      break;
    }
    table.reserve(*path);
    s.paths[id] = std::move(*path);
  }
  if (s.success) finalize_costs(s);
  s.expansions = stats.expansions;
  s.wall_seconds = seconds_since(t0);
  return s;
}

std::optional<Conflict> first_conflict(const std::vector<Path>& paths) {
  int horizon = 0;
  for (const Path& p : paths) horizon = std::max(horizon, static_cast<int>(p.size()));
  const int n = static_cast<int>(paths.size());
  for (int t = 0; t < horizon; ++t) {
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        Cell pa = position_at(paths[a], t);
        if (pa == position_at(paths[b], t)) return Conflict{a, b, t, false, pa, pa};
      }
    }
    if (t == 0) continue;
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        Cell a0 = position_at(paths[a], t - 1), a1 = position_at(paths[a], t);
        Cell b0 = position_at(paths[b], t - 1), b1 = position_at(paths[b], t);
        if (a0 != a1 && a0 == b1 && a1 == b0) return Conflict{a, b, t, true, a0, a1};
      }
    }
  }
  return std::nullopt;
}

namespace {

struct CtNode {
  std::vector<Constraint> constraints;
  std::vector<Path> paths;
  long long soc = 0;
  long long id = 0;
};

struct CtOrder {
  bool operator()(const CtNode* a, const CtNode* b) const {
    if (a->soc != b->soc) return a->soc > b->soc;
    return a->id > b->id;
  }
};

std::vector<Constraint> constraints_for(const std::vector<Constraint>& all, int agent) {
  std::vector<Constraint> out;
  for (const Constraint& c : all) {
    if (c.agent == agent) out.push_back(c);
  }
  return out;
}

}  // namespace

Solution cbs(const GridMap& map, const std::vector<AgentTask>& agents, const CbsOptions& options) {
  check_tasks(map, agents);
  auto t0 = std::chrono::steady_clock::now();
  const int n = static_cast<int>(agents.size());
  SearchStats stats;
  std::vector<std::unique_ptr<CtNode>> pool;
  std::priority_queue<CtNode*, std::vector<CtNode*>, CtOrder> open;

  Solution s;
  s.solver = "cbs";
  auto root = std::make_unique<CtNode>();
  for (int i = 0; i < n; ++i) {
    auto p = astar_spacetime(map, agents[i].start, agents[i].goal, {}, nullptr, -1, &stats);
    if (!p) {
      s.failed_agent = i;
      s.note = "goal of agent " + std::to_string(i) + " is unreachable";
      s.expansions = stats.expansions;
      s.wall_seconds = seconds_since(t0);
      return s;
    }
    root->soc += path_cost(*p);
    root->paths.push_back(std::move(*p));
  }
  long long next_id = 0;
  root->id = next_id++;
  open.push(root.get());
  pool.push_back(std::move(root));

  long long generated = 1;
  std::string cut;
  while (!open.empty()) {
    if (generated >= options.max_nodes) {
      cut = "node budget of " + std::to_string(options.max_nodes) + " exhausted";
      break;
    }
    if (seconds_since(t0) > options.timeout_seconds) {
      cut = "timeout";
      break;
    }
    CtNode* node = open.top();
    open.pop();
    auto conflict = first_conflict(node->paths);
    if (!conflict) {
      s.paths = node->paths;
      s.success = true;
      s.optimal = true;
      finalize_costs(s);
      s.expansions = stats.expansions + generated;
      s.wall_seconds = seconds_since(t0);
      return s;
    }
    const Conflict& c = *conflict;
    for (int side = 0; side < 2; ++side) {
      Constraint k;
      k.agent = side == 0 ? c.a : c.b;
      k.time = c.time;
      k.edge = c.edge;
      if (c.edge) {
        k.cell = side == 0 ? c.cell : c.cell_to;
        k.to = side == 0 ? c.cell_to : c.cell;
      } else {
        k.cell = k.to = c.cell;
      }
      auto child = std::make_unique<CtNode>();
      child->constraints = node->constraints;
      child->constraints.push_back(k);
      const AgentTask& task = agents[k.agent];
      auto p = astar_spacetime(map, task.start, task.goal,
                               constraints_for(child->constraints, k.agent), nullptr, -1, &stats);
      if (!p) continue;
      child->paths = node->paths;
      child->paths[k.agent] = std::move(*p);
      for (const Path& q : child->paths) child->soc += path_cost(q);
      child->id = next_id++;
      ++generated;
      open.push(child.get());
      pool.push_back(std::move(child));
    }
  }
  if (cut.empty()) cut = "constraint tree exhausted";
  Solution fallback = cooperative_astar(map, agents);
  fallback.solver = "cbs";
  fallback.optimal = false;
  fallback.note = cut + "; cooperative A* incumbent returned";
  fallback.expansions += stats.expansions + generated;
  fallback.wall_seconds = seconds_since(t0);
  return fallback;
}

std::string solution_to_json(const Solution& s, bool include_wall_time) {
  nlohmann::json j;
  j["solver"] = s.solver;
  j["success"] = s.success;
  j["optimal"] = s.optimal;
  j["makespan"] = s.makespan;
  j["soc"] = s.soc;
  j["failed_agent"] = s.failed_agent;
  j["note"] = s.note;
  j["expansions"] = s.expansions;
  nlohmann::json paths = nlohmann::json::array();
  for (const Path& p : s.paths) {
    nlohmann::json cells = nlohmann::json::array();
    for (Cell c : p) cells.push_back({c.x, c.y});
    paths.push_back(std::move(cells));
  }
  j["paths"] = std::move(paths);
  if (include_wall_time) j["wall_seconds"] = s.wall_seconds;
  return j.dump(2) + "\n";
}

Solution solution_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  Solution s;
  s.solver = j.at("solver").get<std::string>();
  s.success = j.at("success").get<bool>();
  s.optimal = j.at("optimal").get<bool>();
  s.makespan = j.at("makespan").get<int>();
  s.soc = j.at("soc").get<long long>();
  s.failed_agent = j.at("failed_agent").get<int>();
  s.note = j.at("note").get<std::string>();
  s.expansions = j.at("expansions").get<long long>();
  for (const auto& p : j.at("paths")) {
    Path path;
    for (const auto& c : p) path.push_back(Cell{c.at(0).get<int>(), c.at(1).get<int>()});
    s.paths.push_back(std::move(path));
  }
  if (j.contains("wall_seconds")) s.wall_seconds = j["wall_seconds"].get<double>();
  return s;
}

}  // namespace mapf::baselines
