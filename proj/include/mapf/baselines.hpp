#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "mapf/grid_map.hpp"

namespace mapf::baselines {

// Cell occupied at t = 0, 1, ...; an agent stays on its last cell afterwards.
using Path = std::vector<Cell>;

// Moves until the final arrival (trailing waits on the goal do not count).
int path_cost(const Path& path);
Cell position_at(const Path& path, int t);

struct AgentTask {
  Cell start;
  Cell goal;
};

// Vertex: the agent may not occupy `cell` at `time`. Edge: the agent may not
// move from `cell` to `to` arriving at `time`.
struct Constraint {
  int agent = 0;
  Cell cell;
  Cell to;
  int time = 0;
  bool edge = false;
};

// Time-indexed occupancy of previously planned agents. Agents that finished
// their path keep their goal cell reserved forever.
class ReservationTable {
 public:
  void reserve(const Path& path);

  bool vertex_reserved(Cell c, int t) const;
  // True when someone moves to -> from arriving at t (the move from -> to
  // would swap with it).
  bool swap_reserved(Cell from, Cell to, int t) const;
  // Last time at which the cell is reserved; INT_MAX when parked on, -1 when free.
  int last_reserved(Cell c) const;
  int horizon() const { return max_time_; }

 private:
  std::set<std::tuple<int, int, int>> vertex_;            // x, y, t
  std::set<std::tuple<int, int, int, int, int>> edges_;   // fx, fy, tx, ty, t
  std::map<Cell, int> parked_;                            // cell -> first parked time
  std::map<Cell, int> last_;
  int max_time_ = 0;
};

struct SearchStats {
  long long expansions = 0;
};

// Space-time A* with Manhattan heuristic. Ties on f prefer larger g, then
// insertion order (successors are generated Up, Down, Left, Right, Stay).
// The goal is accepted only once no later constraint or reservation touches
// it. Constraints are taken to apply to this agent. `horizon` < 0 selects the
// last constrained time plus 4 * (W + H). Returns nullopt when infeasible.
std::optional<Path> astar_spacetime(const GridMap& map, Cell start, Cell goal,
                                    const std::vector<Constraint>& constraints,
                                    const ReservationTable* reservations = nullptr,
                                    int horizon = -1, SearchStats* stats = nullptr);

struct Solution {
  std::string solver;
  std::vector<Path> paths;
  bool success = false;
  bool optimal = false;
  int makespan = 0;
  long long soc = 0;
  int failed_agent = -1;
  std::string note;
  long long expansions = 0;  // low-level expansions (plus high-level nodes for CBS)
  double wall_seconds = 0.0;
};

void finalize_costs(Solution& s);

// Plans agents one after another in `priority` order (default: by id).
Solution cooperative_astar(const GridMap& map, const std::vector<AgentTask>& agents,
                           const std::vector<int>& priority = {});

struct CbsOptions {
  double timeout_seconds = 60.0;
  long long max_nodes = 200000;  // high-level node budget; deterministic cut-off
};

// Best-first on SOC over the constraint tree. On timeout or node budget the
// cooperative A* solution is returned flagged non-optimal (when it exists).
Solution cbs(const GridMap& map, const std::vector<AgentTask>& agents,
             const CbsOptions& options = {});

struct Conflict {
  int a = -1;
  int b = -1;
  int time = 0;
  bool edge = false;
  Cell cell;       // vertex cell, or a's origin for an edge conflict
  Cell cell_to;    // a's destination for an edge conflict
};

// Earliest conflict (then lowest agent pair, vertex before edge at equal time).
std::optional<Conflict> first_conflict(const std::vector<Path>& paths);

// Deterministic JSON (sorted keys). Wall time is written only when asked for,
// which keeps solution files byte-identical across runs otherwise.
std::string solution_to_json(const Solution& s, bool include_wall_time = false);
Solution solution_from_json(const std::string& text);

}  // namespace mapf::baselines
