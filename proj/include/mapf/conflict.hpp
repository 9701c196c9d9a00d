#pragma once

#include <random>
#include <vector>

#include "mapf/grid_map.hpp"
#include "mapf/grid_world.hpp"

namespace mapf::mappo {

struct ResolvedActions {
  JointAction actions;
  std::vector<std::uint8_t> changed;  // 1 where the executed action differs from the sample
  // Bit a set when action a was still allowed in the distribution the
  // executed action was finally drawn from.
  std::vector<std::uint8_t> allowed;
  int conflicts = 0;  // conflicts settled (vertex groups + swaps)
};

// Execution-time conflict resolution on sampled actions. Moves into walls or
// off the map are re-sampled first. Then, until no conflict remains:
//   * agents targeting one cell: an agent that stays keeps the cell, otherwise
//     the winner is drawn from softmax(v_ext) over the group;
//   * a swapping pair: the winner is drawn from softmax(v_ext) of the pair.
// Each loser forbids its current action and re-samples from its policy
// restricted to the remaining actions (Stay when no mass is left). Stay is
// never forbidden, so at most 4 * n actions are ever removed and the loop
// terminates. The result executes without a single simulator reversion.
// `probs` holds one row of 5 action probabilities per agent.
ResolvedActions resolve_conflicts(const GridMap& map, const std::vector<Cell>& positions,
                                  const JointAction& sampled,
                                  const std::vector<std::array<double, kNumActions>>& probs,
                                  const std::vector<double>& v_ext, std::mt19937_64& rng);

// True when executing `actions` from `positions` needs no reversion.
bool conflict_free(const GridMap& map, const std::vector<Cell>& positions,
                   const JointAction& actions);

}  // namespace mapf::mappo
