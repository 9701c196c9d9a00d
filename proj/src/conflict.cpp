#include "mapf/conflict.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace mapf::mappo {

namespace {

using Allowed = std::array<bool, kNumActions>;

int sample_restricted(const std::array<double, kNumActions>& p, const Allowed& allowed,
                      std::mt19937_64& rng) {
  double total = 0.0;
  for (int a = 0; a < kNumActions; ++a) {
    if (allowed[a]) total += std::max(p[a], 0.0);
  }
  if (!(total > 0.0)) return static_cast<int>(Action::kStay);
  double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  int last = static_cast<int>(Action::kStay);
  for (int a = 0; a < kNumActions; ++a) {
    if (!allowed[a] || p[a] <= 0.0) continue;
    last = a;
    u -= p[a];
    if (u < 0.0) return a;
  }
  return last;
}

int draw_winner(const std::vector<int>& group, const std::vector<double>& v_ext,
                std::mt19937_64& rng) {
  double mx = v_ext[group.front()];
  for (int i : group) mx = std::max(mx, v_ext[i]);
  std::vector<double> w;
  for (int i : group) w.push_back(std::exp(v_ext[i] - mx));
  std::discrete_distribution<int> pick(w.begin(), w.end());
  return group[pick(rng)];
}

}  // namespace

ResolvedActions resolve_conflicts(const GridMap& map, const std::vector<Cell>& positions,
                                  const JointAction& sampled,
                                  const std::vector<std::array<double, kNumActions>>& probs,
                                  const std::vector<double>& v_ext, std::mt19937_64& rng) {
  const int n = static_cast<int>(positions.size());
  if (static_cast<int>(sampled.size()) != n || static_cast<int>(probs.size()) != n ||
      static_cast<int>(v_ext.size()) != n) {
    throw ShapeError("conflict resolution inputs must have one entry per agent");
  }
  ResolvedActions out;
  out.actions = sampled;
  out.changed.assign(n, 0);
  std::vector<Allowed> allowed(n);
  for (int i = 0; i < n; ++i) {
    allowed[i].fill(true);
    for (int a = 0; a < kNumActions; ++a) {
      if (a != static_cast<int>(Action::kStay) && map.blocked(apply_action(positions[i], a))) {
        allowed[i][a] = false;
      }
    }
    if (!allowed[i][out.actions[i]]) {
      out.actions[i] = sample_restricted(probs[i], allowed[i], rng);
      out.changed[i] = 1;
    }
  }

  auto lose = [&](int i) {
    allowed[i][out.actions[i]] = false;
    out.actions[i] = sample_restricted(probs[i], allowed[i], rng);
    out.changed[i] = 1;
  };

  std::vector<Cell> target(n);
  for (;;) {
    for (int i = 0; i < n; ++i) target[i] = apply_action(positions[i], out.actions[i]);

    std::map<Cell, std::vector<int>> claims;
    for (int i = 0; i < n; ++i) claims[target[i]].push_back(i);
    bool settled = false;
    for (const auto& [cell, group] : claims) {
      if (group.size() < 2) continue;
      int winner = -1;
      for (int i : group) {
        if (target[i] == positions[i]) winner = i;
      }
      if (winner < 0) winner = draw_winner(group, v_ext, rng);
      for (int i : group) {
        if (i != winner) lose(i);
      }
      settled = true;
      break;
    }
    if (!settled) {
      for (int i = 0; i < n && !settled; ++i) {
        if (target[i] == positions[i]) continue;
        for (int j = i + 1; j < n; ++j) {
          if (target[i] == positions[j] && target[j] == positions[i]) {
            int winner = draw_winner({i, j}, v_ext, rng);
            lose(winner == i ? j : i);
            settled = true;
            break;
          }
        }
      }
    }
    if (!settled) break;
    ++out.conflicts;
  }
  out.allowed.assign(n, 0);
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < kNumActions; ++a) {
      if (allowed[i][a]) out.allowed[i] |= static_cast<std::uint8_t>(1u << a);
    }
  }
  return out;
}

bool conflict_free(const GridMap& map, const std::vector<Cell>& positions,
                   const JointAction& actions) {
  MoveResolution res = resolve_moves(map, positions, actions);
  return std::none_of(res.reverted.begin(), res.reverted.end(), [](std::uint8_t r) { return r; });
}

}  // namespace mapf::mappo
