#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <queue>
#include <tuple>
#include <unordered_map>

namespace oracle {

namespace {

const int kStepX[5] = {0, 0, -1, 1, 0};
const int kStepY[5] = {-1, 1, 0, 0, 0};

bool free_cell(const GridMap& map, Cell c) {
  return c.x >= 0 && c.y >= 0 && c.x < map.width() && c.y < map.height() &&
         map.occupancy()[c.y * map.width() + c.x] == 0;
}

}  // namespace

std::vector<int> bfs(const GridMap& map, Cell src, const std::set<Cell>& walls) {
  std::vector<int> dist(map.width() * map.height(), kInf);
  if (!free_cell(map, src)) return dist;
  std::deque<Cell> q{src};
  dist[src.y * map.width() + src.x] = 0;
  while (!q.empty()) {
    Cell c = q.front();
    q.pop_front();
    int dc = dist[c.y * map.width() + c.x];
    for (int a = 0; a < 4; ++a) {
      Cell n{c.x + kStepX[a], c.y + kStepY[a]};
      if (!free_cell(map, n) || walls.count(n)) continue;
      int& dn = dist[n.y * map.width() + n.x];
      if (dn != kInf) continue;
      dn = dc + 1;
      q.push_back(n);
    }
  }
  return dist;
}

StepCheck recompute_step(const GridMap& map, const std::vector<Cell>& before,
                         const std::vector<Cell>& goals, const std::vector<int>& actions,
                         const std::vector<Cell>& after, const mapf::EnvConfig& cfg) {
  const size_t n = before.size();
  StepCheck out;
  out.collision.assign(n, 0);
  out.blocking.assign(n, 0);
  out.rewards.assign(n, 0.0);
  const auto& rw = cfg.rewards;
  for (size_t i = 0; i < n; ++i) {
    bool stay = actions[i] == 4;
    if (!stay && after[i] == before[i]) {
      out.collision[i] = 1;
      out.rewards[i] = rw.collision;
    } else if (!stay) {
      out.rewards[i] = rw.move;
    } else {
      out.rewards[i] = after[i] == goals[i] ? rw.stay_on_goal : rw.stay_off_goal;
    }
  }
  const int r = cfg.fov / 2;
  for (size_t j = 0; j < n; ++j) {
    if (after[j] == goals[j]) continue;
    std::set<Cell> walls;
    for (size_t k = 0; k < n; ++k) {
      if (k != j) walls.insert(after[k]);
    }
    const int gidx = goals[j].y * map.width() + goals[j].x;
    const int with = bfs(map, after[j], walls)[gidx];
    for (size_t i = 0; i < n; ++i) {
      if (i == j) continue;
      if (std::abs(after[i].x - after[j].x) > r || std::abs(after[i].y - after[j].y) > r) continue;
      std::set<Cell> lifted = walls;
      lifted.erase(after[i]);
      if (bfs(map, after[j], lifted)[gidx] < with) out.blocking[i] = 1;
    }
  }
  for (size_t i = 0; i < n; ++i) {
    if (out.blocking[i]) out.rewards[i] += rw.blocking;
  }
  return out;
}

std::string transition_violation(const GridMap& map, const std::vector<Cell>& before,
                                 const std::vector<Cell>& after) {
  const size_t n = before.size();
  for (size_t i = 0; i < n; ++i) {
    if (!free_cell(map, after[i])) return "agent " + std::to_string(i) + " on a blocked cell";
    if (std::abs(after[i].x - before[i].x) + std::abs(after[i].y - before[i].y) > 1) {
      return "agent " + std::to_string(i) + " jumped";
    }
    for (size_t j = i + 1; j < n; ++j) {
      if (after[i] == after[j]) {
        return "vertex collision " + std::to_string(i) + "/" + std::to_string(j);
      }
      if (after[i] == before[j] && after[j] == before[i] && before[i] != before[j]) {
        return "swap " + std::to_string(i) + "/" + std::to_string(j);
      }
    }
  }
  return {};
}

std::vector<double> gae_double_sum(const std::vector<double>& rewards,
                                   const std::vector<double>& values,
                                   const std::vector<std::uint8_t>& dones, double bootstrap,
                                   double gamma, double lambda) {
  const size_t T = rewards.size();
  std::vector<double> delta(T);
  for (size_t t = 0; t < T; ++t) {
    double next = t + 1 < T ? values[t + 1] : bootstrap;
    delta[t] = rewards[t] + (dones[t] ? 0.0 : gamma * next) - values[t];
  }
  std::vector<double> adv(T, 0.0);
  for (size_t t = 0; t < T; ++t) {
    for (size_t k = t; k < T; ++k) {
      bool cut = false;
      for (size_t m = t; m < k; ++m) cut = cut || dones[m];
      if (cut) break;
      adv[t] += std::pow(gamma * lambda, static_cast<double>(k - t)) * delta[k];
    }
  }
  return adv;
}

std::optional<long long> joint_optimal_soc(const GridMap& map, const std::vector<Cell>& starts,
                                           const std::vector<Cell>& goals,
                                           long long max_states) {
  const int n = static_cast<int>(starts.size());
  const int cells = map.width() * map.height();
  std::vector<std::vector<int>> h(n);
  for (int i = 0; i < n; ++i) {
    h[i] = bfs(map, goals[i]);
    if (h[i][starts[i].y * map.width() + starts[i].x] >= kInf) return std::nullopt;
  }
  // State key: positions in base `cells`, finished mask in the low bits.
  auto encode = [&](const std::vector<int>& pos, int mask) {
    long long key = 0;
    for (int i = 0; i < n; ++i) key = key * cells + pos[i];
    return (key << n) | mask;
  };
  auto heuristic = [&](const std::vector<int>& pos, int mask) {
    long long s = 0;
    for (int i = 0; i < n; ++i) {
      if (!(mask >> i & 1)) s += h[i][pos[i]];
    }
    return s;
  };
  using Entry = std::tuple<long long, long long, long long>;  // f, g, key
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  std::unordered_map<long long, long long> best;
  std::vector<int> start(n);
  for (int i = 0; i < n; ++i) start[i] = starts[i].y * map.width() + starts[i].x;
  long long k0 = encode(start, 0);
  best[k0] = 0;
  open.emplace(heuristic(start, 0), 0, k0);
  const int full = (1 << n) - 1;
  long long expanded = 0;

  std::vector<int> pos(n), nxt(n);
  while (!open.empty()) {
    auto [f, g, key] = open.top();
    open.pop();
    if (best[key] < g) continue;
    int mask = static_cast<int>(key & full);
    if (mask == full) return g;
    if (++expanded > max_states) return std::nullopt;
    long long rest = key >> n;
    for (int i = n - 1; i >= 0; --i) {
      pos[i] = static_cast<int>(rest % cells);
      rest /= cells;
    }
    auto push = [&](const std::vector<int>& p, int m, long long cost) {
      long long k = encode(p, m);
      auto it = best.find(k);
      if (it != best.end() && it->second <= cost) return;
      best[k] = cost;
      open.emplace(cost + heuristic(p, m), cost, k);
    };
    // Free commits of agents already on their goals.
    for (int i = 0; i < n; ++i) {
      if (!(mask >> i & 1) && pos[i] == goals[i].y * map.width() + goals[i].x) {
        push(pos, mask | (1 << i), g);
      }
    }
    int unfinished = 0;
    for (int i = 0; i < n; ++i) unfinished += !(mask >> i & 1);
    // Every joint move of the unfinished agents.
    std::vector<int> choice(n, 0);
    while (true) {
      bool ok = true;
      for (int i = 0; i < n && ok; ++i) {
        if (mask >> i & 1) {
          if (choice[i] != 4) ok = false;
          nxt[i] = pos[i];
          continue;
        }
        Cell c = map.cell(pos[i]);
        Cell to{c.x + kStepX[choice[i]], c.y + kStepY[choice[i]]};
        if (!free_cell(map, to)) ok = false;
        else nxt[i] = to.y * map.width() + to.x;
      }
      for (int i = 0; i < n && ok; ++i) {
        for (int j = i + 1; j < n && ok; ++j) {
          if (nxt[i] == nxt[j]) ok = false;
          if (nxt[i] == pos[j] && nxt[j] == pos[i] && pos[i] != nxt[i]) ok = false;
        }
      }
      if (ok) push(nxt, mask, g + unfinished);
      int d = 0;
      while (d < n && ++choice[d] == 5) choice[d++] = 0;
      if (d == n) break;
    }
  }
  return std::nullopt;
}

std::optional<SmallInstance> random_instance(int w, int h, double density, int n,
                                             std::mt19937_64& rng) {
  std::vector<std::uint8_t> occ(w * h, 0);
  int walls = static_cast<int>(std::lround(density * w * h));
  std::vector<int> idx(w * h);
  for (int i = 0; i < w * h; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  for (int i = 0; i < walls; ++i) occ[idx[i]] = 1;
  GridMap map(w, h, occ);
  // Pick the component of a random free cell, then 2n cells inside it.
  std::vector<int> free;
  for (int i = 0; i < w * h; ++i) {
    if (!occ[i]) free.push_back(i);
  }
  if (free.empty()) return std::nullopt;
  Cell seed = map.cell(free[std::uniform_int_distribution<size_t>(0, free.size() - 1)(rng)]);
  auto d = bfs(map, seed);
  std::vector<int> comp;
  for (int i = 0; i < w * h; ++i) {
    if (d[i] < kInf) comp.push_back(i);
  }
  if (static_cast<int>(comp.size()) < 2 * n) return std::nullopt;
  std::shuffle(comp.begin(), comp.end(), rng);
  SmallInstance inst{map, {}, {}};
  for (int i = 0; i < n; ++i) {
    inst.starts.push_back(map.cell(comp[i]));
    inst.goals.push_back(map.cell(comp[n + i]));
  }
  return inst;
}

}  // namespace oracle

namespace oracle {

ConflictState conflict_rich_state(std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  while (true) {
    const int w = std::uniform_int_distribution<int>(4, 7)(rng);
    auto inst = random_instance(w, w, 0.15, 1, rng);
    if (!inst) continue;
    ConflictState s;
    s.map = inst->map;
    std::vector<int> free;
    for (int i = 0; i < w * w; ++i) {
      if (!s.map.occupancy()[i]) free.push_back(i);
    }
    const int n = std::min<int>(static_cast<int>(free.size()) - 1,
                                std::uniform_int_distribution<int>(w, 2 * w)(rng));
    if (n < 2) continue;
    std::shuffle(free.begin(), free.end(), rng);
    for (int i = 0; i < n; ++i) {
      s.positions.push_back(s.map.cell(free[i]));
      std::array<double, mapf::kNumActions> p{};
      double z = 0.0;
      for (auto& v : p) {
        v = std::exp(1.5 * nd(rng));
        z += v;
      }
      for (auto& v : p) v /= z;
      s.probs.push_back(p);
      double r = u(rng), acc = 0.0;
      int a = mapf::kNumActions - 1;
      for (int k = 0; k < mapf::kNumActions; ++k) {
        acc += p[k];
        if (r < acc) {
          a = k;
          break;
        }
      }
      s.sampled.push_back(a);
      s.v_ext.push_back(nd(rng));
    }
    auto res = mapf::resolve_moves(s.map, s.positions, s.sampled);
    bool reverted = false;
    for (auto f : res.reverted) reverted = reverted || f;
    if (reverted) return s;
  }
}

}  // namespace oracle
