#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "mapf/grid_world.hpp"
#include "support/oracles.hpp"

using namespace mapf;

namespace {

GridMap empty_map(int w, int h) { return GridMap(w, h, std::vector<std::uint8_t>(w * h, 0)); }

GridMap map_from_rows(const std::vector<std::string>& rows) {
  const int h = static_cast<int>(rows.size());
  const int w = static_cast<int>(rows[0].size());
  std::vector<std::uint8_t> occ;
  for (const auto& r : rows) {
    for (char c : r) occ.push_back(c == '@');
  }
  return GridMap(w, h, occ);
}

std::vector<AgentState> agents_at(const std::vector<std::pair<Cell, Cell>>& pairs) {
  std::vector<AgentState> out;
  for (size_t i = 0; i < pairs.size(); ++i) {
    AgentState a;
    a.id = static_cast<int>(i);
    a.pos = pairs[i].first;
    a.goal = pairs[i].second;
    out.push_back(a);
  }
  return out;
}

constexpr int U = 0, D = 1, L = 2, R = 3, S = 4;

}  // namespace

TEST(GenerateMap, ZeroDensityHasNoObstacles) {
  GridMap m = generate_map(10, 10, Triangular{0, 0, 0}, 7);
  EXPECT_EQ(m.obstacle_count(), 0);
  EXPECT_EQ(static_cast<int>(m.spawn_region().size()), 100);
}

TEST(GenerateMap, SameSeedSameGrid) {
  GridMap a = generate_map(10, 10, Triangular{0, 0.33, 0.5}, 42);
  GridMap b = generate_map(10, 10, Triangular{0, 0.33, 0.5}, 42);
  EXPECT_EQ(a.occupancy(), b.occupancy());
  GridMap c = generate_map(10, 10, Triangular{0, 0.33, 0.5}, 43);
  EXPECT_NE(a.occupancy(), c.occupancy());
}

TEST(GenerateMap, MeanDensityMatchesTriangularMean) {
  const double expected = (0.0 + 0.33 + 0.5) / 3.0;
  double sum = 0.0;
  const int samples = 10000;
  for (int s = 0; s < samples; ++s) {
    sum += generate_map(40, 40, Triangular{0, 0.33, 0.5}, 1000 + s).obstacle_fraction();
  }
  double mean = sum / samples;
  EXPECT_NEAR(mean, expected, 0.01);
  EXPECT_GE(mean, 0.25);
  EXPECT_LE(mean, 0.31);
}

TEST(GenerateMap, SpawnRegionIsOneLargestComponent) {
  for (int s = 0; s < 50; ++s) {
    GridMap m = generate_map(12, 9, Triangular{0.3, 0.4, 0.5}, s);
    const auto& region = m.spawn_region();
    ASSERT_FALSE(region.empty());
    auto d = oracle::bfs(m, m.cell(region.front()));
    int reachable = 0;
    for (int v : d) reachable += v < oracle::kInf;
    EXPECT_EQ(reachable, static_cast<int>(region.size()));
    for (int idx : region) EXPECT_LT(d[idx], oracle::kInf);
    for (const auto& comp : m.free_components()) EXPECT_LE(comp.size(), region.size());
  }
}

TEST(Spawn, SingleAgentOnTinyMap) {
  auto a = spawn(empty_map(2, 2), 1, 3);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_NE(a[0].pos, a[0].goal);
}

TEST(Spawn, DeterministicPerSeed) {
  GridMap m = generate_map(10, 10, Triangular{0, 0.33, 0.5}, 5);
  auto a = spawn(m, 8, 99);
  auto b = spawn(m, 8, 99);
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(a[i].pos, b[i].pos);
    EXPECT_EQ(a[i].goal, b[i].goal);
  }
}

TEST(Spawn, DistinctCellsInsideOneComponent) {
  for (int s = 0; s < 1000; ++s) {
    GridMap m = generate_map(8, 8, Triangular{0, 0.33, 0.5}, s);
    int cap = static_cast<int>(m.spawn_region().size()) / 2;
    int n = 1 + s % std::max(1, std::min(cap, 10));
    auto agents = spawn(m, n, s * 7 + 1);
    std::set<Cell> cells;
    for (const auto& a : agents) {
      cells.insert(a.pos);
      cells.insert(a.goal);
    }
    ASSERT_EQ(static_cast<int>(cells.size()), 2 * n);
    auto d = oracle::bfs(m, agents[0].pos);
    for (Cell c : cells) ASSERT_LT(d[m.index(c)], oracle::kInf);
  }
}

TEST(Spawn, TooSmallRegionThrows) {
  GridMap m = map_from_rows({"..@", "@@@"});
  EXPECT_THROW(spawn(m, 2, 1), InfeasibleSpawn);
}

TEST(Step, MoveOntoFreeCell) {
  GridWorld w(empty_map(5, 5), agents_at({{{1, 1}, {4, 4}}}));
  auto out = w.step({R});
  EXPECT_EQ(out.positions[0], (Cell{2, 1}));
  EXPECT_DOUBLE_EQ(out.extrinsic[0], -0.3);
  EXPECT_FALSE(out.collision[0]);
}

TEST(Step, VertexCollisionRevertsBoth) {
  GridWorld w(empty_map(5, 5), agents_at({{{0, 1}, {4, 4}}, {{2, 1}, {4, 0}}}));
  auto out = w.step({R, L});
  EXPECT_EQ(out.positions[0], (Cell{0, 1}));
  EXPECT_EQ(out.positions[1], (Cell{2, 1}));
  EXPECT_DOUBLE_EQ(out.extrinsic[0], -2.0);
  EXPECT_DOUBLE_EQ(out.extrinsic[1], -2.0);
}

TEST(Step, SwapRevertsBoth) {
  GridWorld w(empty_map(5, 5), agents_at({{{1, 1}, {4, 4}}, {{2, 1}, {0, 0}}}));
  auto out = w.step({R, L});
  EXPECT_EQ(out.positions[0], (Cell{1, 1}));
  EXPECT_EQ(out.positions[1], (Cell{2, 1}));
  EXPECT_TRUE(out.collision[0] && out.collision[1]);
}

TEST(Step, StayOnGoalIsFree) {
  GridWorld w(empty_map(5, 5), agents_at({{{2, 2}, {2, 2}}, {{0, 0}, {4, 4}}}));
  auto out = w.step({S, S});
  EXPECT_DOUBLE_EQ(out.extrinsic[0], 0.0);
  EXPECT_DOUBLE_EQ(out.extrinsic[1], -0.3);
}

TEST(Step, WallAndBoundaryBumpsAreCollisions) {
  GridWorld w(map_from_rows({".@.", "...", "..."}), agents_at({{{0, 0}, {2, 2}}}));
  auto out = w.step({R});
  EXPECT_EQ(out.positions[0], (Cell{0, 0}));
  EXPECT_DOUBLE_EQ(out.extrinsic[0], -2.0);
  out = w.step({U});
  EXPECT_EQ(out.positions[0], (Cell{0, 0}));
  EXPECT_TRUE(out.collision[0]);
}

TEST(Step, FollowingIntoVacatedCellIsAllowed) {
  GridWorld w(empty_map(5, 1), agents_at({{{0, 0}, {4, 0}}, {{1, 0}, {3, 0}}}));
  auto out = w.step({R, R});
  EXPECT_EQ(out.positions[0], (Cell{1, 0}));
  EXPECT_EQ(out.positions[1], (Cell{2, 0}));
  EXPECT_FALSE(out.collision[0] || out.collision[1]);
}

TEST(Step, ChainRevertsReachFixedPoint) {
  // The head bumps into the wall; everyone queued behind it must revert too.
  GridWorld w(map_from_rows({"...@"}), agents_at({{{0, 0}, {1, 0}}, {{1, 0}, {2, 0}}, {{2, 0}, {0, 0}}}));
  auto out = w.step({R, R, R});
  EXPECT_EQ(out.positions, (std::vector<Cell>{{0, 0}, {1, 0}, {2, 0}}));
  EXPECT_TRUE(out.collision[0] && out.collision[1] && out.collision[2]);
}

TEST(Step, WrongActionCountThrows) {
  GridWorld w(empty_map(3, 3), agents_at({{{0, 0}, {2, 2}}}));
  EXPECT_THROW(w.step({R, R}), ShapeError);
}

TEST(Step, EpisodeEndsAtGoalsAndAtStepLimit) {
  GridWorld w(empty_map(3, 1), agents_at({{{0, 0}, {1, 0}}}));
  EXPECT_TRUE(w.step({R}).episode_done);

  EnvConfig cfg;
  cfg.max_steps = 4;
  GridWorld v(empty_map(3, 1), agents_at({{{0, 0}, {2, 0}}}), cfg);
  for (int t = 0; t < 3; ++t) EXPECT_FALSE(v.step({S}).episode_done);
  auto last = v.step({S});
  EXPECT_TRUE(last.episode_done);
  EXPECT_EQ(last.step_index, 4);
  EXPECT_THROW(v.step({S}), std::logic_error);
}

TEST(Step, RandomPolicyIsSoundAndRewardsMatchRecomputation) {
  std::mt19937_64 rng(11);
  int steps = 0;
  for (int episode = 0; steps < 4000; ++episode) {
    GridMap m = generate_map(8 + episode % 5, 8, Triangular{0, 0.33, 0.5}, episode);
    int n = std::min<int>(6, static_cast<int>(m.spawn_region().size()) / 2);
    EnvConfig cfg;
    cfg.max_steps = 64;
    GridWorld w(m, spawn(m, n, episode + 100), cfg);
    std::vector<Cell> goals;
    for (const auto& a : w.state().agents) goals.push_back(a.goal);
    while (!w.terminal()) {
      auto before = w.state().positions();
      JointAction act(n);
      for (auto& a : act) a = std::uniform_int_distribution<int>(0, 4)(rng);
      auto out = w.step(act);
      ++steps;
      ASSERT_EQ(oracle::transition_violation(m, before, out.positions), "");
      auto expect = oracle::recompute_step(m, before, goals, act, out.positions, cfg);
      ASSERT_EQ(expect.collision, out.collision);
      ASSERT_EQ(expect.blocking, out.blocking);
      for (int i = 0; i < n; ++i) ASSERT_EQ(expect.rewards[i], out.extrinsic[i]);
    }
  }
}

TEST(Step, ReplayIsBitIdentical) {
  GridMap m = generate_map(10, 10, Triangular{0, 0.33, 0.5}, 3);
  auto agents = spawn(m, 5, 4);
  std::mt19937_64 rng(5);
  std::vector<JointAction> log;
  for (int t = 0; t < 40; ++t) {
    JointAction a(5);
    for (auto& x : a) x = std::uniform_int_distribution<int>(0, 4)(rng);
    log.push_back(a);
  }
  auto run = [&] {
    GridWorld w(m, agents);
    std::vector<StepOutcome> outs;
    for (const auto& a : log) {
      if (w.terminal()) break;
      outs.push_back(w.step(a));
    }
    return outs;
  };
  auto a = run();
  auto b = run();
  ASSERT_EQ(a.size(), b.size());
  for (size_t t = 0; t < a.size(); ++t) {
    EXPECT_EQ(a[t].positions, b[t].positions);
    EXPECT_EQ(a[t].extrinsic, b[t].extrinsic);
    EXPECT_EQ(a[t].intrinsic, b[t].intrinsic);
    EXPECT_EQ(a[t].collision, b[t].collision);
    EXPECT_EQ(a[t].blocking, b[t].blocking);
  }
}

TEST(Observe, HeuristicChannelPointsAtGoal) {
  WorldState s;
  s.map = empty_map(5, 5);
  s.agents = agents_at({{{1, 2}, {2, 2}}});
  EnvConfig cfg;
  auto o = observe(s, cfg, 0);
  EXPECT_EQ(o.at(R, 1, 1), 1.0);
  EXPECT_EQ(o.at(L, 1, 1), 0.0);
  EXPECT_EQ(o.at(U, 1, 1), 0.0);
  EXPECT_EQ(o.at(D, 1, 1), 0.0);
}

TEST(Observe, AtGoalCenterHasNoHeuristicBits) {
  WorldState s;
  s.map = empty_map(5, 5);
  s.agents = agents_at({{{2, 2}, {2, 2}}});
  auto o = observe(s, EnvConfig{}, 0);
  for (int c = 0; c < 4; ++c) EXPECT_EQ(o.at(c, 1, 1), 0.0);
}

TEST(Observe, HeuristicBitsMatchBfsOracle) {
  EnvConfig cfg;
  cfg.fov = 5;
  for (int s = 0; s < 100; ++s) {
    GridMap m = generate_map(10, 10, Triangular{0, 0.33, 0.5}, 500 + s);
    WorldState st;
    st.map = m;
    st.agents = spawn(m, 3, s);
    for (int id = 0; id < 3; ++id) {
      const auto& self = st.agents[id];
      auto dist = oracle::bfs(m, self.goal);
      auto o = observe(st, cfg, id);
      for (int row = 0; row < 5; ++row) {
        for (int col = 0; col < 5; ++col) {
          Cell c{self.pos.x + col - 2, self.pos.y + row - 2};
          bool blocked = c.x < 0 || c.y < 0 || c.x >= 10 || c.y >= 10 || m.is_obstacle(c);
          ASSERT_EQ(o.at(4, row, col), blocked ? 1.0 : 0.0);
          for (int a = 0; a < 4; ++a) {
            Cell n = apply_action(c, a);
            bool n_free = n.x >= 0 && n.y >= 0 && n.x < 10 && n.y < 10 && !m.is_obstacle(n);
            bool expect = !blocked && n_free && dist[m.index(n)] < dist[m.index(c)];
            ASSERT_EQ(o.at(a, row, col), expect ? 1.0 : 0.0) << "seed " << s << " agent " << id;
          }
        }
      }
    }
  }
}

TEST(Observe, GoalsProjectOntoBorderAndPeersAppear) {
  WorldState s;
  s.map = empty_map(9, 9);
  s.agents = agents_at({{{4, 4}, {8, 0}}, {{5, 5}, {0, 8}}, {{0, 0}, {1, 1}}});
  auto o = observe(s, EnvConfig{}, 0);
  EXPECT_EQ(o.at(6, 0, 2), 1.0);  // own goal far up-right
  EXPECT_EQ(o.at(5, 2, 2), 1.0);  // peer 1 at (+1,+1)
  EXPECT_EQ(o.at(7, 2, 0), 1.0);  // peer 1's goal far down-left
  double peers = 0;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) peers += o.at(5, r, c);
  }
  EXPECT_EQ(peers, 1.0);  // peer 2 is out of view
  const double diag = std::hypot(9.0, 9.0);
  EXPECT_DOUBLE_EQ(o.vec[0], 4.0 / diag);
  EXPECT_DOUBLE_EQ(o.vec[1], -4.0 / diag);
  EXPECT_DOUBLE_EQ(o.vec[2], std::hypot(4.0, 4.0) / diag);
  EXPECT_DOUBLE_EQ(o.vec[6], 1.0);  // initial last action is Stay
}

TEST(Intrinsic, EmptyBufferGivesZero) {
  WorldState s;
  s.map = empty_map(5, 5);
  s.agents = agents_at({{{1, 1}, {4, 4}}});
  EXPECT_EQ(intrinsic_reward(s, EnvConfig{}, 0), 0.0);
}

TEST(Intrinsic, RevisitGivesZero) {
  WorldState s;
  s.map = empty_map(5, 5);
  s.agents = agents_at({{{1, 1}, {4, 4}}});
  s.agents[0].memory = {{0, 0}, {1, 1}};
  EXPECT_EQ(intrinsic_reward(s, EnvConfig{}, 0), 0.0);
}

TEST(Intrinsic, ScaledEuclideanDistance) {
  WorldState s;
  s.map = empty_map(8, 8);
  s.agents = agents_at({{{3, 4}, {7, 7}}});
  s.agents[0].memory = {{0, 0}};
  EnvConfig cfg;
  cfg.fov = 11;
  EXPECT_NEAR(intrinsic_reward(s, cfg, 0), 0.5, 1e-12);
  cfg.fov = 3;
  EXPECT_NEAR(intrinsic_reward(s, cfg, 0), 0.3, 1e-12);  // clipped at eta * F
  s.agents[0].goal = s.agents[0].pos;
  EXPECT_EQ(intrinsic_reward(s, cfg, 0), 0.0);
}

TEST(Intrinsic, MemoryIsBoundedFifo) {
  EnvConfig cfg;
  cfg.memory_length = 3;
  GridWorld w(empty_map(8, 1), agents_at({{{0, 0}, {7, 0}}}), cfg);
  for (int t = 0; t < 5; ++t) w.step({R});
  const auto& mem = w.state().agents[0].memory;
  ASSERT_EQ(mem.size(), 3u);
  EXPECT_EQ(mem.front(), (Cell{2, 0}));
  EXPECT_EQ(mem.back(), (Cell{4, 0}));
}

TEST(Manhattan, ArithmeticAndSymmetry) {
  auto d = manhattan_matrix(std::vector<Cell>{{1, 2}, {4, 6}});
  EXPECT_EQ(d[0][1], 7);
  EXPECT_EQ(d[0][0], 0);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> coord(0, 30);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Cell> p(6);
    for (auto& c : p) c = {coord(rng), coord(rng)};
    auto m = manhattan_matrix(p);
    for (int i = 0; i < 6; ++i) {
      EXPECT_EQ(m[i][i], 0);
      for (int j = 0; j < 6; ++j) ASSERT_EQ(m[i][j], m[j][i]);
    }
  }
}

TEST(Blocking, SingleAgentNeverBlocks) {
  WorldState s;
  s.map = empty_map(4, 4);
  s.agents = agents_at({{{0, 0}, {3, 3}}});
  EXPECT_EQ(blocking_flags(s, EnvConfig{}), (std::vector<std::uint8_t>{0}));
}

TEST(Blocking, ParkedInCorridor) {
  // j at the left end, its goal at the right end, i parked in between.
  WorldState s;
  s.map = map_from_rows({"@@@@@@@", ".......", "@@@@@@@"});
  s.agents = agents_at({{{3, 1}, {3, 1}}, {{2, 1}, {6, 1}}});
  auto flags = blocking_flags(s, EnvConfig{});
  EXPECT_EQ(flags[0], 1);
  EXPECT_EQ(flags[1], 0);
}

TEST(Blocking, FarApartOnOpenMap) {
  WorldState s;
  s.map = empty_map(10, 10);
  s.agents = agents_at({{{0, 0}, {0, 3}}, {{9, 9}, {9, 6}}});
  EXPECT_EQ(blocking_flags(s, EnvConfig{}), (std::vector<std::uint8_t>{0, 0}));
}
