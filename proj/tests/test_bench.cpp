#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <random>

#include "mapf/bench.hpp"

using namespace mapf;
using namespace mapf::bench;
namespace fs = std::filesystem;

namespace {

std::vector<EpisodeResult> outcomes(int wins, int total) {
  std::vector<EpisodeResult> v(total);
  for (int i = 0; i < wins; ++i) v[i].success = true;
  return v;
}

policy::ModelConfig tiny_model(comm::CommMode mode) {
  policy::ModelConfig mc;
  mc.policy.spatial_hidden = 16;
  mc.policy.vec_hidden = 8;
  mc.policy.hidden = 16;
  mc.policy.torso = 16;
  mc.comm.dim = 8;
  mc.comm.heads = 2;
  mc.mode = mode;
  return mc;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("mapf_bench_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(SuccessRate, Arithmetic) {
  EXPECT_DOUBLE_EQ(success_rate(outcomes(75, 100)), 75.0);
  EXPECT_DOUBLE_EQ(success_rate(outcomes(0, 100)), 0.0);
  EXPECT_THROW(success_rate({}), std::invalid_argument);
}

TEST(Bootstrap, IntervalShrinksWithMoreEpisodes) {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution coin(0.6);
  auto width = [&](int n) {
    std::vector<double> v(n);
    for (auto& x : v) x = coin(rng) ? 100.0 : 0.0;
    Interval iv = bootstrap_ci(v, 1000, 77);
    EXPECT_LE(iv.lo, iv.mean);
    EXPECT_GE(iv.hi, iv.mean);
    return iv.hi - iv.lo;
  };
  double w100 = width(100);
  double w400 = width(400);
  EXPECT_LT(w400, w100);
  // Roughly 1/sqrt(n) scaling: a factor of about 2 between the two.
  EXPECT_GT(w100 / w400, 1.5);
  EXPECT_LT(w100 / w400, 2.7);
}

TEST(Bootstrap, EmptyIsNaNAndSameSeedSameInterval) {
  EXPECT_TRUE(std::isnan(bootstrap_ci({}, 100, 1).mean));
  std::vector<double> v = {1, 2, 3, 4, 10};
  Interval a = bootstrap_ci(v, 500, 9), b = bootstrap_ci(v, 500, 9);
  EXPECT_EQ(a.lo, b.lo);
  EXPECT_EQ(a.hi, b.hi);
  EXPECT_DOUBLE_EQ(a.mean, 4.0);
}

TEST(ScoreEpisode, ArrivalTimesAndCollisions) {
  std::vector<AgentState> spawn(2);
  spawn[0].pos = {0, 0};
  spawn[0].goal = {1, 0};
  spawn[1].pos = {3, 0};
  spawn[1].goal = {3, 0};
  EpisodeResult r;
  // Agent 1 wanders off its goal at t=1 and returns at t=3.
  r.trace.push_back({1, {{1, 0}, {3, 1}}, {3, 1}, {0, 0}});
  r.trace.push_back({2, {{1, 0}, {3, 1}}, {4, 4}, {0, 0}});
  r.trace.push_back({3, {{1, 0}, {3, 0}}, {4, 0}, {0, 0}});
  score_episode(spawn, r);
  EXPECT_TRUE(r.success);
  EXPECT_EQ(r.makespan, 3);
  EXPECT_EQ(r.soc, 1 + 3);
  EXPECT_EQ(r.max_at_goal, 2);
  r.trace[1].collision = {1, 0};
  score_episode(spawn, r);
  EXPECT_FALSE(r.success);
  EXPECT_DOUBLE_EQ(r.co, 1.0 / 6.0);
}

TEST(Instances, DeterministicAndDistinctPerSeed) {
  for (const char* family : {"random", "warehouse", "city"}) {
    Instance a = make_instance(family, 16, 0.2, 6, 11);
    Instance b = make_instance(family, 16, 0.2, 6, 11);
    Instance c = make_instance(family, 16, 0.2, 6, 12);
    EXPECT_EQ(a.hash(), b.hash()) << family;
    EXPECT_NE(a.hash(), c.hash()) << family;
    EXPECT_EQ(a.hash().size(), 16u);
  }
  EXPECT_THROW(make_instance("maze", 10, 0.1, 2, 1), std::invalid_argument);
}

TEST(Instances, CorridorLayout) {
  Instance c = corridor_instance();
  EXPECT_EQ(map_to_string(c.map), "type octile\nheight 3\nwidth 5\nmap\n@@.@@\n.....\n@@@@@\n");
  EXPECT_EQ(c.spawn[0].pos, (Cell{0, 1}));
  EXPECT_EQ(c.spawn[0].goal, (Cell{4, 1}));
  EXPECT_EQ(c.spawn[1].pos, (Cell{4, 1}));
  EXPECT_EQ(c.spawn[1].goal, (Cell{0, 1}));
}

TEST(Solvers, ParseSpecs) {
  EXPECT_EQ(parse_solver("cbs").name, "cbs");
  EXPECT_EQ(parse_solver("ca_star").name, "ca_star");
  SolverSpec p = parse_solver("rmha=runs/model.ckpt");
  EXPECT_EQ(p.name, "rmha");
  EXPECT_EQ(p.checkpoint, "runs/model.ckpt");
  EXPECT_THROW(parse_solver("dijkstra"), std::invalid_argument);
  EXPECT_EQ(setting_id("random", 20, 0.15, 8), "random_20x20_d015_n8");
}

TEST(Campaign, CbsSolvesSmallSettingsWithoutCollisions) {
  Campaign c;
  c.sizes = {5};
  c.densities = {0.0, 0.1};
  c.agent_counts = {2};
  c.episodes = 20;
  c.seed = 4;
  c.threads = 1;
  c.bootstrap_resamples = 200;
  c.solvers = {parse_solver("cbs")};
  auto res = run_campaign(c);
  ASSERT_EQ(res.rows.size(), 2u);
  for (const auto& row : res.rows) {
    EXPECT_DOUBLE_EQ(row.sr.mean, 100.0) << row.setting;
    EXPECT_EQ(row.co.mean, 0.0);
    EXPECT_EQ(row.co.hi, 0.0);
  }
  for (const auto& e : res.episodes) EXPECT_EQ(e.co, 0.0);
}

TEST(Campaign, EverySolverSeesTheSameInstances) {
  fs::path dir = scratch("hashes");
  policy::Model none(tiny_model(comm::CommMode::kNone), 1);
  policy::Model rmha(tiny_model(comm::CommMode::kRmha), 1);
  none.save((dir / "none.ckpt").string());
  rmha.save((dir / "rmha.ckpt").string());
  Campaign c;
  c.sizes = {6};
  c.densities = {0.1};
  c.agent_counts = {3};
  c.episodes = 6;
  c.seed = 8;
  c.threads = 2;
  c.env.max_steps = 32;
  c.solvers = {parse_solver("cbs"), parse_solver("ca_star"),
               parse_solver("none=" + (dir / "none.ckpt").string()),
               parse_solver("rmha=" + (dir / "rmha.ckpt").string())};
  auto res = run_campaign(c);
  ASSERT_EQ(res.rows.size(), 4u);
  for (const auto& row : res.rows) EXPECT_EQ(row.instances_hash, res.rows[0].instances_hash);
  std::map<int, std::string> by_episode;
  for (const auto& e : res.episodes) {
    auto [it, fresh] = by_episode.emplace(e.episode, e.instance_hash);
    if (!fresh) EXPECT_EQ(it->second, e.instance_hash);
  }
  fs::remove_all(dir);
}

TEST(Campaign, ThreadCountDoesNotChangeResults) {
  Campaign c;
  c.sizes = {6};
  c.densities = {0.2};
  c.agent_counts = {3};
  c.episodes = 8;
  c.seed = 3;
  c.solvers = {parse_solver("ca_star"), parse_solver("cbs")};
  c.threads = 1;
  auto a = run_campaign(c);
  c.threads = 3;
  auto b = run_campaign(c);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(metrics_csv_row(a.rows[i]), metrics_csv_row(b.rows[i]));
  }
}

TEST(Replay, TracesReproduceMetricTables) {
  std::mt19937_64 rng(12);
  for (int k = 0; k < 50; ++k) {
    fs::path dir = scratch("replay");
    Campaign c;
    c.sizes = {std::uniform_int_distribution<int>(5, 8)(rng)};
    c.densities = {std::uniform_int_distribution<int>(0, 3)(rng) * 0.1};
    c.agent_counts = {std::uniform_int_distribution<int>(1, 4)(rng)};
    c.episodes = std::uniform_int_distribution<int>(2, 6)(rng);
    c.seed = rng();
    c.threads = 1;
    c.bootstrap_resamples = 100;
    c.env.max_steps = 40;
    c.solvers = {parse_solver("cbs"), parse_solver("ca_star")};
    auto res = run_campaign(c);
    write_campaign(c, res, dir.string());
    auto rep = replay_traces((dir / "traces").string(), c.bootstrap_resamples, c.seed);
    EXPECT_TRUE(rep.mismatches.empty());
    std::map<std::string, std::string> want, got;
    for (const auto& r : res.rows) want[r.setting + "/" + r.solver] = metrics_csv_row(r);
    for (const auto& r : rep.rows) got[r.setting + "/" + r.solver] = metrics_csv_row(r);
    ASSERT_EQ(want, got) << "campaign " << k;
    fs::remove_all(dir);
  }
}

TEST(Replay, TamperedTraceIsReported) {
  fs::path dir = scratch("tamper");
  Campaign c;
  c.sizes = {6};
  c.densities = {0.0};
  c.agent_counts = {2};
  c.episodes = 2;
  c.threads = 1;
  c.solvers = {parse_solver("cbs")};
  auto res = run_campaign(c);
  write_campaign(c, res, dir.string());
  fs::path trace;
  for (const auto& f : fs::directory_iterator(dir / "traces")) trace = f.path();
  std::string text = read_text_file(trace.string());
  // Flip a recorded collision flag.
  auto pos = text.find("\"collision\":[0");
  ASSERT_NE(pos, std::string::npos);
  text[pos + 13] = '1';
  write_text_file(trace.string(), text);
  auto rep = replay_traces((dir / "traces").string(), 100, c.seed);
  EXPECT_FALSE(rep.mismatches.empty());
  fs::remove_all(dir);
}
