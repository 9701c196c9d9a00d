#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>

#include "mapf/grid_map.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  std::string cmd = std::string(BENCH_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("mapf_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) { return mapf::read_text_file(p.string()); }

}  // namespace

TEST(Cli, GenerateIsByteIdentical) {
  fs::path a = scratch("gen_a"), b = scratch("gen_b");
  const std::string args = "generate --size 10 --density 0.3 --agents 8 --seed 42 --out ";
  ASSERT_EQ(run(args + a.string()), 0);
  ASSERT_EQ(run(args + b.string()), 0);
  for (const char* f : {"instance.map", "instance.scen", "instance.json"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, SolveIsByteIdenticalAndCollisionFree) {
  fs::path g = scratch("solve_gen");
  ASSERT_EQ(run("generate --size 10 --density 0.2 --agents 6 --seed 7 --out " + g.string()), 0);
  std::string in = " --map " + (g / "instance.map").string() + " --scen " + (g / "instance.scen").string();
  for (const char* solver : {"cbs", "ca_star"}) {
    fs::path a = scratch(std::string("solve_a_") + solver), b = scratch(std::string("solve_b_") + solver);
    // solve replays its own plan and exits 3 on any collision
    ASSERT_EQ(run(std::string("solve --solver ") + solver + in + " --out " + a.string()), 0);
    ASSERT_EQ(run(std::string("solve --solver ") + solver + in + " --out " + b.string()), 0);
    EXPECT_EQ(slurp(a / "solution.json"), slurp(b / "solution.json"));
    fs::remove_all(a);
    fs::remove_all(b);
  }
  fs::remove_all(g);
}

TEST(Cli, GradcheckPasses) { EXPECT_EQ(run("gradcheck --max-entries 6"), 0); }

TEST(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(run("generate --agents -3"), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("eval --solver dijkstra"), 1);
}

TEST(Cli, UnknownConfigKeyIsRejected) {
  fs::path d = scratch("badcfg");
  mapf::write_text_file((d / "bad.cfg").string(), "agnets = 4\n");
  EXPECT_EQ(run("generate --config " + (d / "bad.cfg").string() + " --out " + d.string()), 1);
  fs::remove_all(d);
}

TEST(Cli, EvalTablesReplayFromTraces) {
  fs::path d = scratch("eval");
  mapf::write_text_file((d / "small.cfg").string(),
                        "eval_sizes = 6\neval_densities = 0.1\neval_agents = 2, 3\n"
                        "eval_episodes = 5\nbootstrap_resamples = 200\nmax_steps = 48\n");
  const std::string base = "eval --config " + (d / "small.cfg").string() + " --seed 5 --threads 1";
  ASSERT_EQ(run(base + " --solver cbs --solver ca_star --out " + (d / "run").string()), 0);
  EXPECT_TRUE(fs::exists(d / "run" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(d / "run" / "deltas.csv"));
  ASSERT_EQ(run("eval --from-traces " + (d / "run").string() + " --out " + (d / "run").string()), 0);
  auto lines = [](const std::string& text) {
    std::multiset<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.insert(l);
    return out;
  };
  EXPECT_EQ(lines(slurp(d / "run" / "metrics.csv")), lines(slurp(d / "run" / "metrics_replay.csv")));
  fs::remove_all(d);
}

TEST(Cli, PlotCorridor) {
  fs::path d = scratch("plot");
  ASSERT_EQ(run("plot --corridor --out " + d.string()), 0);
  EXPECT_TRUE(fs::exists(d / "trajectories.svg"));
  EXPECT_NE(slurp(d / "storyboard.txt").find("(yields)"), std::string::npos);
  fs::remove_all(d);
}
