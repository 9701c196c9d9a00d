// bench_cli: instance generation, training, evaluation campaigns, baseline
// planners, gradient checks and trajectory plots.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 gradcheck or
// replay-consistency failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mapf/baselines.hpp"
#include "mapf/bench.hpp"
#include "mapf/gradcheck.hpp"
#include "mapf/mappo.hpp"
#include "mapf/plot.hpp"
#include "mapf/settings.hpp"

namespace fs = std::filesystem;
using namespace mapf;

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;
constexpr int kCheckFailed = 3;

struct Common {
  std::uint64_t seed = 0;
  std::string config;
  std::string out = ".";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Base random seed");
  cmd->add_option("--config", c.config, "Key-value config file")->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "Output directory");
}

Settings load_settings(const Common& c) {
  return c.config.empty() ? Settings::defaults() : Settings::from_file(c.config);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

// ---- generate ----

struct GenerateArgs {
  Common common;
  std::string family = "random";
  int size = 10;
  int width = 0;
  int height = 0;
  double density = 0.0;
  int agents = 8;
};

int cmd_generate(const GenerateArgs& a) {
  load_settings(a.common);  // only validates; generation is driven by flags
  fs::create_directories(a.common.out);
  bench::Instance inst;
  if (a.width > 0 || a.height > 0) {
    const int w = a.width > 0 ? a.width : a.size;
    const int h = a.height > 0 ? a.height : a.size;
    if (a.family != "random") throw std::invalid_argument("--width/--height need --family random");
    inst.family = a.family;
    inst.size = std::max(w, h);
    inst.density = a.density;
    inst.agents = a.agents;
    inst.seed = a.common.seed;
    inst.map = generate_map(w, h, Triangular{a.density, a.density, a.density},
                            derive_seed(a.common.seed, {1}), 2 * a.agents);
    inst.spawn = spawn(inst.map, a.agents, derive_seed(a.common.seed, {2}));
  } else {
    inst = bench::make_instance(a.family, a.size, a.density, a.agents, a.common.seed);
  }
  std::vector<ScenarioEntry> entries;
  for (const auto& s : inst.spawn) entries.push_back({s.id, s.pos, s.goal});
  const fs::path out(a.common.out);
  write_text(out / "instance.map", map_to_string(inst.map));
  write_text(out / "instance.scen", scenario_to_string(entries));
  nlohmann::json meta;
  meta["family"] = inst.family;
  meta["width"] = inst.map.width();
  meta["height"] = inst.map.height();
  meta["density_requested"] = a.density;
  meta["obstacle_fraction"] = inst.map.obstacle_fraction();
  meta["agents"] = a.agents;
  meta["seed"] = a.common.seed;
  meta["instance_hash"] = inst.hash();
  write_text(out / "instance.json", meta.dump(2) + "\n");
  std::printf("wrote %s/instance.{map,scen,json} (hash %s)\n", a.common.out.c_str(),
              inst.hash().c_str());
  return 0;
}

// ---- train ----

struct TrainArgs {
  Common common;
  long long steps = 0;
  std::string mode;
};

int cmd_train(const TrainArgs& a) {
  Settings s = load_settings(a.common);
  if (a.steps > 0) s.train.total_env_steps = a.steps;
  if (!a.mode.empty()) s.model.mode = comm::parse_mode(a.mode);
  fs::create_directories(a.common.out);
  const fs::path out(a.common.out);
  mappo::TrainOutputs outputs;
  outputs.log_path = (out / "train_log.csv").string();
  outputs.checkpoint_path = (out / "model.ckpt").string();
  write_text(out / "model_config.txt", s.model.to_text());
  try {
    auto history = mappo::train(s.train, s.sampler, s.model, a.common.seed, outputs);
    const auto& last = history.back();
    std::printf("trained %lld env steps in %d rounds; recent SR %.2f%%; checkpoint %s\n",
                last.env_steps, last.round, last.recent_sr, outputs.checkpoint_path.c_str());
  } catch (const mappo::TrainingAborted& err) {
    std::fprintf(stderr, "training aborted: %s\n", err.what());
    return kRuntime;
  }
  return 0;
}

// ---- eval ----

struct EvalArgs {
  Common common;
  std::vector<std::string> solvers;
  int episodes = 0;
  int threads = -1;
  std::string from_traces;
  bool greedy = false;
};

int compare_with_harness(const std::vector<bench::MetricsRow>& replay, const fs::path& harness_csv) {
  if (!fs::exists(harness_csv)) {
    std::printf("no %s next to the traces; nothing to compare\n", harness_csv.string().c_str());
    return 0;
  }
  std::map<std::string, std::string> expected;
  std::istringstream in(read_text(harness_csv.string()));
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cols = split(line, ',');
    expected[cols.at(0) + "/" + cols.at(5)] = line;
  }
  int mismatches = 0;
  for (const auto& row : replay) {
    const std::string key = row.setting + "/" + row.solver;
    auto it = expected.find(key);
    const std::string mine = bench::metrics_csv_row(row);
    if (it == expected.end() || it->second != mine) {
      ++mismatches;
      std::printf("MISMATCH %s\n  harness: %s\n  replay:  %s\n", key.c_str(),
                  it == expected.end() ? "(missing)" : it->second.c_str(), mine.c_str());
    }
  }
  if (replay.size() != expected.size()) ++mismatches;
  std::printf("replay vs harness: %zu rows, %d mismatches\n", replay.size(), mismatches);
  return mismatches == 0 ? 0 : kCheckFailed;
}

int cmd_eval(const EvalArgs& a) {
  Settings s = load_settings(a.common);
  bench::Campaign c = s.campaign;
  c.seed = a.common.seed;
  if (a.episodes > 0) c.episodes = a.episodes;
  if (a.threads >= 0) c.threads = a.threads;
  if (a.greedy) c.policy.greedy = true;
  const fs::path out(a.common.out);
  fs::create_directories(out);

  if (!a.from_traces.empty()) {
    fs::path traces(a.from_traces);
    fs::path campaign_dir = traces.filename() == "traces" ? traces.parent_path() : traces;
    if (fs::exists(campaign_dir / "campaign.json")) {
      auto meta = nlohmann::json::parse(read_text((campaign_dir / "campaign.json").string()));
      c.seed = meta.at("seed").get<std::uint64_t>();
      c.bootstrap_resamples = meta.at("bootstrap_resamples").get<int>();
    }
    if (fs::exists(traces / "traces")) traces /= "traces";
    bench::ReplayReport rep = bench::replay_traces(traces.string(), c.bootstrap_resamples, c.seed);
    std::string csv = bench::metrics_csv_header() + "\n";
    for (const auto& r : rep.rows) csv += bench::metrics_csv_row(r) + "\n";
    write_text(out / "metrics_replay.csv", csv);
    for (const auto& m : rep.mismatches) std::printf("simulator disagreement: %s\n", m.c_str());
    int rc = compare_with_harness(rep.rows, campaign_dir / "metrics.csv");
    if (!rep.mismatches.empty()) rc = kCheckFailed;
    return rc;
  }

  if (a.solvers.empty()) throw CLI::ValidationError("--solver", "give at least one solver");
  for (const auto& text : a.solvers) c.solvers.push_back(bench::parse_solver(text));
  bench::CampaignResult result = bench::run_campaign(c);
  bench::write_campaign(c, result, out.string());
  nlohmann::json meta;
  meta["seed"] = c.seed;
  meta["bootstrap_resamples"] = c.bootstrap_resamples;
  meta["episodes"] = c.episodes;
  meta["family"] = c.family;
  write_text(out / "campaign.json", meta.dump(2) + "\n");
  std::printf("%s\n", bench::metrics_csv_header().c_str());
  for (const auto& r : result.rows) std::printf("%s\n", bench::metrics_csv_row(r).c_str());
  return 0;
}

// ---- solve ----

struct SolveArgs {
  Common common;
  std::string map;
  std::string scen;
  std::string solver = "cbs";
  double timeout = -1.0;
  long long max_nodes = -1;
  bool wall_time = false;
};

int cmd_solve(const SolveArgs& a) {
  Settings s = load_settings(a.common);
  GridMap map = load_map_file(a.map);
  auto entries = load_scenario_file(a.scen);
  std::vector<baselines::AgentTask> tasks;
  for (const auto& e : entries) tasks.push_back({e.start, e.goal});
  baselines::CbsOptions opt = s.campaign.cbs;
  if (a.timeout > 0) opt.timeout_seconds = a.timeout;
  if (a.max_nodes > 0) opt.max_nodes = a.max_nodes;
  baselines::Solution sol;
  if (a.solver == "cbs") {
    sol = baselines::cbs(map, tasks, opt);
  } else if (a.solver == "ca_star") {
    sol = baselines::cooperative_astar(map, tasks);
  } else {
    throw CLI::ValidationError("--solver", "expected cbs or ca_star");
  }
  fs::create_directories(a.common.out);
  write_text(fs::path(a.common.out) / "solution.json",
             baselines::solution_to_json(sol, a.wall_time));
  if (!sol.success) {
    std::fprintf(stderr, "%s found no solution: %s\n", a.solver.c_str(), sol.note.c_str());
    return kRuntime;
  }
  // Replay through the simulator as a collision check.
  bench::Instance inst;
  inst.map = map;
  for (size_t i = 0; i < entries.size(); ++i) {
    AgentState st;
    st.id = static_cast<int>(i);
    st.pos = entries[i].start;
    st.goal = entries[i].goal;
    inst.spawn.push_back(st);
  }
  EnvConfig env = s.env;
  env.max_steps = std::max(env.max_steps, sol.makespan + 1);
  bench::EpisodeResult r = bench::run_planned(inst, sol, env);
  std::printf("%s: success=%d optimal=%d makespan=%d soc=%lld replay_collisions=%d%s%s\n",
              a.solver.c_str(), sol.success, sol.optimal, sol.makespan, sol.soc, r.collisions,
              sol.note.empty() ? "" : " note=", sol.note.c_str());
  return r.collisions == 0 && r.success ? 0 : kRuntime;
}

// ---- gradcheck ----

int cmd_gradcheck(const Common& c, int max_entries) {
  gradcheck::Options opt;
  opt.seed = c.seed == 0 ? 1 : c.seed;
  opt.max_entries = max_entries;
  auto reports = gradcheck::run_all(opt);
  std::string text = gradcheck::format_report(reports);
  std::fputs(text.c_str(), stdout);
  if (c.out != ".") {
    fs::create_directories(c.out);
    write_text(fs::path(c.out) / "gradcheck.txt", text);
  }
  bool ok = std::all_of(reports.begin(), reports.end(), [](const auto& r) { return r.pass; });
  return ok ? 0 : kCheckFailed;
}

// ---- plot ----

struct PlotArgs {
  Common common;
  std::string trace;
  int episode = 0;
  bool storyboard = false;
  bool corridor = false;
};

int cmd_plot(const PlotArgs& a) {
  plot::PlotFiles files;
  if (a.corridor) {
    files = plot::emit_episode_plot(plot::corridor_episode(), a.common.out, true);
  } else {
    if (a.trace.empty()) throw CLI::ValidationError("--trace", "give a trace file or --corridor");
    files = plot::emit_trace_plot(a.trace, a.episode, a.common.out, a.storyboard);
  }
  std::printf("wrote %s and %s", files.svg.c_str(), files.text.c_str());
  if (!files.storyboard.empty()) std::printf(" and %s", files.storyboard.c_str());
  std::printf("\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent path finding bench: generate, train, eval, solve, gradcheck, plot"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a seeded map and scenario");
  add_common(g, gen.common);
  g->add_option("--family", gen.family, "random, warehouse or city");
  g->add_option("--size", gen.size, "Square side length");
  g->add_option("--width", gen.width, "Width (random family only)");
  g->add_option("--height", gen.height, "Height (random family only)");
  g->add_option("--density", gen.density, "Obstacle fraction")->check(CLI::Range(0.0, 0.99));
  g->add_option("--agents", gen.agents, "Number of agents")->check(CLI::PositiveNumber);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a policy with MAPPO");
  add_common(t, tr.common);
  t->add_option("--steps", tr.steps, "Override total_env_steps");
  t->add_option("--mode", tr.mode, "Override comm_mode (rmha, graph_comm, none)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Run an evaluation campaign or replay its traces");
  add_common(e, ev.common);
  e->add_option("--solver", ev.solvers, "cbs, ca_star or label=checkpoint (repeatable)");
  e->add_option("--episodes", ev.episodes, "Override eval_episodes");
  e->add_option("--threads", ev.threads, "Worker threads (0 = all cores)");
  e->add_flag("--greedy", ev.greedy, "Greedy policy actions instead of sampling");
  e->add_option("--from-traces", ev.from_traces, "Recompute metrics from a trace directory")
      ->check(CLI::ExistingDirectory);

  SolveArgs so;
  auto* s = app.add_subcommand("solve", "Plan one instance with a baseline");
  add_common(s, so.common);
  s->add_option("--map", so.map, "Map file")->required()->check(CLI::ExistingFile);
  s->add_option("--scen", so.scen, "Scenario file")->required()->check(CLI::ExistingFile);
  s->add_option("--solver", so.solver, "cbs or ca_star");
  s->add_option("--timeout", so.timeout, "CBS wall-clock timeout in seconds");
  s->add_option("--max-nodes", so.max_nodes, "CBS high-level node budget");
  s->add_flag("--wall-time", so.wall_time, "Record wall time in the solution file");

  Common gc;
  int gc_entries = 0;
  auto* gcc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  add_common(gcc, gc);
  gcc->add_option("--max-entries", gc_entries, "Entries per tensor (0 = all)");

  PlotArgs pl;
  auto* p = app.add_subcommand("plot", "Render trajectories from a trace");
  add_common(p, pl.common);
  p->add_option("--trace", pl.trace, "JSON-lines trace file")->check(CLI::ExistingFile);
  p->add_option("--episode", pl.episode, "Episode index within the trace");
  p->add_flag("--storyboard", pl.storyboard, "Also write per-step frames");
  p->add_flag("--corridor", pl.corridor, "Plot the canned corridor scenario under CBS");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    int rc = app.exit(err);
    return rc == 0 ? 0 : kUsage;
  }
  try {
    if (g->parsed()) return cmd_generate(gen);
    if (t->parsed()) return cmd_train(tr);
    if (e->parsed()) return cmd_eval(ev);
    if (s->parsed()) return cmd_solve(so);
    if (gcc->parsed()) return cmd_gradcheck(gc, gc_entries);
    if (p->parsed()) return cmd_plot(pl);
  } catch (const CLI::ValidationError& err) {
    std::fprintf(stderr, "usage error: %s\n", err.what());
    return kUsage;
  } catch (const std::invalid_argument& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kUsage;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kRuntime;
  }
  return kUsage;
}
