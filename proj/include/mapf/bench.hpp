#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mapf/baselines.hpp"
#include "mapf/grid_world.hpp"
#include "mapf/policy_net.hpp"

namespace mapf::bench {

// One evaluation instance; every solver of a campaign sees the same ones.
struct Instance {
  std::string family = "random";  // random | warehouse | city
  int size = 10;
  double density = 0.0;
  int agents = 2;
  std::uint64_t seed = 0;
  GridMap map;
  std::vector<AgentState> spawn;

  std::vector<baselines::AgentTask> tasks() const;
  std::string hash() const;  // 16 hex digits over the map and the start/goal pairs
};

Instance make_instance(const std::string& family, int size, double density, int agents,
                       std::uint64_t seed);

// The 5 x 3 corridor with a single passing bay above its middle cell; agent A
// starts on the left end heading right, B the reverse.
Instance corridor_instance();

// Per-step record of an executed episode.
struct StepTrace {
  int t = 0;  // step index after the move
  std::vector<Cell> positions;
  JointAction actions;
  std::vector<std::uint8_t> collision;
};

struct EpisodeResult {
  std::string setting;
  std::string solver;
  int episode = 0;
  std::uint64_t seed = 0;
  std::string instance_hash;
  int agents = 0;
  int steps = 0;
  bool success = false;  // all agents at goals within the limit and zero collisions
  int max_at_goal = 0;   // MR
  int collisions = 0;
  double co = 0.0;       // collisions / (steps * agents)
  int makespan = 0;      // final-arrival based, meaningful when success
  long long soc = 0;
  std::string note;
  std::vector<StepTrace> trace;
};

// Derives MR, CO, success, makespan and SOC from the initial positions and
// the step records. Used by episode runners; trace replay has its own copy.
void score_episode(const std::vector<AgentState>& spawn, EpisodeResult& r);

// Plays a planner solution through the simulator; a failed plan keeps every
// agent in place for the whole episode.
EpisodeResult run_planned(const Instance& inst, const baselines::Solution& sol,
                          const EnvConfig& env);

struct PolicyOptions {
  bool greedy = false;
  bool resolve_conflicts = true;
};

// Decentralised rollout of a trained model, action sampling seeded by `seed`.
EpisodeResult run_policy(const Instance& inst, const policy::Model& model, const EnvConfig& env,
                         const PolicyOptions& options, std::uint64_t seed);

double success_rate(const std::vector<EpisodeResult>& episodes);

struct Interval {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  int n = 0;
};

// Percentile bootstrap of the mean; NaNs when `values` is empty.
Interval bootstrap_ci(const std::vector<double>& values, int resamples, std::uint64_t seed);

struct MetricsRow {
  std::string setting;
  std::string family;
  int size = 0;
  double density = 0.0;
  int agents = 0;
  std::string solver;
  int episodes = 0;
  std::string instances_hash;  // over the ordered instance hashes
  Interval sr;                 // percent
  Interval mr;
  Interval co;
  Interval makespan;  // over successful episodes
  Interval soc;
};

MetricsRow summarize(const std::vector<EpisodeResult>& episodes, int resamples,
                     std::uint64_t seed);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);
std::string episodes_csv_header();
std::string episodes_csv_row(const EpisodeResult& e);

struct SolverSpec {
  std::string name;        // label in tables: cbs, ca_star or a policy label
  std::string checkpoint;  // empty for planners
};

SolverSpec parse_solver(const std::string& text);  // "cbs", "ca_star" or "label=path"

struct Campaign {
  std::string family = "random";
  std::vector<int> sizes{20};
  std::vector<double> densities{0.0, 0.15, 0.30};
  std::vector<int> agent_counts{4, 8, 16};
  int episodes = 100;
  std::uint64_t seed = 0;
  std::vector<SolverSpec> solvers;
  EnvConfig env{};
  baselines::CbsOptions cbs{};
  PolicyOptions policy{};
  int threads = 0;  // 0 picks the hardware concurrency
  int bootstrap_resamples = 1000;
};

std::string setting_id(const std::string& family, int size, double density, int agents);
std::uint64_t instance_seed(std::uint64_t base, const std::string& family, int size,
                            double density, int agents, int episode);

struct CampaignResult {
  std::vector<MetricsRow> rows;
  std::vector<EpisodeResult> episodes;  // ordered by setting, solver, episode
};

// Runs every (setting, solver) pair. Failures inside an episode are recorded
// on the episode and never stop the campaign.
CampaignResult run_campaign(const Campaign& campaign);

// Writes metrics.csv, episodes.csv, deltas.csv and traces/<setting>__<solver>.jsonl.
void write_campaign(const Campaign& campaign, const CampaignResult& result,
                    const std::string& out_dir);

// Trace files: one `episode` header line followed by one `step` line per
// step, for every episode.
std::string trace_episode_jsonl(const Instance& inst, const EpisodeResult& e, int max_steps);

struct TraceEpisode {
  std::string setting;
  std::string solver;
  int episode = 0;
  std::uint64_t seed = 0;
  std::string instance_hash;
  std::string note;
  std::string family;
  int size = 0;
  double density = 0.0;
  int max_steps = 0;
  GridMap map;
  std::vector<Cell> starts;
  std::vector<Cell> goals;
  std::vector<StepTrace> steps;
};

std::vector<TraceEpisode> read_trace_file(const std::string& path);

// Independent recomputation of the metric table from trace files: every
// episode is re-simulated from its recorded actions, positions and collision
// flags are cross-checked, and metrics are recomputed from scratch.
struct ReplayReport {
  std::vector<MetricsRow> rows;
  std::vector<std::string> mismatches;  // simulator disagreements
};

// `seed` is the campaign seed, which fixes the bootstrap streams.
ReplayReport replay_traces(const std::string& trace_dir, int resamples, std::uint64_t seed);

}  // namespace mapf::bench
