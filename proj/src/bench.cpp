#include "mapf/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "mapf/config.hpp"
#include "mapf/mappo.hpp"

namespace mapf::bench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t family_code(const std::string& family) {
  if (family == "random") return 1;
  if (family == "warehouse") return 2;
  if (family == "city") return 3;
  throw std::invalid_argument("unknown map family '" + family + "' (random, warehouse, city)");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

json cell_json(Cell c) { return json::array({c.x, c.y}); }

Cell json_cell(const json& j) { return Cell{j.at(0).get<int>(), j.at(1).get<int>()}; }

std::uint64_t bootstrap_seed(std::uint64_t campaign_seed, const std::string& setting,
                             const std::string& solver) {
  Fnv1a h;
  h.add(setting);
  h.add("/");
  h.add(solver);
  return derive_seed(campaign_seed, {h.digest()});
}

}  // namespace

std::vector<baselines::AgentTask> Instance::tasks() const {
  std::vector<baselines::AgentTask> t;
  for (const AgentState& a : spawn) t.push_back({a.pos, a.goal});
  return t;
}

std::string Instance::hash() const {
  Fnv1a h;
  h.add(map.fingerprint());
  for (const AgentState& a : spawn) {
    h.add_int(a.pos.x);
    h.add_int(a.pos.y);
    h.add_int(a.goal.x);
    h.add_int(a.goal.y);
  }
  return h.hex();
}

Instance make_instance(const std::string& family, int size, double density, int agents,
                       std::uint64_t seed) {
  family_code(family);
  Instance inst;
  inst.family = family;
  inst.size = size;
  inst.density = density;
  inst.agents = agents;
  inst.seed = seed;
  const std::uint64_t map_seed = derive_seed(seed, {1});
  if (family == "random") {
    inst.map = generate_map(size, size, Triangular{density, density, density}, map_seed,
                            2 * agents);
  } else if (family == "warehouse") {
    inst.map = generate_warehouse(size, size, 2, density, map_seed, 2 * agents);
  } else {
    inst.map = generate_city(size, size, density, map_seed, 2 * agents);
  }
  inst.spawn = mapf::spawn(inst.map, agents, derive_seed(seed, {2}));
  return inst;
}

Instance corridor_instance() {
  Instance inst;
  inst.family = "corridor";
  inst.size = 5;
  inst.agents = 2;
  inst.map = parse_map(
      "type octile\nheight 3\nwidth 5\nmap\n"
      "@@.@@\n"
      ".....\n"
      "@@@@@\n");
  inst.density = inst.map.obstacle_fraction();
  AgentState a, b;
  a.id = 0;
  a.pos = {0, 1};
  a.goal = {4, 1};
  b.id = 1;
  b.pos = {4, 1};
  b.goal = {0, 1};
  inst.spawn = {a, b};
  return inst;
}

void score_episode(const std::vector<AgentState>& spawn, EpisodeResult& r) {
  const int n = static_cast<int>(spawn.size());
  r.agents = n;
  r.steps = static_cast<int>(r.trace.size());
  std::vector<Cell> goals;
  std::vector<Cell> pos;
  for (const AgentState& a : spawn) {
    goals.push_back(a.goal);
    pos.push_back(a.pos);
  }
  auto at_goal = [&](const std::vector<Cell>& p) {
    int c = 0;
    for (int i = 0; i < n; ++i) c += p[i] == goals[i] ? 1 : 0;
    return c;
  };
  r.max_at_goal = at_goal(pos);
  r.collisions = 0;
  // arrival[i]: first t from which agent i never leaves its goal again.
  std::vector<int> arrival(n, 0);
  for (int i = 0; i < n; ++i) arrival[i] = pos[i] == goals[i] ? 0 : -1;
  for (const StepTrace& s : r.trace) {
    r.max_at_goal = std::max(r.max_at_goal, at_goal(s.positions));
    for (int i = 0; i < n; ++i) {
      r.collisions += s.collision[i] ? 1 : 0;
      if (s.positions[i] != goals[i]) {
        arrival[i] = -1;
      } else if (arrival[i] < 0) {
        arrival[i] = s.t;
      }
    }
  }
  const std::vector<Cell>& last = r.trace.empty() ? pos : r.trace.back().positions;
  const bool all_home = at_goal(last) == n;
  r.success = all_home && r.collisions == 0;
  r.co = r.steps > 0 && n > 0 ? static_cast<double>(r.collisions) / (r.steps * n) : 0.0;
  r.makespan = 0;
  r.soc = 0;
  if (all_home) {
    for (int a : arrival) {
      r.makespan = std::max(r.makespan, a);
      r.soc += a;
    }
  }
}

EpisodeResult run_planned(const Instance& inst, const baselines::Solution& sol,
                          const EnvConfig& env) {
  EpisodeResult r;
  r.instance_hash = inst.hash();
  r.seed = inst.seed;
  r.note = sol.note;
  GridWorld world(inst.map, inst.spawn, env);
  const int n = world.num_agents();
  while (!world.terminal()) {
    const int t = world.state().step_index;
    JointAction actions(n, static_cast<int>(Action::kStay));
    if (sol.success) {
      for (int i = 0; i < n; ++i) {
        const auto& path = sol.paths[i];
        int a = action_between(baselines::position_at(path, t), baselines::position_at(path, t + 1));
        if (a < 0) throw std::logic_error("planner path is not 4-connected");
        actions[i] = a;
      }
    }
    StepOutcome o = world.step(actions);
    r.trace.push_back({o.step_index, o.positions, actions, o.collision});
  }
  score_episode(inst.spawn, r);
  return r;
}

EpisodeResult run_policy(const Instance& inst, const policy::Model& model, const EnvConfig& env,
                         const PolicyOptions& options, std::uint64_t seed) {
  if (env.fov != model.config().policy.fov) {
    throw std::invalid_argument("checkpoint field of view differs from the environment's");
  }
  EpisodeResult r;
  r.instance_hash = inst.hash();
  r.seed = inst.seed;
  GridWorld world(inst.map, inst.spawn, env);
  std::vector<mappo::ActorState> states{
      mappo::ActorState::initial(world.num_agents(), model.config())};
  std::mt19937_64 rng(seed);
  mappo::ActOptions ao;
  ao.greedy = options.greedy;
  ao.resolve = options.resolve_conflicts;
  while (!world.terminal()) {
    std::vector<const GridWorld*> envs{&world};
    std::vector<mappo::Decision> d = mappo::act(model, envs, states, ao, rng);
    StepOutcome o = world.step(d[0].executed);
    states[0].hidden = std::move(d[0].new_hidden);
    states[0].messages = std::move(d[0].new_messages);
    states[0].message_tag = o.step_index - 1;
    r.trace.push_back({o.step_index, o.positions, d[0].executed, o.collision});
  }
  score_episode(inst.spawn, r);
  return r;
}

double success_rate(const std::vector<EpisodeResult>& episodes) {
  if (episodes.empty()) throw std::invalid_argument("success rate of zero episodes");
  auto wins = std::count_if(episodes.begin(), episodes.end(),
                            [](const EpisodeResult& e) { return e.success; });
  return 100.0 * static_cast<double>(wins) / static_cast<double>(episodes.size());
}

Interval bootstrap_ci(const std::vector<double>& values, int resamples, std::uint64_t seed) {
  Interval iv;
  iv.n = static_cast<int>(values.size());
  if (values.empty()) {
    iv.mean = iv.lo = iv.hi = kNaN;
    return iv;
  }
  const double n = static_cast<double>(values.size());
  iv.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (resamples < 1) {
    iv.lo = iv.hi = iv.mean;
    return iv;
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick(0, values.size() - 1);
  std::vector<double> means(resamples);
  for (int b = 0; b < resamples; ++b) {
    double s = 0.0;
    for (size_t k = 0; k < values.size(); ++k) s += values[pick(rng)];
    means[b] = s / n;
  }
  std::sort(means.begin(), means.end());
  auto quantile = [&](double q) {
    double pos = q * (resamples - 1);
    auto lo = static_cast<size_t>(std::floor(pos));
    size_t hi = std::min(lo + 1, means.size() - 1);
    return means[lo] + (pos - lo) * (means[hi] - means[lo]);
  };
  iv.lo = quantile(0.025);
  iv.hi = quantile(0.975);
  return iv;
}

MetricsRow summarize(const std::vector<EpisodeResult>& episodes, int resamples,
                     std::uint64_t seed) {
  MetricsRow row;
  row.episodes = static_cast<int>(episodes.size());
  if (episodes.empty()) return row;
  row.setting = episodes.front().setting;
  row.solver = episodes.front().solver;
  row.agents = episodes.front().agents;
  std::vector<double> sr, mr, co, mk, soc;
  Fnv1a h;
  for (const EpisodeResult& e : episodes) {
    h.add(e.instance_hash);
    sr.push_back(e.success ? 100.0 : 0.0);
    mr.push_back(e.max_at_goal);
    co.push_back(e.co);
    if (e.success) {
      mk.push_back(e.makespan);
      soc.push_back(static_cast<double>(e.soc));
    }
  }
  row.instances_hash = h.hex();
  row.sr = bootstrap_ci(sr, resamples, derive_seed(seed, {1}));
  row.mr = bootstrap_ci(mr, resamples, derive_seed(seed, {2}));
  row.co = bootstrap_ci(co, resamples, derive_seed(seed, {3}));
  row.makespan = bootstrap_ci(mk, resamples, derive_seed(seed, {4}));
  row.soc = bootstrap_ci(soc, resamples, derive_seed(seed, {5}));
  return row;
}

std::string metrics_csv_header() {
  return "setting,family,size,density,agents,solver,episodes,instances_hash,"
         "SR,SR_lo,SR_hi,MR,MR_lo,MR_hi,CO,CO_lo,CO_hi,"
         "makespan,makespan_lo,makespan_hi,soc,soc_lo,soc_hi,successes";
}

std::string metrics_csv_row(const MetricsRow& r) {
  std::ostringstream os;
  os << r.setting << ',' << r.family << ',' << r.size << ',' << format_double(r.density) << ','
     << r.agents << ',' << r.solver << ',' << r.episodes << ',' << r.instances_hash;
  for (const Interval* iv : {&r.sr, &r.mr, &r.co, &r.makespan, &r.soc}) {
    os << ',' << format_double(iv->mean) << ',' << format_double(iv->lo) << ','
       << format_double(iv->hi);
  }
  os << ',' << r.makespan.n;
  return os.str();
}

std::string episodes_csv_header() {
  return "setting,solver,episode,seed,instance_hash,agents,steps,success,MR,collisions,CO,"
         "makespan,soc";
}

std::string episodes_csv_row(const EpisodeResult& e) {
  std::ostringstream os;
  os << e.setting << ',' << e.solver << ',' << e.episode << ',' << e.seed << ','
     << e.instance_hash << ',' << e.agents << ',' << e.steps << ',' << (e.success ? 1 : 0)
     << ',' << e.max_at_goal << ',' << e.collisions << ',' << format_double(e.co) << ','
     << e.makespan << ',' << e.soc;
  return os.str();
}

SolverSpec parse_solver(const std::string& text) {
  SolverSpec s;
  auto eq = text.find('=');
  if (eq == std::string::npos) {
    if (text != "cbs" && text != "ca_star") {
      throw std::invalid_argument("unknown solver '" + text +
                                  "' (cbs, ca_star or label=checkpoint)");
    }
    s.name = text;
    return s;
  }
  s.name = text.substr(0, eq);
  s.checkpoint = text.substr(eq + 1);
  if (s.name.empty() || s.checkpoint.empty()) {
    throw std::invalid_argument("policy solver must look like label=checkpoint, got '" + text + "'");
  }
  return s;
}

std::string setting_id(const std::string& family, int size, double density, int agents) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s_%dx%d_d%03d_n%d", family.c_str(), size, size,
                static_cast<int>(std::lround(density * 100.0)), agents);
  return buf;
}

std::uint64_t instance_seed(std::uint64_t base, const std::string& family, int size,
                            double density, int agents, int episode) {
  auto milli = static_cast<std::uint64_t>(std::llround(density * 1000.0));
  return derive_seed(base, {family_code(family), static_cast<std::uint64_t>(size), milli,
                            static_cast<std::uint64_t>(agents),
                            static_cast<std::uint64_t>(episode)});
}

namespace {

struct SettingKey {
  int size;
  double density;
  int agents;
};

struct Job {
  size_t setting;
  size_t solver;
  int episode;
};

}  // namespace

CampaignResult run_campaign(const Campaign& c) {
  if (c.episodes < 1) throw std::invalid_argument("a campaign needs at least one episode per cell");
  if (c.solvers.empty()) throw std::invalid_argument("a campaign needs at least one solver");
  family_code(c.family);

  std::vector<std::unique_ptr<policy::Model>> models(c.solvers.size());
  for (size_t s = 0; s < c.solvers.size(); ++s) {
    const SolverSpec& spec = c.solvers[s];
    if (spec.checkpoint.empty()) continue;
    auto cfg = policy::ModelConfig::from_text(nn::read_checkpoint_config(spec.checkpoint));
    models[s] = std::make_unique<policy::Model>(cfg, 0);
    models[s]->load(spec.checkpoint);
  }

  std::vector<SettingKey> settings;
  for (int size : c.sizes) {
    for (double d : c.densities) {
      for (int n : c.agent_counts) settings.push_back({size, d, n});
    }
  }
  // Instances first, shared by every solver.
  std::vector<std::vector<std::optional<Instance>>> instances(settings.size());
  std::vector<std::vector<std::string>> instance_errors(settings.size());
  for (size_t k = 0; k < settings.size(); ++k) {
    const auto& st = settings[k];
    instances[k].resize(c.episodes);
    instance_errors[k].resize(c.episodes);
    for (int e = 0; e < c.episodes; ++e) {
      std::uint64_t seed = instance_seed(c.seed, c.family, st.size, st.density, st.agents, e);
      try {
        instances[k][e] = make_instance(c.family, st.size, st.density, st.agents, seed);
      } catch (const std::exception& err) {
        instance_errors[k][e] = std::string("instance generation failed: ") + err.what();
      }
    }
  }

  std::vector<Job> jobs;
  for (size_t k = 0; k < settings.size(); ++k) {
    for (size_t s = 0; s < c.solvers.size(); ++s) {
      for (int e = 0; e < c.episodes; ++e) jobs.push_back({k, s, e});
    }
  }
  std::vector<EpisodeResult> results(jobs.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t j = next++; j < jobs.size(); j = next++) {
      const Job& job = jobs[j];
      const auto& st = settings[job.setting];
      const SolverSpec& spec = c.solvers[job.solver];
      EpisodeResult r;
      const auto& inst = instances[job.setting][job.episode];
      try {
        if (!inst) throw std::runtime_error(instance_errors[job.setting][job.episode]);
        if (spec.checkpoint.empty()) {
          baselines::Solution sol = spec.name == "cbs"
                                        ? baselines::cbs(inst->map, inst->tasks(), c.cbs)
                                        : baselines::cooperative_astar(inst->map, inst->tasks());
          r = run_planned(*inst, sol, c.env);
        } else {
          Fnv1a h;
          h.add(spec.name);
          r = run_policy(*inst, *models[job.solver], c.env, c.policy,
                         derive_seed(inst->seed, {h.digest()}));
        }
      } catch (const std::exception& err) {
        r = EpisodeResult{};
        r.note = err.what();
        r.agents = st.agents;
        if (inst) {
          r.seed = inst->seed;
          r.instance_hash = inst->hash();
          score_episode(inst->spawn, r);
        }
      }
      r.setting = setting_id(c.family, st.size, st.density, st.agents);
      r.solver = spec.name;
      r.episode = job.episode;
      results[j] = std::move(r);
    }
  };
  int threads = c.threads > 0 ? c.threads : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  CampaignResult out;
  out.episodes = std::move(results);
  const size_t per_cell = static_cast<size_t>(c.episodes);
  for (size_t start = 0; start < out.episodes.size(); start += per_cell) {
    std::vector<EpisodeResult> cell(out.episodes.begin() + start,
                                    out.episodes.begin() + start + per_cell);
    const Job& job = jobs[start];
    const auto& st = settings[job.setting];
    MetricsRow row = summarize(
        cell, c.bootstrap_resamples,
        bootstrap_seed(c.seed, cell.front().setting, cell.front().solver));
    row.family = c.family;
    row.size = st.size;
    row.density = st.density;
    row.agents = st.agents;
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::string trace_episode_jsonl(const Instance& inst, const EpisodeResult& e, int max_steps) {
  json head;
  head["type"] = "episode";
  head["setting"] = e.setting;
  head["solver"] = e.solver;
  head["episode"] = e.episode;
  head["seed"] = e.seed;
  head["instance_hash"] = e.instance_hash;
  head["note"] = e.note;
  head["max_steps"] = max_steps;
  head["family"] = inst.family;
  head["size"] = inst.size;
  head["density"] = inst.density;
  head["agents"] = inst.agents;
  head["map"] = map_to_string(inst.map);
  json starts = json::array(), goals = json::array();
  for (const AgentState& a : inst.spawn) {
    starts.push_back(cell_json(a.pos));
    goals.push_back(cell_json(a.goal));
  }
  head["starts"] = std::move(starts);
  head["goals"] = std::move(goals);
  std::string out = head.dump() + "\n";
  for (const StepTrace& s : e.trace) {
    json line;
    line["type"] = "step";
    line["t"] = s.t;
    line["actions"] = s.actions;
    json pos = json::array();
    for (Cell c : s.positions) pos.push_back(cell_json(c));
    line["positions"] = std::move(pos);
    line["collision"] = s.collision;
    out += line.dump() + "\n";
  }
  return out;
}

void write_campaign(const Campaign& c, const CampaignResult& result, const std::string& out_dir) {
  fs::create_directories(fs::path(out_dir) / "traces");
  auto open = [](const fs::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    return f;
  };
  {
    auto f = open(fs::path(out_dir) / "metrics.csv");
    f << metrics_csv_header() << '\n';
    for (const MetricsRow& r : result.rows) f << metrics_csv_row(r) << '\n';
  }
  {
    auto f = open(fs::path(out_dir) / "episodes.csv");
    f << episodes_csv_header() << '\n';
    for (const EpisodeResult& e : result.episodes) f << episodes_csv_row(e) << '\n';
  }
  {
    // Absolute and relative SR differences between every ordered solver pair.
    auto f = open(fs::path(out_dir) / "deltas.csv");
    f << "setting,solver_a,solver_b,SR_a,SR_b,abs_delta,rel_delta_percent\n";
    std::map<std::string, std::vector<const MetricsRow*>> by_setting;
    std::vector<std::string> order;
    for (const MetricsRow& r : result.rows) {
      if (!by_setting.count(r.setting)) order.push_back(r.setting);
      by_setting[r.setting].push_back(&r);
    }
    for (const std::string& s : order) {
      const auto& rows = by_setting[s];
      for (size_t a = 0; a < rows.size(); ++a) {
        for (size_t b = 0; b < rows.size(); ++b) {
          if (a == b) continue;
          double sa = rows[a]->sr.mean, sb = rows[b]->sr.mean;
          double rel = sb > 0.0 ? 100.0 * (sa - sb) / sb : kNaN;
          f << s << ',' << rows[a]->solver << ',' << rows[b]->solver << ',' << format_double(sa)
            << ',' << format_double(sb) << ',' << format_double(sa - sb) << ','
            << format_double(rel) << '\n';
        }
      }
    }
  }
  // Regenerating an instance from its seed is cheap and keeps CampaignResult small.
  std::map<std::string, std::ofstream> traces;
  for (const EpisodeResult& e : result.episodes) {
    const std::string name = e.setting + "__" + e.solver + ".jsonl";
    auto it = traces.find(name);
    if (it == traces.end()) {
      it = traces.emplace(name, open(fs::path(out_dir) / "traces" / name)).first;
    }
    if (e.instance_hash.empty()) {
      json head;
      head["type"] = "episode";
      head["setting"] = e.setting;
      head["solver"] = e.solver;
      head["episode"] = e.episode;
      head["note"] = e.note;
      head["agents"] = e.agents;
      head["failed_instance"] = true;
      it->second << head.dump() << '\n';
      continue;
    }
    const MetricsRow* row = nullptr;
    for (const MetricsRow& r : result.rows) {
      if (r.setting == e.setting && r.solver == e.solver) row = &r;
    }
    Instance inst = make_instance(c.family, row->size, row->density, row->agents, e.seed);
    it->second << trace_episode_jsonl(inst, e, c.env.max_steps);
  }
}

std::vector<TraceEpisode> read_trace_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read trace file " + path);
  std::vector<TraceEpisode> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "episode") {
        TraceEpisode ep;
        ep.setting = j.at("setting").get<std::string>();
        ep.solver = j.at("solver").get<std::string>();
        ep.episode = j.at("episode").get<int>();
        ep.note = j.value("note", "");
        ep.family = j.value("family", "");
        ep.size = j.value("size", 0);
        ep.density = j.value("density", 0.0);
        if (!j.value("failed_instance", false)) {
          ep.seed = j.at("seed").get<std::uint64_t>();
          ep.instance_hash = j.at("instance_hash").get<std::string>();
          ep.max_steps = j.at("max_steps").get<int>();
          ep.map = parse_map(j.at("map").get<std::string>());
          for (const auto& c : j.at("starts")) ep.starts.push_back(json_cell(c));
          for (const auto& c : j.at("goals")) ep.goals.push_back(json_cell(c));
        } else {
          ep.starts.resize(j.at("agents").get<int>());
        }
        out.push_back(std::move(ep));
      } else if (type == "step") {
        if (out.empty()) throw std::runtime_error("step line before any episode line");
        StepTrace s;
        s.t = j.at("t").get<int>();
        s.actions = j.at("actions").get<std::vector<int>>();
        for (const auto& c : j.at("positions")) s.positions.push_back(json_cell(c));
        s.collision = j.at("collision").get<std::vector<std::uint8_t>>();
        const size_t n = out.back().starts.size();
        if (s.actions.size() != n || s.positions.size() != n || s.collision.size() != n) {
          throw std::runtime_error("step line has the wrong number of agents");
        }
        out.back().steps.push_back(std::move(s));
      } else {
        throw std::runtime_error("unknown line type '" + type + "'");
      }
    } catch (const std::exception& err) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed trace: " +
                               err.what());
    }
  }
  return out;
}

ReplayReport replay_traces(const std::string& trace_dir, int resamples, std::uint64_t seed) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(trace_dir)) {
    if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  ReplayReport report;
  for (const fs::path& file : files) {
    std::vector<TraceEpisode> eps = read_trace_file(file.string());
    if (eps.empty()) continue;
    std::vector<double> sr, mr, co, mk, soc;
    Fnv1a hashes;
    for (const TraceEpisode& ep : eps) {
      const int n = static_cast<int>(ep.starts.size());
      hashes.add(ep.instance_hash);
      if (ep.instance_hash.empty()) {
        sr.push_back(0.0);
        mr.push_back(0.0);
        co.push_back(0.0);
        continue;
      }
      // Re-simulate the recorded actions with the bare move resolver.
      std::vector<Cell> pos = ep.starts;
      int at_goal_max = 0, collisions = 0;
      auto count_home = [&](const std::vector<Cell>& p) {
        int k = 0;
        for (int i = 0; i < n; ++i) k += p[i] == ep.goals[i];
        return k;
      };
      at_goal_max = count_home(pos);
      std::vector<int> settled(n, -1);
      for (int i = 0; i < n; ++i) {
        if (pos[i] == ep.goals[i]) settled[i] = 0;
      }
      for (size_t k = 0; k < ep.steps.size(); ++k) {
        const StepTrace& s = ep.steps[k];
        MoveResolution m = resolve_moves(ep.map, pos, s.actions);
        if (m.positions != s.positions || m.reverted != s.collision) {
          report.mismatches.push_back(file.filename().string() + " episode " +
                                      std::to_string(ep.episode) + " step " +
                                      std::to_string(s.t));
        }
        pos = s.positions;
        for (int i = 0; i < n; ++i) {
          collisions += s.collision[i] != 0;
          if (pos[i] != ep.goals[i]) {
            settled[i] = -1;
          } else if (settled[i] < 0) {
            settled[i] = s.t;
          }
        }
        at_goal_max = std::max(at_goal_max, count_home(pos));
      }
      const int steps = static_cast<int>(ep.steps.size());
      const bool home = count_home(pos) == n;
      const bool ok = home && collisions == 0;
      sr.push_back(ok ? 100.0 : 0.0);
      mr.push_back(at_goal_max);
      co.push_back(steps > 0 ? static_cast<double>(collisions) / (steps * n) : 0.0);
      if (ok) {
        int m = 0;
        long long total = 0;
        for (int a : settled) {
          m = std::max(m, a);
          total += a;
        }
        mk.push_back(m);
        soc.push_back(static_cast<double>(total));
      }
    }
    MetricsRow row;
    row.family = eps.front().family;
    row.size = eps.front().size;
    row.density = eps.front().density;
    row.setting = eps.front().setting;
    row.solver = eps.front().solver;
    row.agents = static_cast<int>(eps.front().starts.size());
    row.episodes = static_cast<int>(eps.size());
    row.instances_hash = hashes.hex();
    std::uint64_t s = bootstrap_seed(seed, row.setting, row.solver);
    row.sr = bootstrap_ci(sr, resamples, derive_seed(s, {1}));
    row.mr = bootstrap_ci(mr, resamples, derive_seed(s, {2}));
    row.co = bootstrap_ci(co, resamples, derive_seed(s, {3}));
    row.makespan = bootstrap_ci(mk, resamples, derive_seed(s, {4}));
    row.soc = bootstrap_ci(soc, resamples, derive_seed(s, {5}));
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace mapf::bench
