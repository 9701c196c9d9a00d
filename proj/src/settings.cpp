#include "mapf/settings.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace mapf {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "agents", "actions", "max_steps", "fov", "world_size", "obstacle_prob", "obstacle_peak",
      "mask_distance", "memory_length", "intrinsic_scale", "reward_move", "reward_idle",
      "reward_goal", "reward_collision", "reward_blocking",
      "comm_mode", "msg_dim", "heads", "layers", "buckets", "ffn_mult", "spatial_hidden",
      "vec_hidden", "hidden", "torso",
      "gamma", "lambda", "clip", "epochs", "minibatch_steps", "lr", "entropy_coef",
      "value_coef", "blocking_coef", "max_grad_norm", "intrinsic_weight", "num_envs", "horizon",
      "total_env_steps", "checkpoint_every", "sr_window", "two_step_unroll",
      "eval_family", "eval_sizes", "eval_densities", "eval_agents", "eval_episodes",
      "eval_threads", "eval_greedy", "bootstrap_resamples", "cbs_timeout", "cbs_max_nodes"};
  return keys;
}

std::pair<double, double> pair_of(const KeyValueConfig& kv, const std::string& key,
                                  std::pair<double, double> fallback) {
  auto v = kv.get_double_list(key, {fallback.first, fallback.second});
  if (v.size() != 2) throw std::invalid_argument(key + " needs two values (low, high)");
  return {v[0], v[1]};
}

}  // namespace

Settings Settings::defaults() {
  Settings s;
  s.sampler.sizes.clear();
  for (int n = 10; n <= 40; ++n) s.sampler.sizes.push_back(n);
  s.sampler.density = Triangular{0.0, 0.33, 0.5};
  s.sampler.agents = 8;
  s.sampler.env = s.env;
  s.campaign.env = s.env;
  return s;
}

Settings Settings::from_config(const KeyValueConfig& kv) {
  for (const auto& [key, value] : kv.values()) {
    if (!known_keys().count(key)) throw std::invalid_argument("unknown config key '" + key + "'");
  }
  Settings s = defaults();

  if (kv.get_int("actions", kNumActions) != kNumActions) {
    throw std::invalid_argument("actions must be 5 (Up, Down, Left, Right, Stay)");
  }
  EnvConfig& env = s.env;
  env.max_steps = kv.get_int("max_steps", env.max_steps);
  env.fov = kv.get_int("fov", env.fov);
  env.memory_length = kv.get_int("memory_length", env.memory_length);
  env.intrinsic_scale = kv.get_double("intrinsic_scale", env.intrinsic_scale);
  env.rewards.move = kv.get_double("reward_move", env.rewards.move);
  env.rewards.stay_off_goal = kv.get_double("reward_idle", env.rewards.stay_off_goal);
  env.rewards.stay_on_goal = kv.get_double("reward_goal", env.rewards.stay_on_goal);
  env.rewards.collision = kv.get_double("reward_collision", env.rewards.collision);
  env.rewards.blocking = kv.get_double("reward_blocking", env.rewards.blocking);
  if (env.max_steps < 1) throw std::invalid_argument("max_steps must be positive");
  if (env.fov < 1 || env.fov % 2 == 0) throw std::invalid_argument("fov must be odd and positive");

  auto [smin, smax] = pair_of(kv, "world_size", {10, 40});
  if (smin < 2 || smax < smin) throw std::invalid_argument("world_size needs 2 <= low <= high");
  s.sampler.sizes.clear();
  for (int n = static_cast<int>(smin); n <= static_cast<int>(smax); ++n) s.sampler.sizes.push_back(n);
  auto [plo, phi] = pair_of(kv, "obstacle_prob", {0.0, 0.5});
  double peak = kv.get_double("obstacle_peak", std::clamp(0.33, plo, phi));
  if (!(0.0 <= plo && plo <= peak && peak <= phi && phi < 1.0)) {
    throw std::invalid_argument("need 0 <= obstacle_prob low <= obstacle_peak <= high < 1");
  }
  s.sampler.density = Triangular{plo, peak, phi};
  s.sampler.agents = kv.get_int("agents", s.sampler.agents);
  if (s.sampler.agents < 1) throw std::invalid_argument("agents must be positive");
  s.sampler.env = env;

  policy::ModelConfig& m = s.model;
  m.policy.fov = env.fov;
  m.comm.radius = kv.get_double("mask_distance", m.comm.radius);
  m.mode = comm::parse_mode(kv.get_string("comm_mode", comm::mode_name(m.mode)));
  m.comm.dim = kv.get_int("msg_dim", m.comm.dim);
  m.comm.heads = kv.get_int("heads", m.comm.heads);
  m.comm.layers = kv.get_int("layers", m.comm.layers);
  m.comm.buckets = kv.get_int("buckets", m.comm.buckets);
  m.comm.ffn_mult = kv.get_int("ffn_mult", m.comm.ffn_mult);
  m.policy.spatial_hidden = kv.get_int("spatial_hidden", m.policy.spatial_hidden);
  m.policy.vec_hidden = kv.get_int("vec_hidden", m.policy.vec_hidden);
  m.policy.hidden = kv.get_int("hidden", m.policy.hidden);
  m.policy.torso = kv.get_int("torso", m.policy.torso);

  mappo::TrainConfig& t = s.train;
  t.gamma = kv.get_double("gamma", t.gamma);
  t.lambda = kv.get_double("lambda", t.lambda);
  t.clip = kv.get_double("clip", t.clip);
  t.epochs = kv.get_int("epochs", t.epochs);
  t.minibatch_steps = kv.get_int("minibatch_steps", t.minibatch_steps);
  t.lr = kv.get_double("lr", t.lr);
  t.entropy_coef = kv.get_double("entropy_coef", t.entropy_coef);
  t.value_coef = kv.get_double("value_coef", t.value_coef);
  t.blocking_coef = kv.get_double("blocking_coef", t.blocking_coef);
  t.max_grad_norm = kv.get_double("max_grad_norm", t.max_grad_norm);
  t.intrinsic_weight = kv.get_double("intrinsic_weight", t.intrinsic_weight);
  t.num_envs = kv.get_int("num_envs", t.num_envs);
  t.horizon = kv.get_int("horizon", t.horizon);
  t.total_env_steps = kv.get_int64("total_env_steps", t.total_env_steps);
  t.checkpoint_every = kv.get_int("checkpoint_every", t.checkpoint_every);
  t.sr_window = kv.get_int("sr_window", t.sr_window);
  t.two_step_unroll = kv.get_bool("two_step_unroll", t.two_step_unroll);

  bench::Campaign& c = s.campaign;
  c.env = env;
  c.family = kv.get_string("eval_family", c.family);
  c.sizes = kv.get_int_list("eval_sizes", c.sizes);
  c.densities = kv.get_double_list("eval_densities", c.densities);
  c.agent_counts = kv.get_int_list("eval_agents", c.agent_counts);
  c.episodes = kv.get_int("eval_episodes", c.episodes);
  c.threads = kv.get_int("eval_threads", c.threads);
  c.policy.greedy = kv.get_bool("eval_greedy", c.policy.greedy);
  c.bootstrap_resamples = kv.get_int("bootstrap_resamples", c.bootstrap_resamples);
  c.cbs.timeout_seconds = kv.get_double("cbs_timeout", c.cbs.timeout_seconds);
  c.cbs.max_nodes = kv.get_int64("cbs_max_nodes", c.cbs.max_nodes);
  return s;
}

Settings Settings::from_file(const std::string& path) {
  return from_config(KeyValueConfig::load(path));
}

}  // namespace mapf
