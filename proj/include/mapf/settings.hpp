#pragma once

#include <string>

#include "mapf/bench.hpp"
#include "mapf/config.hpp"
#include "mapf/mappo.hpp"

namespace mapf {

// Everything a config file can set. Keys (all optional, defaults in
// brackets):
//
//   environment   agents [8], actions [5, fixed], max_steps [256], fov [3],
//                 world_size [10, 40] (inclusive range of square sides),
//                 obstacle_prob [0.0, 0.5], obstacle_peak [0.33],
//                 mask_distance [40], memory_length [8], intrinsic_scale [0.1],
//                 reward_move [-0.3], reward_idle [-0.3], reward_goal [0.0],
//                 reward_collision [-2.0], reward_blocking [-1.0]
//   model         comm_mode [rmha], msg_dim [64], heads [4], layers [2],
//                 buckets [16], ffn_mult [4], spatial_hidden [128],
//                 vec_hidden [32], hidden [128], torso [128]
//   training      gamma [0.95], lambda [0.95], clip [0.2], epochs [4],
//                 minibatch_steps [256], lr [3e-4], entropy_coef [0.01],
//                 value_coef [0.5], blocking_coef [0.1], max_grad_norm [0.5],
//                 intrinsic_weight [0.5], num_envs [8], horizon [128],
//                 total_env_steps [200000], checkpoint_every [25],
//                 sr_window [100], two_step_unroll [true]
//   evaluation    eval_family [random], eval_sizes [20],
//                 eval_densities [0, 0.15, 0.3], eval_agents [4, 8, 16],
//                 eval_episodes [100], eval_threads [0], eval_greedy [false],
//                 bootstrap_resamples [1000], cbs_timeout [60],
//                 cbs_max_nodes [200000]
struct Settings {
  EnvConfig env;
  mappo::ScenarioSampler sampler;
  policy::ModelConfig model;
  mappo::TrainConfig train;
  bench::Campaign campaign;

  static Settings defaults();
  // Unknown keys are rejected so that typos do not silently fall back.
  static Settings from_config(const KeyValueConfig& cfg);
  static Settings from_file(const std::string& path);
};

}  // namespace mapf
