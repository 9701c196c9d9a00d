#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mapf/grid_world.hpp"
#include "mapf/policy_net.hpp"

namespace mapf::mappo {

using nn::Mat;

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// Standard GAE recursion. dones[t] marks that the episode ended with step t,
// so nothing is bootstrapped across it; `bootstrap` is V(s_T) for a sequence
// cut by the rollout horizon. Throws ShapeError on length mismatch.
GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<std::uint8_t>& dones, double bootstrap, double gamma,
                      double lambda);

struct TrainConfig {
  double gamma = 0.95;
  double lambda = 0.95;
  double clip = 0.2;
  int epochs = 4;
  int minibatch_steps = 256;  // env steps (all agents of an env step stay together)
  double lr = 3e-4;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double blocking_coef = 0.1;
  double max_grad_norm = 0.5;
  double intrinsic_weight = 0.5;  // beta in A = A_ext + beta * A_int
  int num_envs = 8;
  int horizon = 128;
  long long total_env_steps = 200000;
  int checkpoint_every = 25;  // rounds
  int sr_window = 100;        // episodes in the sliding success-rate window
  bool two_step_unroll = true;
};

// Draws a training instance: square map of a size from `sizes`, obstacle
// density from `density`, `agents` agents.
struct ScenarioSampler {
  std::vector<int> sizes{10, 25, 40};
  Triangular density{};
  int agents = 8;
  EnvConfig env{};

  GridWorld sample(std::uint64_t seed) const;
};

// Per-agent clipped surrogate min(r A, clip(r, 1 - eps, 1 + eps) A).
double clipped_objective(double ratio, double advantage, double eps);

struct LossBatch {
  std::vector<int> actions;
  std::vector<double> old_logp;
  std::vector<double> advantages;  // already normalised
  std::vector<double> returns_ext;
  std::vector<double> returns_int;
  std::vector<double> blocking_target;
  // Per-row bitmask of the actions the executed one was drawn among; the
  // probabilities are renormalised over it. Empty means all actions.
  std::vector<std::uint8_t> allowed;
};

struct LossTerms {
  double policy = 0.0;
  double value = 0.0;  // ext MSE + int MSE
  double entropy = 0.0;
  double blocking = 0.0;
  double clip_frac = 0.0;
  double total = 0.0;
  policy::HeadOutputs grad;  // dL/d(head outputs), message grad left at zero
};

// Loss = clip loss + c_v (MSE_ext + MSE_int) - c_e H + c_b BCE, averaged over
// rows, with its gradient w.r.t. the head outputs.
LossTerms ppo_loss(const policy::HeadOutputs& out, const LossBatch& batch, const TrainConfig& cfg);

// Recurrent and communication state carried by one environment between steps.
struct ActorState {
  Mat hidden;    // n x hidden
  Mat messages;  // n x dim, produced at step `message_tag`
  int message_tag = -1;

  static ActorState initial(int agents, const policy::ModelConfig& cfg);
};

struct ActOptions {
  bool greedy = false;
  bool resolve = true;
};

struct Decision {
  Mat obs;
  Mat hidden_in;
  Mat messages_in;
  std::vector<int> dist;
  JointAction sampled;
  JointAction executed;
  std::vector<double> logp;  // of the executed action, renormalised over `allowed`
  std::vector<std::uint8_t> allowed;
  std::vector<double> v_ext;
  std::vector<double> v_int;
  std::vector<double> block_prob;
  std::vector<std::array<double, kNumActions>> probs;
  int conflicts = 0;
  Mat new_hidden;
  Mat new_messages;
};

// One lockstep decision for every environment: observe, encode,
// communicate over the previous step's messages, sample and resolve.
std::vector<Decision> act(const policy::Model& model, const std::vector<const GridWorld*>& envs,
                          const std::vector<ActorState>& states, const ActOptions& options,
                          std::mt19937_64& rng);

struct StepRecord {
  Mat obs, hidden_in, messages_in;
  std::vector<int> dist;
  std::vector<int> actions;
  std::vector<std::uint8_t> allowed;
  std::vector<double> logp, v_ext, v_int, r_ext, r_int, block_target;
  bool done = false;      // the episode ended with this step
  bool has_prev = false;  // record t-1 of this env belongs to the same episode
};

struct RolloutBuffer {
  std::vector<std::vector<StepRecord>> steps;     // [env][t]
  std::vector<std::vector<double>> bootstrap_ext;  // [env][agent]
  std::vector<std::vector<double>> bootstrap_int;
  std::vector<std::vector<std::vector<double>>> adv;  // [env][t][agent], combined
  std::vector<std::vector<std::vector<double>>> ret_ext;
  std::vector<std::vector<std::vector<double>>> ret_int;

  void clear();
  void compute_advantages(const TrainConfig& cfg);
};

struct RoundStats {
  int round = 0;
  long long env_steps = 0;
  double mean_reward = 0.0;  // mean extrinsic reward per agent per step over the round's rollouts
  double recent_sr = 0.0;    // percent over the sliding window
  int window_fill = 0;       // finished episodes currently in the window
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
  double blocking_loss = 0.0;
  int episodes = 0;
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
  double blocking_loss = 0.0;
  int minibatches = 0;
};

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const ScenarioSampler& sampler,
          const policy::ModelConfig& model_cfg, std::uint64_t seed);

  // Collects horizon x num_envs env steps into the buffer.
  void collect();
  // PPO epochs over the buffer, then clears it.
  UpdateStats update();
  RoundStats run_round();

  policy::Model& model() { return *model_; }
  const RolloutBuffer& buffer() const { return buffer_; }
  long long env_steps() const { return env_steps_; }
  int rounds() const { return round_; }
  double recent_success_rate() const;
  // Where a checkpoint of the last finite parameters goes when training aborts.
  void set_abort_checkpoint(const std::string& path) { abort_path_ = path; }

 private:
  void reset_env(int e);
  double minibatch_step(const std::vector<std::pair<int, int>>& idx, UpdateStats& stats);

  TrainConfig cfg_;
  ScenarioSampler sampler_;
  std::uint64_t seed_;
  std::unique_ptr<policy::Model> model_;
  std::unique_ptr<nn::Adam> adam_;
  std::mt19937_64 rng_;
  std::vector<std::unique_ptr<GridWorld>> envs_;
  std::vector<ActorState> actors_;
  std::vector<std::uint64_t> episode_counter_;
  std::vector<double> episode_return_;   // summed over agents
  std::vector<int> episode_collisions_;
  std::vector<bool> fresh_;
  RolloutBuffer buffer_;
  std::deque<bool> window_;
  std::vector<double> finished_returns_;
  double round_reward_ = 0.0;
  long long round_agent_steps_ = 0;
  long long env_steps_ = 0;
  int round_ = 0;
  std::vector<Mat> last_good_;
  std::string abort_path_;
};

std::string log_header();
std::string log_row(const RoundStats& s);

struct TrainOutputs {
  std::string log_path;         // CSV, empty to skip
  std::string checkpoint_path;  // empty to skip
};

// Runs rounds until total_env_steps is reached, writing the CSV log and
// periodic checkpoints.
std::vector<RoundStats> train(const TrainConfig& cfg, const ScenarioSampler& sampler,
                              const policy::ModelConfig& model_cfg, std::uint64_t seed,
                              const TrainOutputs& outputs);

}  // namespace mapf::mappo
