#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mapf/grid_world.hpp"
#include "mapf/nn.hpp"
#include "mapf/rmha_comm.hpp"

namespace mapf::policy {

using nn::Mat;

struct PolicyConfig {
  int fov = 3;
  int spatial_hidden = 128;
  int vec_hidden = 32;
  int hidden = 128;  // recurrent state width
  int torso = 128;
};

struct ModelConfig {
  PolicyConfig policy;
  comm::CommConfig comm;
  comm::CommMode mode = comm::CommMode::kRmha;

  int obs_dim() const { return kObservationChannels * policy.fov * policy.fov + kObservationScalars; }
  // Canonical text of the architecture; hashed into checkpoints.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
};

// Flattens observations row-wise: channel maps first, then the scalars.
Mat pack_observations(const std::vector<Observation>& obs);

// Spatial MLP over the flattened FOV, scalar encoder, fusion layer and a gated
// recurrent cell. The new hidden state is the per-agent feature vector.
class Encoder {
 public:
  struct Cache {
    Mat spatial_in, s1, s2, vec_in, v1, fused_in, fused;
    nn::GruCell::Cache gru;
    bool valid = false;
  };

  Encoder() = default;
  Encoder(nn::ParamSet& ps, const std::string& name, const PolicyConfig& cfg);

  Mat forward(const Mat& obs, const Mat& hidden, Cache* cache) const;
  // Returns dL/dhidden_in.
  Mat backward(const Cache& cache, const Mat& dnew_hidden) const;
  void init(std::mt19937_64& rng);

 private:
  PolicyConfig cfg_;
  int spatial_dim_ = 0;
  nn::Linear spatial1_, spatial2_, scalar_, fuse_;
  nn::GruCell cell_;
};

struct HeadOutputs {
  Mat logits;       // R x 5
  Mat v_ext;        // R x 1
  Mat v_int;        // R x 1
  Mat message;      // R x dim
  Mat block_logit;  // R x 1

  static HeadOutputs zeros_like(const HeadOutputs& o);
};

Mat softmax_rows(const Mat& logits);

// Shared torso over [hidden || communicated message] feeding the policy,
// two value heads, the next-message head and the blocking head.
class Heads {
 public:
  struct Cache {
    Mat input;
    Mat torso;
    Mat message;
    bool valid = false;
  };

  Heads() = default;
  Heads(nn::ParamSet& ps, const std::string& name, int hidden, int msg_dim, int torso);

  HeadOutputs forward(const Mat& hidden, const Mat& comm, Cache* cache) const;
  // Returns {dL/dhidden, dL/dcomm}.
  std::pair<Mat, Mat> backward(const Cache& cache, const HeadOutputs& grad) const;
  void init(std::mt19937_64& rng);

 private:
  int hidden_ = 0;
  int msg_dim_ = 0;
  nn::Linear torso_, policy_, value_ext_, value_int_, message_, blocking_;
};

struct StepBatch {
  Mat obs;       // R x obs_dim
  Mat hidden;    // R x hidden, recurrent state from the previous step
  Mat messages;  // R x dim, rows of the previous step's message matrix
  std::vector<comm::AgentGroup> groups;
};

struct StepResult {
  Mat hidden;  // new recurrent state (= features)
  Mat comm;    // communicated messages fed to the heads
  HeadOutputs heads;
};

struct StepCache {
  Encoder::Cache encoder;
  comm::CommBlock::Cache comm;
  Heads::Cache heads;
  bool valid = false;
};

struct InputGrads {
  Mat hidden;
  Mat messages;
};

// encode -> communicate -> heads for every agent of every group. All agents
// share the parameters; an agent's recurrent state only enters its own row.
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  StepResult forward(const StepBatch& batch, StepCache* cache) const;
  // `dhidden_out`, when given, is the gradient flowing into the new hidden
  // state from a later step. Throws std::logic_error without a forward cache.
  InputGrads backward(const StepCache& cache, const StepBatch& batch, const HeadOutputs& grad,
                      const Mat* dhidden_out = nullptr) const;

  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }
  comm::CommMode mode() const { return cfg_.mode; }
  void set_mode(comm::CommMode mode) { cfg_.mode = mode; }
  // Replaces the communicated messages by zeros after the block runs.
  void set_zero_comm(bool on) { zero_comm_ = on; }

  const Encoder& encoder() const { return encoder_; }
  const comm::CommBlock& comm_block() const { return comm_; }
  const Heads& heads() const { return heads_; }

  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  ModelConfig cfg_;
  nn::ParamSet params_;
  Encoder encoder_;
  comm::CommBlock comm_;
  Heads heads_;
  bool zero_comm_ = false;
};

// Groups for consecutive environments of `agents_per_env` agents each, with
// Manhattan distances from `positions` (one vector per environment).
std::vector<comm::AgentGroup> make_groups(const std::vector<std::vector<Cell>>& positions);

}  // namespace mapf::policy
