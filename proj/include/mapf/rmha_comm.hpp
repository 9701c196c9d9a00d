#pragma once

#include <random>
#include <string>
#include <vector>

#include "mapf/nn.hpp"

namespace mapf::comm {

using nn::Mat;

enum class CommMode { kRmha, kGraphComm, kNone };

CommMode parse_mode(const std::string& name);
std::string mode_name(CommMode mode);

struct CommConfig {
  int dim = 64;
  int heads = 4;
  int layers = 2;
  int buckets = 16;
  int ffn_mult = 4;
  double radius = 40.0;
  double mask_sentinel = -1e9;
};

// Messages produced at environment step `step_tag`; consumed one step later.
struct MessageMatrix {
  Mat values;
  int step_tag = 0;
};

// The agents of one environment occupy rows [offset, offset + size) of every
// batched matrix; `dist` is their size x size Manhattan matrix (row-major).
struct AgentGroup {
  int offset = 0;
  int size = 0;
  std::vector<int> dist;

  int d(int i, int j) const { return dist[static_cast<size_t>(i) * size + j]; }
};

// Additive mask: 0 where i == j or dist(i, j) <= radius, `sentinel` elsewhere.
Mat build_mask(const std::vector<int>& dist, int n, double radius, double sentinel);

inline int distance_bucket(int distance, int buckets) {
  return distance < buckets - 1 ? distance : buckets - 1;
}

// Learned embedding of bucketed Manhattan distances with separate query-side
// and key-side projections (the pairwise relation shifts of the attention).
class DistanceEmbedding {
 public:
  struct Embedded {
    std::vector<Mat> query_side;  // [i] -> (n x dim), row j is the (i, j) shift
    std::vector<Mat> key_side;
  };

  DistanceEmbedding() = default;
  DistanceEmbedding(nn::ParamSet& ps, const std::string& name, int buckets, int dim);

  Embedded embed(const std::vector<int>& dist, int n) const;
  void backward(const std::vector<int>& dist, int n, const Embedded& grad) const;

  void init(std::mt19937_64& rng);
  int buckets() const { return buckets_; }
  nn::Param* table() const { return table_; }
  nn::Param* side_query() const { return side_q_; }
  nn::Param* side_key() const { return side_k_; }

 private:
  nn::Param* table_ = nullptr;
  nn::Param* side_q_ = nullptr;
  nn::Param* side_k_ = nullptr;
  int buckets_ = 0;
  int dim_ = 0;
};

// One encoder layer: relation-shifted multi-head attention whose queries come
// from the layer input and whose keys/values come from the incoming message
// matrix, then a GRU gate (hidden = layer input) and a residual FFN with
// layer normalisation.
class AttentionLayer {
 public:
  struct Cache {
    Mat x_in;
    Mat q0, k0, v;
    Mat uq, uk, pq, pk;
    std::vector<std::vector<Mat>> alpha;  // [group][head] -> n x n
    Mat heads;
    Mat attn;
    nn::GruCell::Cache gru;
    Mat ffn_hidden;
    nn::LayerNorm::Cache ln;
    bool use_distance = false;
  };

  AttentionLayer() = default;
  AttentionLayer(nn::ParamSet& ps, const std::string& name, const CommConfig& cfg);

  Mat forward(const Mat& x, const Mat& messages, const std::vector<AgentGroup>& groups,
              const std::vector<Mat>& masks, const DistanceEmbedding& emb, bool use_distance,
              Cache* cache) const;
  // Accumulates parameter grads; returns dL/dx and adds dL/dmessages into dm.
  Mat backward(const Cache& cache, const Mat& messages, const std::vector<AgentGroup>& groups,
               const DistanceEmbedding& emb, const Mat& dout, Mat& dm) const;

  // Pre-softmax scores (mask included) for a single group, one n x n matrix
  // per head.
  std::vector<Mat> scores(const Mat& x, const Mat& messages, const AgentGroup& group,
                          const Mat& mask, const DistanceEmbedding& emb,
                          bool use_distance) const;

  void init(std::mt19937_64& rng);

  nn::Param* wq() const { return wq_.weight(); }
  nn::Param* wk() const { return wk_.weight(); }
  nn::Param* wv() const { return wv_.weight(); }
  nn::Param* wo() const { return wo_.weight(); }

 private:
  CommConfig cfg_;
  int head_dim_ = 0;
  nn::Linear wq_, wk_, wv_, wo_;
  nn::GruCell gate_;
  nn::Linear ffn_in_, ffn_out_;
  nn::LayerNorm norm_;
};

class CommBlock {
 public:
  struct Cache {
    CommMode mode = CommMode::kNone;
    std::vector<Mat> masks;
    std::vector<Mat> inputs;  // input of each layer
    std::vector<AttentionLayer::Cache> layers;
    bool valid = false;
  };

  CommBlock() = default;
  CommBlock(nn::ParamSet& ps, const std::string& name, const CommConfig& cfg);

  // Returns the communicated message matrix (rows aligned with `messages`).
  // Mode kNone short-circuits to zeros. Throws NonFiniteError naming the
  // layer when an intermediate becomes non-finite.
  Mat forward(const Mat& messages, const std::vector<AgentGroup>& groups, CommMode mode,
              Cache* cache) const;
  // Accumulates parameter grads and returns dL/dmessages. Throws
  // std::logic_error when the cache was not filled by forward().
  Mat backward(const Cache& cache, const Mat& messages, const std::vector<AgentGroup>& groups,
               const Mat& dout) const;

  void init(std::mt19937_64& rng);

  const CommConfig& config() const { return cfg_; }
  const DistanceEmbedding& embedding() const { return emb_; }
  const AttentionLayer& layer(int l) const { return layers_[l]; }
  int num_layers() const { return static_cast<int>(layers_.size()); }

 private:
  CommConfig cfg_;
  DistanceEmbedding emb_;
  std::vector<AttentionLayer> layers_;
};

}  // namespace mapf::comm
