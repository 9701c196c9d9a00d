#include "mapf/rmha_comm.hpp"

#include <cmath>

#include "mapf/common.hpp"

namespace mapf::comm {

CommMode parse_mode(const std::string& name) {
  if (name == "rmha") return CommMode::kRmha;
  if (name == "graph_comm") return CommMode::kGraphComm;
  if (name == "none") return CommMode::kNone;
  throw std::invalid_argument("unknown communication mode '" + name +
                              "' (expected rmha, graph_comm or none)");
}

std::string mode_name(CommMode mode) {
  switch (mode) {
    case CommMode::kRmha:
      return "rmha";
    case CommMode::kGraphComm:
      return "graph_comm";
    case CommMode::kNone:
      return "none";
  }
  return "none";
}

Mat build_mask(const std::vector<int>& dist, int n, double radius, double sentinel) {
  if (static_cast<int>(dist.size()) != n * n) throw ShapeError("distance matrix must be n x n");
  Mat mask(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      bool linked = i == j || static_cast<double>(dist[static_cast<size_t>(i) * n + j]) <= radius;
      mask(i, j) = linked ? 0.0 : sentinel;
    }
  }
  return mask;
}

DistanceEmbedding::DistanceEmbedding(nn::ParamSet& ps, const std::string& name, int buckets,
                                     int dim)
    : buckets_(buckets), dim_(dim) {
  table_ = ps.add(name + ".table", buckets, dim);
  side_q_ = ps.add(name + ".side_query", dim, dim);
  side_k_ = ps.add(name + ".side_key", dim, dim);
}

void DistanceEmbedding::init(std::mt19937_64& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> proj(0.0, 1.0 / std::sqrt(static_cast<double>(dim_)));
  for (Eigen::Index i = 0; i < table_->value.size(); ++i) table_->value.data()[i] = unit(rng);
  for (nn::Param* p : {side_q_, side_k_}) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = proj(rng);
  }
}

DistanceEmbedding::Embedded DistanceEmbedding::embed(const std::vector<int>& dist, int n) const {
  if (static_cast<int>(dist.size()) != n * n) throw ShapeError("distance matrix must be n x n");
  Embedded e;
  Mat uq = table_->value * side_q_->value.transpose();
  Mat uk = table_->value * side_k_->value.transpose();
  for (int i = 0; i < n; ++i) {
    Mat q(n, dim_);
    Mat k(n, dim_);
    for (int j = 0; j < n; ++j) {
      int d = dist[static_cast<size_t>(i) * n + j];
      if (d < 0) throw std::invalid_argument("negative distance");
      int b = distance_bucket(d, buckets_);
      q.row(j) = uq.row(b);
      k.row(j) = uk.row(b);
    }
    e.query_side.push_back(std::move(q));
    e.key_side.push_back(std::move(k));
  }
  return e;
}

void DistanceEmbedding::backward(const std::vector<int>& dist, int n,
                                 const Embedded& grad) const {
  Mat duq = Mat::Zero(buckets_, dim_);
  Mat duk = Mat::Zero(buckets_, dim_);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      int b = distance_bucket(dist[static_cast<size_t>(i) * n + j], buckets_);
      duq.row(b) += grad.query_side[i].row(j);
      duk.row(b) += grad.key_side[i].row(j);
    }
  }
  side_q_->grad.noalias() += duq.transpose() * table_->value;
  side_k_->grad.noalias() += duk.transpose() * table_->value;
  table_->grad.noalias() += duq * side_q_->value + duk * side_k_->value;
}

AttentionLayer::AttentionLayer(nn::ParamSet& ps, const std::string& name, const CommConfig& cfg)
    : cfg_(cfg) {
  if (cfg.heads < 1 || cfg.dim % cfg.heads != 0) {
    throw std::invalid_argument("message dim must be divisible by the head count");
  }
  head_dim_ = cfg.dim / cfg.heads;
  wq_ = nn::Linear(ps, name + ".w_query", cfg.dim, cfg.dim, false);
  wk_ = nn::Linear(ps, name + ".w_key", cfg.dim, cfg.dim, false);
  wv_ = nn::Linear(ps, name + ".w_value", cfg.dim, cfg.dim, false);
  wo_ = nn::Linear(ps, name + ".w_out", cfg.dim, cfg.dim, false);
  gate_ = nn::GruCell(ps, name + ".gate", cfg.dim, cfg.dim);
  ffn_in_ = nn::Linear(ps, name + ".ffn_in", cfg.dim, cfg.ffn_mult * cfg.dim);
  ffn_out_ = nn::Linear(ps, name + ".ffn_out", cfg.ffn_mult * cfg.dim, cfg.dim);
  norm_ = nn::LayerNorm(ps, name + ".norm", cfg.dim);
}

void AttentionLayer::init(std::mt19937_64& rng) {
  wq_.init(rng);
  wk_.init(rng);
  wv_.init(rng);
  wo_.init(rng);
  gate_.init(rng);
  ffn_in_.init(rng);
  ffn_out_.init(rng);
  norm_.init();
}

std::vector<Mat> AttentionLayer::scores(const Mat& x, const Mat& messages,
                                        const AgentGroup& group, const Mat& mask,
                                        const DistanceEmbedding& emb, bool use_distance) const {
  if (x.rows() != messages.rows() || x.cols() != cfg_.dim || messages.cols() != cfg_.dim) {
    throw ShapeError("attention inputs must both be n x dim");
  }
  if (mask.rows() != group.size || mask.cols() != group.size) {
    throw ShapeError("mask does not match the group size");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));
  Mat q0 = wq_.forward(x);
  Mat k0 = wk_.forward(messages);
  Mat pq, pk;
  if (use_distance) {
    pq = wq_.forward(emb.table()->value * emb.side_query()->value.transpose());
    pk = wk_.forward(emb.table()->value * emb.side_key()->value.transpose());
  }
  const int n = group.size;
  std::vector<Mat> out;
  for (int h = 0; h < cfg_.heads; ++h) {
    Mat s(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        Eigen::RowVectorXd qi = q0.block(group.offset + i, h * head_dim_, 1, head_dim_);
        Eigen::RowVectorXd kj = k0.block(group.offset + j, h * head_dim_, 1, head_dim_);
        if (use_distance) {
          int b = distance_bucket(group.d(i, j), emb.buckets());
          qi += pq.block(b, h * head_dim_, 1, head_dim_);
          kj += pk.block(b, h * head_dim_, 1, head_dim_);
        }
        s(i, j) = qi.dot(kj) * scale + mask(i, j);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

Mat AttentionLayer::forward(const Mat& x, const Mat& messages,
                            const std::vector<AgentGroup>& groups, const std::vector<Mat>& masks,
                            const DistanceEmbedding& emb, bool use_distance, Cache* cache) const {
  if (x.rows() != messages.rows() || x.cols() != cfg_.dim || messages.cols() != cfg_.dim) {
    throw ShapeError("attention inputs must both be rows x dim");
  }
  const int dk = head_dim_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Cache local;
  Cache& c = cache ? *cache : local;
  c.use_distance = use_distance;
  c.x_in = x;
  c.q0 = wq_.forward(x);
  c.k0 = wk_.forward(messages);
  c.v = wv_.forward(messages);
  if (use_distance) {
    c.uq = emb.table()->value * emb.side_query()->value.transpose();
    c.uk = emb.table()->value * emb.side_key()->value.transpose();
    c.pq = wq_.forward(c.uq);
    c.pk = wk_.forward(c.uk);
  }
  c.heads = Mat::Zero(x.rows(), cfg_.dim);
  c.alpha.assign(groups.size(), {});
  Eigen::RowVectorXd qi(dk), kj(dk);
  for (size_t g = 0; g < groups.size(); ++g) {
    const AgentGroup& grp = groups[g];
    const int n = grp.size;
    const int off = grp.offset;
    c.alpha[g].resize(cfg_.heads);
    for (int h = 0; h < cfg_.heads; ++h) {
      Mat s(n, n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          qi = c.q0.block(off + i, h * dk, 1, dk);
          kj = c.k0.block(off + j, h * dk, 1, dk);
          if (use_distance) {
            int b = distance_bucket(grp.d(i, j), emb.buckets());
            qi += c.pq.block(b, h * dk, 1, dk);
            kj += c.pk.block(b, h * dk, 1, dk);
          }
          s(i, j) = qi.dot(kj) * scale + masks[g](i, j);
        }
      }
      for (int i = 0; i < n; ++i) {
        double mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp().matrix();
        s.row(i) /= s.row(i).sum();
      }
      c.heads.block(off, h * dk, n, dk).noalias() = s * c.v.block(off, h * dk, n, dk);
      c.alpha[g][h] = std::move(s);
    }
  }
  c.attn = wo_.forward(c.heads);
  Mat gated = gate_.forward(c.attn, x, &c.gru);
  c.ffn_hidden = nn::tanh_forward(ffn_in_.forward(gated));
  Mat resid = gated + ffn_out_.forward(c.ffn_hidden);
  return norm_.forward(resid, &c.ln);
}

Mat AttentionLayer::backward(const Cache& c, const Mat& messages,
                             const std::vector<AgentGroup>& groups, const DistanceEmbedding& emb,
                             const Mat& dout, Mat& dm) const {
  const int dk = head_dim_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const Mat& gated = c.gru.out;
  Mat dres = norm_.backward(c.ln, dout);
  Mat dhid = ffn_out_.backward(c.ffn_hidden, dres);
  Mat dgated = dres + ffn_in_.backward(gated, nn::tanh_backward(c.ffn_hidden, dhid));
  auto [dattn, dx] = gate_.backward(c.gru, dgated);
  Mat dheads = wo_.backward(c.heads, dattn);

  Mat dq0 = Mat::Zero(c.q0.rows(), c.q0.cols());
  Mat dk0 = Mat::Zero(c.k0.rows(), c.k0.cols());
  Mat dv = Mat::Zero(c.v.rows(), c.v.cols());
  Mat dpq, dpk;
  if (c.use_distance) {
    dpq = Mat::Zero(c.pq.rows(), c.pq.cols());
    dpk = Mat::Zero(c.pk.rows(), c.pk.cols());
  }
  Eigen::RowVectorXd qi(dk), kj(dk);
  for (size_t g = 0; g < groups.size(); ++g) {
    const AgentGroup& grp = groups[g];
    const int n = grp.size;
    const int off = grp.offset;
    for (int h = 0; h < cfg_.heads; ++h) {
      const Mat& a = c.alpha[g][h];
      auto dhead = dheads.block(off, h * dk, n, dk);
      auto vh = c.v.block(off, h * dk, n, dk);
      dv.block(off, h * dk, n, dk).noalias() += a.transpose() * dhead;
      Mat da = dhead * vh.transpose();
      for (int i = 0; i < n; ++i) {
        double dot = a.row(i).dot(da.row(i));
        for (int j = 0; j < n; ++j) {
          if (a(i, j) == 0.0) continue;
          double ds = a(i, j) * (da(i, j) - dot) * scale;
          qi = c.q0.block(off + i, h * dk, 1, dk);
          kj = c.k0.block(off + j, h * dk, 1, dk);
          int b = 0;
          if (c.use_distance) {
            b = distance_bucket(grp.d(i, j), emb.buckets());
            qi += c.pq.block(b, h * dk, 1, dk);
            kj += c.pk.block(b, h * dk, 1, dk);
          }
          dq0.block(off + i, h * dk, 1, dk) += ds * kj;
          dk0.block(off + j, h * dk, 1, dk) += ds * qi;
          if (c.use_distance) {
            dpq.block(b, h * dk, 1, dk) += ds * kj;
            dpk.block(b, h * dk, 1, dk) += ds * qi;
          }
        }
      }
    }
  }
  dx += wq_.backward(c.x_in, dq0);
  dm += wk_.backward(messages, dk0);
  dm += wv_.backward(messages, dv);
  if (c.use_distance) {
    Mat duq = wq_.backward(c.uq, dpq);
    Mat duk = wk_.backward(c.uk, dpk);
    nn::Param* table = emb.table();
    emb.side_query()->grad.noalias() += duq.transpose() * table->value;
    emb.side_key()->grad.noalias() += duk.transpose() * table->value;
    table->grad.noalias() += duq * emb.side_query()->value + duk * emb.side_key()->value;
  }
  return dx;
}

CommBlock::CommBlock(nn::ParamSet& ps, const std::string& name, const CommConfig& cfg)
    : cfg_(cfg) {
  if (cfg.layers < 1) throw std::invalid_argument("need at least one attention layer");
  if (cfg.buckets < 1) throw std::invalid_argument("need at least one distance bucket");
  emb_ = DistanceEmbedding(ps, name + ".distance", cfg.buckets, cfg.dim);
  for (int l = 0; l < cfg.layers; ++l) {
    layers_.emplace_back(ps, name + ".layer" + std::to_string(l), cfg);
  }
}

void CommBlock::init(std::mt19937_64& rng) {
  emb_.init(rng);
  for (auto& l : layers_) l.init(rng);
}

Mat CommBlock::forward(const Mat& messages, const std::vector<AgentGroup>& groups, CommMode mode,
                       Cache* cache) const {
  if (messages.cols() != cfg_.dim) throw ShapeError("message matrix width must equal dim");
  Eigen::Index rows = 0;
  for (const auto& g : groups) rows = std::max<Eigen::Index>(rows, g.offset + g.size);
  if (rows != messages.rows()) throw ShapeError("agent groups do not cover the message rows");
  Cache local;
  Cache& c = cache ? *cache : local;
  c.mode = mode;
  c.valid = true;
  c.inputs.clear();
  c.layers.clear();
  if (mode == CommMode::kNone) return Mat::Zero(messages.rows(), messages.cols());
  c.masks.clear();
  for (const auto& g : groups) {
    c.masks.push_back(build_mask(g.dist, g.size, cfg_.radius, cfg_.mask_sentinel));
  }
  c.layers.resize(layers_.size());
  Mat x = messages;
  for (size_t l = 0; l < layers_.size(); ++l) {
    c.inputs.push_back(x);
    x = layers_[l].forward(x, messages, groups, c.masks, emb_, mode == CommMode::kRmha,
                           &c.layers[l]);
    if (!x.allFinite()) {
      throw NonFiniteError("non-finite activation in communication layer " + std::to_string(l),
                           static_cast<int>(l));
    }
  }
  return x;
}

Mat CommBlock::backward(const Cache& cache, const Mat& messages,
                        const std::vector<AgentGroup>& groups, const Mat& dout) const {
  if (!cache.valid) throw std::logic_error("communication backward called without a forward cache");
  Mat dm = Mat::Zero(messages.rows(), messages.cols());
  if (cache.mode == CommMode::kNone) return dm;
  Mat dx = dout;
  for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
    dx = layers_[l].backward(cache.layers[l], messages, groups, emb_, dx, dm);
  }
  dm += dx;
  return dm;
}

}  // namespace mapf::comm
