#include "mapf/policy_net.hpp"

#include <sstream>

#include "mapf/config.hpp"

namespace mapf::policy {

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  out << "fov = " << policy.fov << '\n'
      << "spatial_hidden = " << policy.spatial_hidden << '\n'
      << "vec_hidden = " << policy.vec_hidden << '\n'
      << "hidden = " << policy.hidden << '\n'
      << "torso = " << policy.torso << '\n'
      << "msg_dim = " << comm.dim << '\n'
      << "heads = " << comm.heads << '\n'
      << "layers = " << comm.layers << '\n'
      << "buckets = " << comm.buckets << '\n'
      << "ffn_mult = " << comm.ffn_mult << '\n'
      << "mask_radius = " << comm.radius << '\n'
      << "comm_mode = " << comm::mode_name(mode) << '\n';
  return out.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  KeyValueConfig kv = KeyValueConfig::parse(text);
  ModelConfig c;
  c.policy.fov = kv.get_int("fov", c.policy.fov);
  c.policy.spatial_hidden = kv.get_int("spatial_hidden", c.policy.spatial_hidden);
  c.policy.vec_hidden = kv.get_int("vec_hidden", c.policy.vec_hidden);
  c.policy.hidden = kv.get_int("hidden", c.policy.hidden);
  c.policy.torso = kv.get_int("torso", c.policy.torso);
  c.comm.dim = kv.get_int("msg_dim", c.comm.dim);
  c.comm.heads = kv.get_int("heads", c.comm.heads);
  c.comm.layers = kv.get_int("layers", c.comm.layers);
  c.comm.buckets = kv.get_int("buckets", c.comm.buckets);
  c.comm.ffn_mult = kv.get_int("ffn_mult", c.comm.ffn_mult);
  c.comm.radius = kv.get_double("mask_radius", c.comm.radius);
  c.mode = comm::parse_mode(kv.get_string("comm_mode", comm::mode_name(c.mode)));
  return c;
}

Mat pack_observations(const std::vector<Observation>& obs) {
  if (obs.empty()) return Mat(0, 0);
  const int fov = obs.front().fov;
  const int spatial = kObservationChannels * fov * fov;
  Mat out(static_cast<Eigen::Index>(obs.size()), spatial + kObservationScalars);
  for (size_t r = 0; r < obs.size(); ++r) {
    const Observation& o = obs[r];
    if (o.fov != fov || static_cast<int>(o.maps.size()) != spatial) {
      throw ShapeError("observations in a batch must share the field of view");
    }
    for (int k = 0; k < spatial; ++k) out(r, k) = o.maps[k];
    for (int k = 0; k < kObservationScalars; ++k) out(r, spatial + k) = o.vec[k];
  }
  return out;
}

Encoder::Encoder(nn::ParamSet& ps, const std::string& name, const PolicyConfig& cfg)
    : cfg_(cfg), spatial_dim_(kObservationChannels * cfg.fov * cfg.fov) {
  spatial1_ = nn::Linear(ps, name + ".spatial1", spatial_dim_, cfg.spatial_hidden);
  spatial2_ = nn::Linear(ps, name + ".spatial2", cfg.spatial_hidden, cfg.spatial_hidden);
  scalar_ = nn::Linear(ps, name + ".scalar", kObservationScalars, cfg.vec_hidden);
  fuse_ = nn::Linear(ps, name + ".fuse", cfg.spatial_hidden + cfg.vec_hidden, cfg.hidden);
  cell_ = nn::GruCell(ps, name + ".cell", cfg.hidden, cfg.hidden);
}

void Encoder::init(std::mt19937_64& rng) {
  spatial1_.init(rng);
  spatial2_.init(rng);
  scalar_.init(rng);
  fuse_.init(rng);
  cell_.init(rng);
}

Mat Encoder::forward(const Mat& obs, const Mat& hidden, Cache* cache) const {
  if (obs.cols() != spatial_dim_ + kObservationScalars) {
    throw ShapeError("observation width does not match the encoder");
  }
  if (hidden.rows() != obs.rows() || hidden.cols() != cfg_.hidden) {
    throw ShapeError("hidden state must be rows x hidden");
  }
  Cache local;
  Cache& c = cache ? *cache : local;
  c.spatial_in = obs.leftCols(spatial_dim_);
  c.vec_in = obs.rightCols(kObservationScalars);
  c.s1 = nn::tanh_forward(spatial1_.forward(c.spatial_in));
  c.s2 = nn::tanh_forward(spatial2_.forward(c.s1));
  c.v1 = nn::tanh_forward(scalar_.forward(c.vec_in));
  c.fused_in.resize(obs.rows(), cfg_.spatial_hidden + cfg_.vec_hidden);
  c.fused_in << c.s2, c.v1;
  c.fused = nn::tanh_forward(fuse_.forward(c.fused_in));
  c.valid = true;
  return cell_.forward(c.fused, hidden, &c.gru);
}

Mat Encoder::backward(const Cache& c, const Mat& dnew_hidden) const {
  if (!c.valid) throw std::logic_error("encoder backward called without a forward cache");
  auto [dfused, dh] = cell_.backward(c.gru, dnew_hidden);
  Mat dfin = fuse_.backward(c.fused_in, nn::tanh_backward(c.fused, dfused));
  Mat ds2 = dfin.leftCols(cfg_.spatial_hidden);
  Mat dv1 = dfin.rightCols(cfg_.vec_hidden);
  scalar_.backward(c.vec_in, nn::tanh_backward(c.v1, dv1));
  Mat ds1 = spatial2_.backward(c.s1, nn::tanh_backward(c.s2, ds2));
  spatial1_.backward(c.spatial_in, nn::tanh_backward(c.s1, ds1));
  return dh;
}

HeadOutputs HeadOutputs::zeros_like(const HeadOutputs& o) {
  HeadOutputs z;
  z.logits = Mat::Zero(o.logits.rows(), o.logits.cols());
  z.v_ext = Mat::Zero(o.v_ext.rows(), o.v_ext.cols());
  z.v_int = Mat::Zero(o.v_int.rows(), o.v_int.cols());
  z.message = Mat::Zero(o.message.rows(), o.message.cols());
  z.block_logit = Mat::Zero(o.block_logit.rows(), o.block_logit.cols());
  return z;
}

Mat softmax_rows(const Mat& logits) {
  Mat p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    double mx = logits.row(r).maxCoeff();
    p.row(r) = (logits.row(r).array() - mx).exp().matrix();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

Heads::Heads(nn::ParamSet& ps, const std::string& name, int hidden, int msg_dim, int torso)
    : hidden_(hidden), msg_dim_(msg_dim) {
  torso_ = nn::Linear(ps, name + ".torso", hidden + msg_dim, torso);
  policy_ = nn::Linear(ps, name + ".policy", torso, kNumActions);
  value_ext_ = nn::Linear(ps, name + ".value_ext", torso, 1);
  value_int_ = nn::Linear(ps, name + ".value_int", torso, 1);
  message_ = nn::Linear(ps, name + ".message", torso, msg_dim);
  blocking_ = nn::Linear(ps, name + ".blocking", torso, 1);
}

void Heads::init(std::mt19937_64& rng) {
  torso_.init(rng);
  // Near-uniform initial policy.
  policy_.init(rng, 0.01);
  value_ext_.init(rng);
  value_int_.init(rng);
  message_.init(rng);
  blocking_.init(rng);
}

HeadOutputs Heads::forward(const Mat& hidden, const Mat& comm, Cache* cache) const {
  if (hidden.cols() != hidden_ || comm.cols() != msg_dim_ || hidden.rows() != comm.rows()) {
    throw ShapeError("head inputs have the wrong shape");
  }
  Cache local;
  Cache& c = cache ? *cache : local;
  c.input.resize(hidden.rows(), hidden_ + msg_dim_);
  c.input << hidden, comm;
  c.torso = nn::tanh_forward(torso_.forward(c.input));
  HeadOutputs o;
  o.logits = policy_.forward(c.torso);
  o.v_ext = value_ext_.forward(c.torso);
  o.v_int = value_int_.forward(c.torso);
  c.message = nn::tanh_forward(message_.forward(c.torso));
  o.message = c.message;
  o.block_logit = blocking_.forward(c.torso);
  c.valid = true;
  return o;
}

std::pair<Mat, Mat> Heads::backward(const Cache& c, const HeadOutputs& g) const {
  if (!c.valid) throw std::logic_error("heads backward called without a forward cache");
  Mat dt = policy_.backward(c.torso, g.logits);
  dt += value_ext_.backward(c.torso, g.v_ext);
  dt += value_int_.backward(c.torso, g.v_int);
  dt += message_.backward(c.torso, nn::tanh_backward(c.message, g.message));
  dt += blocking_.backward(c.torso, g.block_logit);
  Mat din = torso_.backward(c.input, nn::tanh_backward(c.torso, dt));
  return {din.leftCols(hidden_), din.rightCols(msg_dim_)};
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.policy.fov < 1 || cfg.policy.fov % 2 == 0) {
    throw std::invalid_argument("field of view must be a positive odd number");
  }
  encoder_ = Encoder(params_, "encoder", cfg.policy);
  comm_ = comm::CommBlock(params_, "comm", cfg.comm);
  heads_ = Heads(params_, "heads", cfg.policy.hidden, cfg.comm.dim, cfg.policy.torso);
  // Same seed, same weights for every communication mode.
  std::mt19937_64 rng(seed);
  encoder_.init(rng);
  comm_.init(rng);
  heads_.init(rng);
}

StepResult Model::forward(const StepBatch& batch, StepCache* cache) const {
  StepCache local;
  StepCache& c = cache ? *cache : local;
  StepResult r;
  r.hidden = encoder_.forward(batch.obs, batch.hidden, &c.encoder);
  r.comm = comm_.forward(batch.messages, batch.groups, cfg_.mode, &c.comm);
  if (zero_comm_) r.comm.setZero();
  r.heads = heads_.forward(r.hidden, r.comm, &c.heads);
  c.valid = true;
  return r;
}

InputGrads Model::backward(const StepCache& c, const StepBatch& batch, const HeadOutputs& grad,
                           const Mat* dhidden_out) const {
  if (!c.valid) throw std::logic_error("model backward called without a forward cache");
  auto [dh, dcomm] = heads_.backward(c.heads, grad);
  if (dhidden_out) dh += *dhidden_out;
  if (zero_comm_) dcomm.setZero();
  InputGrads g;
  g.messages = comm_.backward(c.comm, batch.messages, batch.groups, dcomm);
  g.hidden = encoder_.backward(c.encoder, dh);
  return g;
}

void Model::save(const std::string& path) const { nn::save_checkpoint(params_, cfg_.to_text(), path); }

void Model::load(const std::string& path) { nn::load_checkpoint(params_, cfg_.to_text(), path); }

std::vector<comm::AgentGroup> make_groups(const std::vector<std::vector<Cell>>& positions) {
  std::vector<comm::AgentGroup> groups;
  int offset = 0;
  for (const auto& pos : positions) {
    comm::AgentGroup g;
    g.offset = offset;
    g.size = static_cast<int>(pos.size());
    g.dist.resize(pos.size() * pos.size());
    for (size_t i = 0; i < pos.size(); ++i) {
      for (size_t j = 0; j < pos.size(); ++j) g.dist[i * pos.size() + j] = manhattan(pos[i], pos[j]);
    }
    offset += g.size;
    groups.push_back(std::move(g));
  }
  return groups;
}

}  // namespace mapf::policy
