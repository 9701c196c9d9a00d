#include "mapf/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "mapf/mappo.hpp"
#include "mapf/policy_net.hpp"
#include "mapf/rmha_comm.hpp"

namespace mapf::gradcheck {

using nn::Mat;

double relative_error(double analytic, double numeric, double floor) {
  double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

SuiteReport check_params(const std::string& suite, nn::ParamSet& ps,
                         const std::function<double()>& loss,
                         const std::function<void()>& backward, const Options& opt,
                         const std::vector<std::string>& only) {
  auto t0 = std::chrono::steady_clock::now();
  SuiteReport rep;
  rep.suite = suite;
  backward();
  std::vector<Mat> analytic;
  for (const nn::Param* p : ps.params()) analytic.push_back(p->grad);
  std::mt19937_64 rng(opt.seed);
  for (size_t k = 0; k < ps.params().size(); ++k) {
    nn::Param* p = ps.params()[k];
    if (!only.empty() && std::find(only.begin(), only.end(), p->name) == only.end()) continue;
    TensorReport tr;
    tr.name = p->name;
    std::vector<Eigen::Index> entries(static_cast<size_t>(p->value.size()));
    for (Eigen::Index e = 0; e < p->value.size(); ++e) entries[e] = e;
    if (opt.max_entries > 0 && static_cast<int>(entries.size()) > opt.max_entries) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(opt.max_entries);
    }
    for (Eigen::Index e : entries) {
      double& w = p->value.data()[e];
      const double saved = w;
      w = saved + opt.step;
      double up = loss();
      w = saved - opt.step;
      double down = loss();
      w = saved;
      double numeric = (up - down) / (2.0 * opt.step);
      double err = relative_error(analytic[k].data()[e], numeric, opt.floor);
      tr.max_rel_err = std::max(tr.max_rel_err, err);
      ++tr.checked;
    }
    tr.pass = tr.max_rel_err < opt.tolerance;
    rep.pass = rep.pass && tr.pass;
    rep.tensors.push_back(tr);
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

namespace {

constexpr int kAgents = 4;
constexpr int kDim = 8;

comm::CommConfig small_comm() {
  comm::CommConfig c;
  c.dim = kDim;
  c.heads = 2;
  c.layers = 2;
  c.buckets = 4;  // small so that the clamp to the last bucket is exercised
  c.radius = 3;   // some pairs fall outside and get masked
  return c;
}

policy::ModelConfig small_model() {
  policy::ModelConfig m;
  m.policy.fov = 3;
  m.policy.spatial_hidden = 8;
  m.policy.vec_hidden = 4;
  m.policy.hidden = 8;
  m.policy.torso = 8;
  m.comm = small_comm();
  return m;
}

Mat random_mat(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

// Two environments (4 and 3 agents) with distinct random positions on a 6x6 board.
std::vector<comm::AgentGroup> random_groups(std::mt19937_64& rng) {
  std::vector<std::vector<Cell>> positions;
  for (int n : {kAgents, 3}) {
    std::vector<int> cells(36);
    for (int i = 0; i < 36; ++i) cells[i] = i;
    std::shuffle(cells.begin(), cells.end(), rng);
    std::vector<Cell> pos;
    for (int i = 0; i < n; ++i) pos.push_back({cells[i] % 6, cells[i] / 6});
    positions.push_back(pos);
  }
  return policy::make_groups(positions);
}

// Binary channel maps and bounded scalars, like real observations.
Mat random_obs(int rows, int fov, std::mt19937_64& rng) {
  const int spatial = kObservationChannels * fov * fov;
  Mat m(rows, spatial + kObservationScalars);
  std::bernoulli_distribution bit(0.3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int r = 0; r < rows; ++r) {
    for (int k = 0; k < spatial; ++k) m(r, k) = bit(rng) ? 1.0 : 0.0;
    for (int k = 0; k < kObservationScalars; ++k) m(r, spatial + k) = u(rng);
  }
  return m;
}

double weighted_sum(const policy::HeadOutputs& o, const policy::HeadOutputs& w) {
  return (o.logits.array() * w.logits.array()).sum() + (o.v_ext.array() * w.v_ext.array()).sum() +
         (o.v_int.array() * w.v_int.array()).sum() +
         (o.message.array() * w.message.array()).sum() +
         (o.block_logit.array() * w.block_logit.array()).sum();
}

policy::HeadOutputs random_head_weights(int rows, int dim, std::mt19937_64& rng) {
  policy::HeadOutputs w;
  w.logits = random_mat(rows, kNumActions, rng);
  w.v_ext = random_mat(rows, 1, rng);
  w.v_int = random_mat(rows, 1, rng);
  w.message = random_mat(rows, dim, rng);
  w.block_logit = random_mat(rows, 1, rng);
  return w;
}

SuiteReport embedding_suite(const Options& opt, std::mt19937_64& rng) {
  nn::ParamSet ps;
  comm::DistanceEmbedding emb(ps, "distance", 4, kDim);
  emb.init(rng);
  auto groups = random_groups(rng);
  const auto& g = groups.front();
  comm::DistanceEmbedding::Embedded w;
  for (int i = 0; i < g.size; ++i) {
    w.query_side.push_back(random_mat(g.size, kDim, rng));
    w.key_side.push_back(random_mat(g.size, kDim, rng));
  }
  auto loss = [&] {
    auto e = emb.embed(g.dist, g.size);
    double s = 0.0;
    for (int i = 0; i < g.size; ++i) {
      s += (e.query_side[i].array() * w.query_side[i].array()).sum();
      s += (e.key_side[i].array() * w.key_side[i].array()).sum();
    }
    return s;
  };
  auto backward = [&] {
    ps.zero_grad();
    emb.backward(g.dist, g.size, w);
  };
  return check_params("distance_embedding", ps, loss, backward, opt);
}

SuiteReport layer_suite(const Options& opt, std::mt19937_64& rng) {
  nn::ParamSet ps;
  comm::CommConfig cfg = small_comm();
  comm::DistanceEmbedding emb(ps, "distance", cfg.buckets, cfg.dim);
  comm::AttentionLayer layer(ps, "layer", cfg);
  emb.init(rng);
  layer.init(rng);
  auto groups = random_groups(rng);
  const int rows = groups.back().offset + groups.back().size;
  Mat x = random_mat(rows, cfg.dim, rng);
  Mat m = random_mat(rows, cfg.dim, rng);
  Mat w = random_mat(rows, cfg.dim, rng);
  std::vector<Mat> masks;
  for (const auto& g : groups) masks.push_back(comm::build_mask(g.dist, g.size, cfg.radius, cfg.mask_sentinel));
  auto loss = [&] {
    return (layer.forward(x, m, groups, masks, emb, true, nullptr).array() * w.array()).sum();
  };
  auto backward = [&] {
    ps.zero_grad();
    comm::AttentionLayer::Cache c;
    layer.forward(x, m, groups, masks, emb, true, &c);
    Mat dm = Mat::Zero(m.rows(), m.cols());
    layer.backward(c, m, groups, emb, w, dm);
  };
  return check_params("attention_layer", ps, loss, backward, opt);
}

SuiteReport block_suite(const Options& opt, std::mt19937_64& rng, comm::CommMode mode) {
  nn::ParamSet ps;
  comm::CommConfig cfg = small_comm();
  comm::CommBlock block(ps, "comm", cfg);
  block.init(rng);
  auto groups = random_groups(rng);
  const int rows = groups.back().offset + groups.back().size;
  Mat m = random_mat(rows, cfg.dim, rng);
  Mat w = random_mat(rows, cfg.dim, rng);
  auto loss = [&] { return (block.forward(m, groups, mode, nullptr).array() * w.array()).sum(); };
  auto backward = [&] {
    ps.zero_grad();
    comm::CommBlock::Cache c;
    block.forward(m, groups, mode, &c);
    block.backward(c, m, groups, w);
  };
  return check_params("comm_block_" + comm::mode_name(mode), ps, loss, backward, opt);
}

SuiteReport encoder_suite(const Options& opt, std::mt19937_64& rng) {
  nn::ParamSet ps;
  policy::PolicyConfig pc = small_model().policy;
  policy::Encoder enc(ps, "encoder", pc);
  enc.init(rng);
  Mat obs = random_obs(kAgents, pc.fov, rng);
  Mat h = random_mat(kAgents, pc.hidden, rng, 0.5);
  Mat w = random_mat(kAgents, pc.hidden, rng);
  auto loss = [&] { return (enc.forward(obs, h, nullptr).array() * w.array()).sum(); };
  auto backward = [&] {
    ps.zero_grad();
    policy::Encoder::Cache c;
    enc.forward(obs, h, &c);
    enc.backward(c, w);
  };
  return check_params("encoder", ps, loss, backward, opt);
}

SuiteReport heads_suite(const Options& opt, std::mt19937_64& rng) {
  nn::ParamSet ps;
  policy::ModelConfig mc = small_model();
  policy::Heads heads(ps, "heads", mc.policy.hidden, mc.comm.dim, mc.policy.torso);
  heads.init(rng);
  Mat h = random_mat(kAgents, mc.policy.hidden, rng, 0.5);
  Mat c = random_mat(kAgents, mc.comm.dim, rng);
  auto w = random_head_weights(kAgents, mc.comm.dim, rng);
  auto loss = [&] { return weighted_sum(heads.forward(h, c, nullptr), w); };
  auto backward = [&] {
    ps.zero_grad();
    policy::Heads::Cache cache;
    heads.forward(h, c, &cache);
    heads.backward(cache, w);
  };
  return check_params("heads", ps, loss, backward, opt);
}

// Two chained steps: the second consumes the first step's hidden state and
// message matrix, so recurrent and message gradients are exercised too.
SuiteReport model_suite(const Options& opt, std::mt19937_64& rng, comm::CommMode mode) {
  policy::ModelConfig mc = small_model();
  mc.mode = mode;
  policy::Model model(mc, rng());
  std::vector<std::vector<Cell>> pos1 = {{{0, 0}, {2, 1}, {4, 4}}};
  std::vector<std::vector<Cell>> pos2 = {{{1, 0}, {2, 2}, {4, 3}}};
  const int n = 3;
  policy::StepBatch b1;
  b1.obs = random_obs(n, mc.policy.fov, rng);
  b1.hidden = random_mat(n, mc.policy.hidden, rng, 0.5);
  b1.messages = random_mat(n, mc.comm.dim, rng, 0.5);
  b1.groups = policy::make_groups(pos1);
  Mat obs2 = random_obs(n, mc.policy.fov, rng);
  auto w = random_head_weights(n, mc.comm.dim, rng);
  auto step2 = [&](const policy::StepResult& r1) {
    policy::StepBatch b2;
    b2.obs = obs2;
    b2.hidden = r1.hidden;
    b2.messages = r1.heads.message;
    b2.groups = policy::make_groups(pos2);
    return b2;
  };
  auto loss = [&] {
    auto r1 = model.forward(b1, nullptr);
    auto r2 = model.forward(step2(r1), nullptr);
    return weighted_sum(r2.heads, w);
  };
  auto backward = [&] {
    model.params().zero_grad();
    policy::StepCache c1, c2;
    auto r1 = model.forward(b1, &c1);
    auto b2 = step2(r1);
    model.forward(b2, &c2);
    policy::InputGrads g = model.backward(c2, b2, w);
    policy::HeadOutputs g1 = policy::HeadOutputs::zeros_like(r1.heads);
    g1.message = g.messages;
    model.backward(c1, b1, g1, &g.hidden);
  };
  return check_params("model_two_step_" + comm::mode_name(mode), model.params(), loss, backward,
                      opt);
}

SuiteReport ppo_suite(const Options& opt, std::mt19937_64& rng) {
  policy::ModelConfig mc = small_model();
  policy::Model model(mc, rng());
  std::vector<std::vector<Cell>> pos = {{{0, 0}, {1, 1}, {2, 0}, {5, 5}}};
  policy::StepBatch b;
  b.obs = random_obs(kAgents, mc.policy.fov, rng);
  b.hidden = random_mat(kAgents, mc.policy.hidden, rng, 0.5);
  b.messages = random_mat(kAgents, mc.comm.dim, rng, 0.5);
  b.groups = policy::make_groups(pos);
  mappo::TrainConfig tc;
  tc.entropy_coef = 0.05;
  tc.blocking_coef = 0.5;
  auto r = model.forward(b, nullptr);
  Mat p = policy::softmax_rows(r.heads.logits);
  mappo::LossBatch lb;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  // Ratios at exp(+-0.05) stay inside the clip range, exp(+-0.6) fall outside;
  // neither sits on the kink.
  const double offsets[kAgents] = {0.05, -0.05, 0.6, -0.6};
  // Two rows draw from a restricted action set.
  const std::uint8_t masks[kAgents] = {kAllActions, 0b10011, 0b10100, kAllActions};
  for (int i = 0; i < kAgents; ++i) {
    int a = i % kNumActions;
    double mass = 0.0;
    for (int k = 0; k < kNumActions; ++k) {
      if (masks[i] >> k & 1u) mass += p(i, k);
    }
    lb.actions.push_back(a);
    lb.allowed.push_back(masks[i]);
    lb.old_logp.push_back(std::log(p(i, a) / mass) + offsets[i]);
    lb.advantages.push_back(u(rng));
    lb.returns_ext.push_back(u(rng));
    lb.returns_int.push_back(u(rng));
    lb.blocking_target.push_back(i % 2);
  }
  auto loss = [&] { return mappo::ppo_loss(model.forward(b, nullptr).heads, lb, tc).total; };
  auto backward = [&] {
    model.params().zero_grad();
    policy::StepCache c;
    auto res = model.forward(b, &c);
    auto lt = mappo::ppo_loss(res.heads, lb, tc);
    model.backward(c, b, lt.grad);
  };
  return check_params("ppo_loss", model.params(), loss, backward, opt);
}

}  // namespace

std::vector<SuiteReport> run_all(const Options& opt) {
  std::mt19937_64 rng(opt.seed);
  std::vector<SuiteReport> out;
  out.push_back(embedding_suite(opt, rng));
  out.push_back(layer_suite(opt, rng));
  out.push_back(block_suite(opt, rng, comm::CommMode::kRmha));
  out.push_back(block_suite(opt, rng, comm::CommMode::kGraphComm));
  out.push_back(encoder_suite(opt, rng));
  out.push_back(heads_suite(opt, rng));
  out.push_back(model_suite(opt, rng, comm::CommMode::kRmha));
  out.push_back(model_suite(opt, rng, comm::CommMode::kGraphComm));
  out.push_back(ppo_suite(opt, rng));
  return out;
}

std::string format_report(const std::vector<SuiteReport>& reports) {
  std::ostringstream out;
  out.setf(std::ios::scientific);
  out.precision(2);
  for (const auto& s : reports) {
    out << (s.pass ? "PASS " : "FAIL ") << s.suite << " (" << s.tensors.size() << " tensors, "
        << std::fixed << s.seconds << std::scientific << " s)\n";
    for (const auto& t : s.tensors) {
      out << "  " << (t.pass ? "ok   " : "FAIL ") << t.name << "  max_rel_err=" << t.max_rel_err
          << "  entries=" << t.checked << '\n';
    }
  }
  return out.str();
}

}  // namespace mapf::gradcheck
