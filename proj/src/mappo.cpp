#include "mapf/mappo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "mapf/conflict.hpp"

namespace mapf::mappo {

GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<std::uint8_t>& dones, double bootstrap, double gamma,
                      double lambda) {
  const size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw ShapeError("rewards, values and dones must have equal length");
  }
  GaeResult g;
  g.advantages.assign(n, 0.0);
  g.returns.assign(n, 0.0);
  double running = 0.0;
  for (size_t k = n; k-- > 0;) {
    double next_v = k + 1 == n ? bootstrap : values[k + 1];
    double live = dones[k] ? 0.0 : 1.0;
    double delta = rewards[k] + gamma * next_v * live - values[k];
    running = delta + gamma * lambda * live * running;
    g.advantages[k] = running;
    g.returns[k] = running + values[k];
  }
  return g;
}

GridWorld ScenarioSampler::sample(std::uint64_t seed) const {
  if (sizes.empty()) throw std::invalid_argument("scenario sampler needs at least one map size");
  std::mt19937_64 rng(seed);
  int size = sizes[std::uniform_int_distribution<size_t>(0, sizes.size() - 1)(rng)];
  GridMap map = generate_map(size, size, density, derive_seed(seed, {1}), 2 * agents);
  auto spawned = spawn(map, agents, derive_seed(seed, {2}));
  return GridWorld(std::move(map), std::move(spawned), env);
}

double clipped_objective(double ratio, double advantage, double eps) {
  double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

LossTerms ppo_loss(const policy::HeadOutputs& out, const LossBatch& b, const TrainConfig& cfg) {
  const Eigen::Index rows = out.logits.rows();
  const auto n = static_cast<size_t>(rows);
  if (b.actions.size() != n || b.old_logp.size() != n || b.advantages.size() != n ||
      b.returns_ext.size() != n || b.returns_int.size() != n || b.blocking_target.size() != n ||
      (!b.allowed.empty() && b.allowed.size() != n)) {
    throw ShapeError("loss batch does not match the number of rows");
  }
  LossTerms t;
  t.grad = policy::HeadOutputs::zeros_like(out);
  if (rows == 0) return t;
  const double inv = 1.0 / static_cast<double>(rows);
  Mat p = policy::softmax_rows(out.logits);
  for (Eigen::Index r = 0; r < rows; ++r) {
    double mx = out.logits.row(r).maxCoeff();
    double lse = mx + std::log((out.logits.row(r).array() - mx).exp().sum());
    const int a = b.actions[r];
    const std::uint8_t mask = b.allowed.empty() ? kAllActions : b.allowed[r];
    if (!(mask >> a & 1u)) throw std::invalid_argument("executed action outside its allowed set");
    // Probability of the executed action within the allowed set, q = p / sum_allowed p.
    double mass = 0.0;
    for (int k = 0; k < kNumActions; ++k) {
      if (mask >> k & 1u) mass += p(r, k);
    }
    double logp = out.logits(r, a) - lse - std::log(mass);
    double ratio = std::exp(logp - b.old_logp[r]);
    double adv = b.advantages[r];
    double unclipped = ratio * adv;
    double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv;
    t.policy -= std::min(unclipped, clipped) * inv;
    if (std::abs(ratio - 1.0) > cfg.clip) t.clip_frac += inv;
    // Gradient only flows through the unclipped branch when it is the min.
    double dlogp = unclipped <= clipped ? -adv * ratio * inv : 0.0;

    double h = 0.0;
    for (int k = 0; k < kNumActions; ++k) {
      double lp = out.logits(r, k) - lse;
      h -= p(r, k) * lp;
    }
    t.entropy += h * inv;
    for (int k = 0; k < kNumActions; ++k) {
      double lp = out.logits(r, k) - lse;
      double q = (mask >> k & 1u) ? p(r, k) / mass : 0.0;
      double g = dlogp * ((k == a ? 1.0 : 0.0) - q);
      // d(-c_e H)/dz_k = c_e p_k (log p_k + H)
      g += cfg.entropy_coef * p(r, k) * (lp + h) * inv;
      t.grad.logits(r, k) = g;
    }

    double de = out.v_ext(r, 0) - b.returns_ext[r];
    double di = out.v_int(r, 0) - b.returns_int[r];
    t.value += (de * de + di * di) * inv;
    t.grad.v_ext(r, 0) = 2.0 * cfg.value_coef * de * inv;
    t.grad.v_int(r, 0) = 2.0 * cfg.value_coef * di * inv;

    double z = out.block_logit(r, 0);
    double y = b.blocking_target[r];
    t.blocking += (std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)))) * inv;
    t.grad.block_logit(r, 0) = cfg.blocking_coef * (nn::sigmoid(z) - y) * inv;
  }
  t.total = t.policy + cfg.value_coef * t.value - cfg.entropy_coef * t.entropy +
            cfg.blocking_coef * t.blocking;
  return t;
}

ActorState ActorState::initial(int agents, const policy::ModelConfig& cfg) {
  ActorState s;
  s.hidden = Mat::Zero(agents, cfg.policy.hidden);
  s.messages = Mat::Zero(agents, cfg.comm.dim);
  return s;
}

std::vector<Decision> act(const policy::Model& model, const std::vector<const GridWorld*>& envs,
                          const std::vector<ActorState>& states, const ActOptions& options,
                          std::mt19937_64& rng) {
  if (envs.size() != states.size()) throw ShapeError("one actor state per environment required");
  std::vector<Observation> obs;
  std::vector<std::vector<Cell>> positions;
  int rows = 0;
  for (const GridWorld* env : envs) {
    for (int i = 0; i < env->num_agents(); ++i) obs.push_back(env->observe(i));
    positions.push_back(env->state().positions());
    rows += env->num_agents();
  }
  const auto& mc = model.config();
  policy::StepBatch batch;
  batch.obs = policy::pack_observations(obs);
  batch.hidden.resize(rows, mc.policy.hidden);
  batch.messages.resize(rows, mc.comm.dim);
  batch.groups = policy::make_groups(positions);
  for (size_t e = 0; e < envs.size(); ++e) {
    const auto& g = batch.groups[e];
    if (states[e].hidden.rows() != g.size || states[e].messages.rows() != g.size) {
      throw ShapeError("actor state does not match the environment's agent count");
    }
    batch.hidden.middleRows(g.offset, g.size) = states[e].hidden;
    batch.messages.middleRows(g.offset, g.size) = states[e].messages;
  }
  policy::StepResult res = model.forward(batch, nullptr);
  Mat probs = policy::softmax_rows(res.heads.logits);

  std::vector<Decision> out(envs.size());
  for (size_t e = 0; e < envs.size(); ++e) {
    const auto& g = batch.groups[e];
    Decision& d = out[e];
    d.obs = batch.obs.middleRows(g.offset, g.size);
    d.hidden_in = states[e].hidden;
    d.messages_in = states[e].messages;
    d.dist = g.dist;
    d.new_hidden = res.hidden.middleRows(g.offset, g.size);
    d.new_messages = res.heads.message.middleRows(g.offset, g.size);
    std::vector<std::array<double, kNumActions>> p(g.size);
    for (int i = 0; i < g.size; ++i) {
      const int r = g.offset + i;
      for (int k = 0; k < kNumActions; ++k) p[i][k] = probs(r, k);
      int a = 0;
      if (options.greedy) {
        probs.row(r).maxCoeff(&a);
      } else {
        double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        a = kNumActions - 1;
        for (int k = 0; k < kNumActions; ++k) {
          u -= p[i][k];
          if (u < 0.0) {
            a = k;
            break;
          }
        }
      }
      d.sampled.push_back(a);
      d.v_ext.push_back(res.heads.v_ext(r, 0));
      d.v_int.push_back(res.heads.v_int(r, 0));
      d.block_prob.push_back(nn::sigmoid(res.heads.block_logit(r, 0)));
    }
    d.probs = p;
    if (options.resolve) {
      ResolvedActions ra =
          resolve_conflicts(envs[e]->state().map, positions[e], d.sampled, p, d.v_ext, rng);
      d.executed = ra.actions;
      d.allowed = ra.allowed;
      d.conflicts = ra.conflicts;
    } else {
      d.executed = d.sampled;
      d.allowed.assign(g.size, kAllActions);
    }
    for (int i = 0; i < g.size; ++i) {
      double mass = 0.0;
      for (int k = 0; k < kNumActions; ++k) {
        if (d.allowed[i] >> k & 1u) mass += p[i][k];
      }
      d.logp.push_back(std::log(std::max(p[i][d.executed[i]], 1e-300)) -
                       std::log(std::max(mass, 1e-300)));
    }
  }
  return out;
}

void RolloutBuffer::clear() {
  steps.clear();
  bootstrap_ext.clear();
  bootstrap_int.clear();
  adv.clear();
  ret_ext.clear();
  ret_int.clear();
}

void RolloutBuffer::compute_advantages(const TrainConfig& cfg) {
  const size_t envs = steps.size();
  adv.assign(envs, {});
  ret_ext.assign(envs, {});
  ret_int.assign(envs, {});
  for (size_t e = 0; e < envs; ++e) {
    const auto& seq = steps[e];
    const size_t len = seq.size();
    if (len == 0) continue;
    const size_t agents = seq.front().actions.size();
    adv[e].assign(len, std::vector<double>(agents));
    ret_ext[e].assign(len, std::vector<double>(agents));
    ret_int[e].assign(len, std::vector<double>(agents));
    for (size_t i = 0; i < agents; ++i) {
      std::vector<double> re(len), ri(len), ve(len), vi(len);
      std::vector<std::uint8_t> dn(len);
      for (size_t t = 0; t < len; ++t) {
        if (seq[t].actions.size() != agents) {
          throw ShapeError("agent count changed inside a rollout");
        }
        re[t] = seq[t].r_ext[i];
        ri[t] = seq[t].r_int[i];
        ve[t] = seq[t].v_ext[i];
        vi[t] = seq[t].v_int[i];
        dn[t] = seq[t].done ? 1 : 0;
      }
      GaeResult ge = compute_gae(re, ve, dn, bootstrap_ext[e][i], cfg.gamma, cfg.lambda);
      GaeResult gi = compute_gae(ri, vi, dn, bootstrap_int[e][i], cfg.gamma, cfg.lambda);
      for (size_t t = 0; t < len; ++t) {
        adv[e][t][i] = ge.advantages[t] + cfg.intrinsic_weight * gi.advantages[t];
        ret_ext[e][t][i] = ge.returns[t];
        ret_int[e][t][i] = gi.returns[t];
      }
    }
  }
}

Trainer::Trainer(const TrainConfig& cfg, const ScenarioSampler& sampler,
                 const policy::ModelConfig& model_cfg, std::uint64_t seed)
    : cfg_(cfg), sampler_(sampler), seed_(seed), rng_(derive_seed(seed, {7})) {
  if (!(cfg.gamma > 0 && cfg.gamma < 1) || !(cfg.lambda > 0 && cfg.lambda < 1)) {
    throw std::invalid_argument("gamma and lambda must lie in (0, 1)");
  }
  if (!(cfg.clip > 0)) throw std::invalid_argument("clip epsilon must be positive");
  if (cfg.num_envs < 1 || cfg.horizon < 1 || cfg.epochs < 1 || cfg.minibatch_steps < 1) {
    throw std::invalid_argument("num_envs, horizon, epochs and minibatch_steps must be positive");
  }
  if (sampler.env.fov != model_cfg.policy.fov) {
    throw std::invalid_argument("environment and model disagree on the field of view");
  }
  model_ = std::make_unique<policy::Model>(model_cfg, seed);
  nn::AdamConfig ac;
  ac.lr = cfg.lr;
  adam_ = std::make_unique<nn::Adam>(model_->params(), ac);
  envs_.resize(cfg.num_envs);
  actors_.resize(cfg.num_envs);
  episode_counter_.assign(cfg.num_envs, 0);
  episode_return_.assign(cfg.num_envs, 0.0);
  episode_collisions_.assign(cfg.num_envs, 0);
  fresh_.assign(cfg.num_envs, true);
  for (int e = 0; e < cfg.num_envs; ++e) reset_env(e);
}

void Trainer::reset_env(int e) {
  std::uint64_t s = derive_seed(seed_, {101, static_cast<std::uint64_t>(e), episode_counter_[e]++});
  envs_[e] = std::make_unique<GridWorld>(sampler_.sample(s));
  actors_[e] = ActorState::initial(envs_[e]->num_agents(), model_->config());
  episode_return_[e] = 0.0;
  episode_collisions_[e] = 0;
  fresh_[e] = true;
}

double Trainer::recent_success_rate() const {
  if (window_.empty()) return std::numeric_limits<double>::quiet_NaN();
  auto wins = std::count(window_.begin(), window_.end(), true);
  return 100.0 * static_cast<double>(wins) / static_cast<double>(window_.size());
}

void Trainer::collect() {
  buffer_.clear();
  finished_returns_.clear();
  round_reward_ = 0.0;
  round_agent_steps_ = 0;
  const int envs = cfg_.num_envs;
  buffer_.steps.assign(envs, {});
  for (int t = 0; t < cfg_.horizon; ++t) {
    std::vector<const GridWorld*> ptrs;
    for (auto& env : envs_) ptrs.push_back(env.get());
    std::vector<Decision> ds = act(*model_, ptrs, actors_, ActOptions{}, rng_);
    for (int e = 0; e < envs; ++e) {
      GridWorld& env = *envs_[e];
      Decision& d = ds[e];
      StepRecord rec;
      rec.block_target.assign(env.current_blocking().begin(), env.current_blocking().end());
      StepOutcome o = env.step(d.executed);
      rec.obs = std::move(d.obs);
      rec.hidden_in = std::move(d.hidden_in);
      rec.messages_in = std::move(d.messages_in);
      rec.dist = std::move(d.dist);
      rec.actions = d.executed;
      rec.allowed = d.allowed;
      rec.logp = d.logp;
      rec.v_ext = d.v_ext;
      rec.v_int = d.v_int;
      rec.r_ext = o.extrinsic;
      rec.r_int = o.intrinsic;
      rec.done = o.episode_done;
      rec.has_prev = t > 0 && !fresh_[e];
      fresh_[e] = false;
      buffer_.steps[e].push_back(std::move(rec));

      for (double r : o.extrinsic) episode_return_[e] += r;
      round_reward_ += std::accumulate(o.extrinsic.begin(), o.extrinsic.end(), 0.0);
      round_agent_steps_ += static_cast<long long>(o.extrinsic.size());
      for (auto c : o.collision) episode_collisions_[e] += c;
      actors_[e].hidden = std::move(d.new_hidden);
      actors_[e].messages = std::move(d.new_messages);
      actors_[e].message_tag = o.step_index - 1;
      ++env_steps_;
      if (o.episode_done) {
        bool success = env.all_at_goal() && episode_collisions_[e] == 0;
        window_.push_back(success);
        while (static_cast<int>(window_.size()) > cfg_.sr_window) window_.pop_front();
        finished_returns_.push_back(episode_return_[e] / env.num_agents());
        reset_env(e);
      }
    }
  }
  // Values of the states the horizon cut off; greedy decisions draw no randomness.
  std::vector<const GridWorld*> ptrs;
  for (auto& env : envs_) ptrs.push_back(env.get());
  std::vector<Decision> tail = act(*model_, ptrs, actors_, ActOptions{true, false}, rng_);
  buffer_.bootstrap_ext.resize(envs);
  buffer_.bootstrap_int.resize(envs);
  for (int e = 0; e < envs; ++e) {
    const size_t agents = buffer_.steps[e].back().actions.size();
    if (buffer_.steps[e].back().done || tail[e].v_ext.size() != agents) {
      buffer_.bootstrap_ext[e].assign(agents, 0.0);
      buffer_.bootstrap_int[e].assign(agents, 0.0);
    } else {
      buffer_.bootstrap_ext[e] = tail[e].v_ext;
      buffer_.bootstrap_int[e] = tail[e].v_int;
    }
  }
  buffer_.compute_advantages(cfg_);
}

namespace {

std::vector<comm::AgentGroup> groups_for(const std::vector<const StepRecord*>& recs) {
  std::vector<comm::AgentGroup> groups;
  int offset = 0;
  for (const StepRecord* r : recs) {
    comm::AgentGroup g;
    g.offset = offset;
    g.size = static_cast<int>(r->actions.size());
    g.dist = r->dist;
    offset += g.size;
    groups.push_back(std::move(g));
  }
  return groups;
}

policy::StepBatch stack(const std::vector<const StepRecord*>& recs, int hidden, int dim) {
  policy::StepBatch b;
  b.groups = groups_for(recs);
  int rows = recs.empty() ? 0 : b.groups.back().offset + b.groups.back().size;
  int obs_dim = recs.empty() ? 0 : static_cast<int>(recs.front()->obs.cols());
  b.obs.resize(rows, obs_dim);
  b.hidden.resize(rows, hidden);
  b.messages.resize(rows, dim);
  for (size_t k = 0; k < recs.size(); ++k) {
    const auto& g = b.groups[k];
    b.obs.middleRows(g.offset, g.size) = recs[k]->obs;
    b.hidden.middleRows(g.offset, g.size) = recs[k]->hidden_in;
    b.messages.middleRows(g.offset, g.size) = recs[k]->messages_in;
  }
  return b;
}

}  // namespace

double Trainer::minibatch_step(const std::vector<std::pair<int, int>>& idx, UpdateStats& stats) {
  const auto& mc = model_->config();
  std::vector<const StepRecord*> cur_recs;
  std::vector<const StepRecord*> prev_recs;
  std::vector<int> prev_slot(idx.size(), -1);
  for (size_t k = 0; k < idx.size(); ++k) {
    auto [e, t] = idx[k];
    const StepRecord& r = buffer_.steps[e][t];
    cur_recs.push_back(&r);
    if (cfg_.two_step_unroll && r.has_prev) {
      prev_slot[k] = static_cast<int>(prev_recs.size());
      prev_recs.push_back(&buffer_.steps[e][t - 1]);
    }
  }
  policy::StepBatch cur = stack(cur_recs, mc.policy.hidden, mc.comm.dim);
  policy::StepBatch prev = stack(prev_recs, mc.policy.hidden, mc.comm.dim);
  policy::StepCache prev_cache;
  policy::StepResult prev_res;
  if (!prev_recs.empty()) {
    prev_res = model_->forward(prev, &prev_cache);
    for (size_t k = 0; k < idx.size(); ++k) {
      if (prev_slot[k] < 0) continue;
      const auto& gc = cur.groups[k];
      const auto& gp = prev.groups[prev_slot[k]];
      cur.hidden.middleRows(gc.offset, gc.size) = prev_res.hidden.middleRows(gp.offset, gp.size);
      cur.messages.middleRows(gc.offset, gc.size) =
          prev_res.heads.message.middleRows(gp.offset, gp.size);
    }
  }
  policy::StepCache cache;
  policy::StepResult res = model_->forward(cur, &cache);

  LossBatch lb;
  for (size_t k = 0; k < idx.size(); ++k) {
    auto [e, t] = idx[k];
    const StepRecord& r = *cur_recs[k];
    for (size_t i = 0; i < r.actions.size(); ++i) {
      lb.actions.push_back(r.actions[i]);
      lb.old_logp.push_back(r.logp[i]);
      lb.advantages.push_back(buffer_.adv[e][t][i]);
      lb.returns_ext.push_back(buffer_.ret_ext[e][t][i]);
      lb.returns_int.push_back(buffer_.ret_int[e][t][i]);
      lb.blocking_target.push_back(r.block_target[i]);
      lb.allowed.push_back(r.allowed[i]);
    }
  }
  const double count = static_cast<double>(lb.advantages.size());
  double mean = std::accumulate(lb.advantages.begin(), lb.advantages.end(), 0.0) / count;
  double var = 0.0;
  for (double a : lb.advantages) var += (a - mean) * (a - mean);
  double sd = std::sqrt(var / count);
  for (double& a : lb.advantages) a = (a - mean) / (sd + 1e-8);

  LossTerms lt = ppo_loss(res.heads, lb, cfg_);
  if (!std::isfinite(lt.total)) {
    throw TrainingAborted("non-finite loss (policy " + std::to_string(lt.policy) + ", value " +
                          std::to_string(lt.value) + ", blocking " +
                          std::to_string(lt.blocking) + ")");
  }
  auto& ps = model_->params();
  ps.zero_grad();
  policy::InputGrads g = model_->backward(cache, cur, lt.grad);
  if (!prev_recs.empty()) {
    policy::HeadOutputs gp = policy::HeadOutputs::zeros_like(prev_res.heads);
    Mat dh = Mat::Zero(prev_res.hidden.rows(), prev_res.hidden.cols());
    for (size_t k = 0; k < idx.size(); ++k) {
      if (prev_slot[k] < 0) continue;
      const auto& gc = cur.groups[k];
      const auto& gpr = prev.groups[prev_slot[k]];
      dh.middleRows(gpr.offset, gpr.size) = g.hidden.middleRows(gc.offset, gc.size);
      gp.message.middleRows(gpr.offset, gpr.size) = g.messages.middleRows(gc.offset, gc.size);
    }
    model_->backward(prev_cache, prev, gp, &dh);
  }
  double gn = ps.grad_norm();
  if (!std::isfinite(gn)) throw TrainingAborted("non-finite gradient norm");
  if (gn > cfg_.max_grad_norm) ps.scale_grad(cfg_.max_grad_norm / gn);
  adam_->step();
  if (!ps.all_finite()) throw TrainingAborted("parameters became non-finite after an update");

  stats.policy_loss += lt.policy;
  stats.value_loss += lt.value;
  stats.entropy += lt.entropy;
  stats.clip_frac += lt.clip_frac;
  stats.blocking_loss += lt.blocking;
  ++stats.minibatches;
  return lt.total;
}

UpdateStats Trainer::update() {
  auto& ps = model_->params();
  last_good_.clear();
  for (const nn::Param* p : ps.params()) last_good_.push_back(p->value);

  std::vector<std::pair<int, int>> all;
  for (size_t e = 0; e < buffer_.steps.size(); ++e) {
    for (size_t t = 0; t < buffer_.steps[e].size(); ++t) {
      all.emplace_back(static_cast<int>(e), static_cast<int>(t));
    }
  }
  UpdateStats stats;
  try {
    for (int ep = 0; ep < cfg_.epochs; ++ep) {
      std::shuffle(all.begin(), all.end(), rng_);
      for (size_t start = 0; start < all.size(); start += cfg_.minibatch_steps) {
        size_t end = std::min(all.size(), start + static_cast<size_t>(cfg_.minibatch_steps));
        std::vector<std::pair<int, int>> idx(all.begin() + start, all.begin() + end);
        minibatch_step(idx, stats);
      }
    }
  } catch (const TrainingAborted& err) {
    for (size_t k = 0; k < last_good_.size(); ++k) ps.params()[k]->value = last_good_[k];
    std::string where;
    if (!abort_path_.empty()) {
      model_->save(abort_path_);
      where = "; last finite parameters saved to " + abort_path_;
    }
    throw TrainingAborted("round " + std::to_string(round_ + 1) + ": " + err.what() + where);
  }
  buffer_.clear();
  if (stats.minibatches > 0) {
    double m = stats.minibatches;
    stats.policy_loss /= m;
    stats.value_loss /= m;
    stats.entropy /= m;
    stats.clip_frac /= m;
    stats.blocking_loss /= m;
  }
  return stats;
}

RoundStats Trainer::run_round() {
  collect();
  RoundStats s;
  s.episodes = static_cast<int>(finished_returns_.size());
  s.mean_reward = round_agent_steps_ > 0
                      ? round_reward_ / static_cast<double>(round_agent_steps_)
                      : std::numeric_limits<double>::quiet_NaN();
  UpdateStats u = update();
  ++round_;
  s.round = round_;
  s.env_steps = env_steps_;
  s.recent_sr = recent_success_rate();
  s.window_fill = static_cast<int>(window_.size());
  s.policy_loss = u.policy_loss;
  s.value_loss = u.value_loss;
  s.entropy = u.entropy;
  s.clip_frac = u.clip_frac;
  s.blocking_loss = u.blocking_loss;
  return s;
}

std::string log_header() {
  return "round,env_steps,mean_reward,recent_SR,policy_loss,value_loss,entropy,clip_frac,"
         "blocking_loss";
}

std::string log_row(const RoundStats& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%lld,%.6f,%.2f,%.6f,%.6f,%.6f,%.4f,%.6f", s.round,
                s.env_steps, s.mean_reward, s.recent_sr, s.policy_loss, s.value_loss, s.entropy,
                s.clip_frac, s.blocking_loss);
  return buf;
}

std::vector<RoundStats> train(const TrainConfig& cfg, const ScenarioSampler& sampler,
                              const policy::ModelConfig& model_cfg, std::uint64_t seed,
                              const TrainOutputs& outputs) {
  Trainer trainer(cfg, sampler, model_cfg, seed);
  if (!outputs.checkpoint_path.empty()) trainer.set_abort_checkpoint(outputs.checkpoint_path);
  std::ofstream log;
  if (!outputs.log_path.empty()) {
    log.open(outputs.log_path);
    if (!log) throw std::runtime_error("cannot write training log " + outputs.log_path);
    log << log_header() << '\n';
  }
  const long long per_round = static_cast<long long>(cfg.num_envs) * cfg.horizon;
  const long long rounds = (cfg.total_env_steps + per_round - 1) / per_round;
  std::vector<RoundStats> history;
  for (long long r = 0; r < rounds; ++r) {
    RoundStats s = trainer.run_round();
    history.push_back(s);
    if (log.is_open()) log << log_row(s) << '\n' << std::flush;
    bool periodic = cfg.checkpoint_every > 0 && s.round % cfg.checkpoint_every == 0;
    if (!outputs.checkpoint_path.empty() && (periodic || r + 1 == rounds)) {
      trainer.model().save(outputs.checkpoint_path);
    }
  }
  return history;
}

}  // namespace mapf::mappo
