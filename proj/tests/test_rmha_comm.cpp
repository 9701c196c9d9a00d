#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mapf/common.hpp"
#include "mapf/gradcheck.hpp"
#include "mapf/rmha_comm.hpp"

using namespace mapf;
using namespace mapf::comm;

namespace {

CommConfig small_config(double radius = 3.0) {
  CommConfig c;
  c.dim = 8;
  c.heads = 2;
  c.layers = 2;
  c.buckets = 6;
  c.radius = radius;
  return c;
}

struct Fixture {
  nn::ParamSet ps;
  CommBlock block;
  explicit Fixture(const CommConfig& cfg, std::uint64_t seed = 1) : block(ps, "comm", cfg) {
    std::mt19937_64 rng(seed);
    block.init(rng);
  }
};

AgentGroup random_group(int n, std::mt19937_64& rng, int span = 6) {
  std::uniform_int_distribution<int> coord(0, span);
  std::vector<Cell> pos(n);
  for (auto& p : pos) p = {coord(rng), coord(rng)};
  AgentGroup g;
  g.size = n;
  g.dist.resize(n * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) g.dist[i * n + j] = manhattan(pos[i], pos[j]);
  }
  return g;
}

Mat random_mat(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

// Scores by explicit loops over the raw weights: Q_ij = W_q (x_i + S_q t_b),
// K_ij = W_k (m_j + S_k t_b), b the distance bucket of (i, j).
std::vector<Mat> plain_scores(const AttentionLayer& layer, const DistanceEmbedding& emb,
                              const Mat& x, const Mat& m, const AgentGroup& g, const Mat& mask,
                              int heads, bool use_distance) {
  const Mat& wq = layer.wq()->value;
  const Mat& wk = layer.wk()->value;
  const int d = static_cast<int>(wq.rows());
  const int dk = d / heads;
  std::vector<Mat> out(heads, Mat::Zero(g.size, g.size));
  for (int i = 0; i < g.size; ++i) {
    for (int j = 0; j < g.size; ++j) {
      Eigen::VectorXd xi = x.row(i).transpose();
      Eigen::VectorXd mj = m.row(j).transpose();
      if (use_distance) {
        int b = std::min(g.d(i, j), emb.buckets() - 1);
        Eigen::VectorXd t = emb.table()->value.row(b).transpose();
        xi += emb.side_query()->value * t;
        mj += emb.side_key()->value * t;
      }
      Eigen::VectorXd q = wq * xi;
      Eigen::VectorXd k = wk * mj;
      for (int h = 0; h < heads; ++h) {
        double s = 0.0;
        for (int c = h * dk; c < (h + 1) * dk; ++c) s += q(c) * k(c);
        out[h](i, j) = s / std::sqrt(static_cast<double>(dk)) + mask(i, j);
      }
    }
  }
  return out;
}

}  // namespace

TEST(BuildMask, SingleAgent) {
  Mat m = build_mask({0}, 1, 5.0, -1e9);
  ASSERT_EQ(m.rows(), 1);
  EXPECT_EQ(m(0, 0), 0.0);
}

TEST(BuildMask, ZeroRadiusKeepsOnlySelf) {
  std::vector<int> d = {0, 1, 2, 1, 0, 1, 2, 1, 0};
  Mat m = build_mask(d, 3, 0.0, -1e9);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) EXPECT_EQ(m(i, j), i == j ? 0.0 : -1e9);
  }
}

TEST(BuildMask, RadiusIsInclusive) {
  std::vector<int> d = {0, 3, 3, 0};
  EXPECT_EQ(build_mask(d, 2, 2.0, -1e9)(0, 1), -1e9);
  EXPECT_EQ(build_mask(d, 2, 3.0, -1e9)(0, 1), 0.0);
}

TEST(DistanceEmbedding, ZeroDistancesUseFirstRow) {
  Fixture f(small_config());
  const auto& emb = f.block.embedding();
  auto e = emb.embed(std::vector<int>(9, 0), 3);
  Eigen::RowVectorXd expect = (emb.side_query()->value * emb.table()->value.row(0).transpose()).transpose();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) EXPECT_TRUE(e.query_side[i].row(j).isApprox(expect, 1e-12));
  }
}

TEST(DistanceEmbedding, LargeDistancesClampToLastBucket) {
  Fixture f(small_config());
  const auto& emb = f.block.embedding();
  auto e = emb.embed({0, 5, 40, 5, 0, 7, 40, 7, 0}, 3);
  EXPECT_EQ(distance_bucket(40, 6), 5);
  EXPECT_TRUE(e.key_side[0].row(2).isApprox(e.key_side[0].row(1), 0.0));
  EXPECT_TRUE(e.query_side[1].row(2).isApprox(e.query_side[0].row(1), 0.0));
  // symmetric distances give symmetric entries within one side
  EXPECT_EQ(e.query_side[0].row(2), e.query_side[2].row(0));
}

TEST(DistanceEmbedding, TableGradientMatchesFiniteDifferences) {
  Fixture f(small_config());
  const auto& emb = f.block.embedding();
  std::vector<int> dist = {0, 2, 9, 2, 0, 4, 9, 4, 0};
  std::mt19937_64 rng(4);
  Mat wq = random_mat(3, 8, rng);
  Mat wk = random_mat(3, 8, rng);
  auto loss = [&] {
    auto e = emb.embed(dist, 3);
    double s = 0;
    for (int i = 0; i < 3; ++i) s += (e.query_side[i].cwiseProduct(wq)).sum() + (e.key_side[i].cwiseProduct(wk)).sum();
    return s;
  };
  nn::ParamSet& ps = f.ps;
  auto backward = [&] {
    ps.zero_grad();
    DistanceEmbedding::Embedded g;
    for (int i = 0; i < 3; ++i) {
      g.query_side.push_back(wq);
      g.key_side.push_back(wk);
    }
    emb.backward(dist, 3, g);
  };
  gradcheck::Options opt;
  auto rep = gradcheck::check_params("embedding", ps, loss, backward, opt,
                                     {"comm.distance.table", "comm.distance.side_query",
                                      "comm.distance.side_key"});
  ASSERT_EQ(rep.tensors.size(), 3u);
  for (const auto& t : rep.tensors) EXPECT_LT(t.max_rel_err, 1e-4) << t.name;
}

TEST(AttentionScores, ZeroParametersGiveUniformWeights) {
  CommConfig cfg = small_config(2.0);
  Fixture f(cfg);
  for (auto* p : f.ps.params()) p->value.setZero();
  std::mt19937_64 rng(3);
  AgentGroup g = random_group(5, rng);
  Mat m = random_mat(5, 8, rng);
  Mat mask = build_mask(g.dist, 5, cfg.radius, cfg.mask_sentinel);
  auto s = f.block.layer(0).scores(m, m, g, mask, f.block.embedding(), true);
  CommBlock::Cache cache;
  f.block.forward(m, {g}, CommMode::kRmha, &cache);
  for (int h = 0; h < cfg.heads; ++h) {
    for (int i = 0; i < 5; ++i) {
      int linked = 0;
      for (int j = 0; j < 5; ++j) linked += mask(i, j) == 0.0;
      for (int j = 0; j < 5; ++j) {
        if (mask(i, j) == 0.0) {
          EXPECT_EQ(s[h](i, j), 0.0);
          EXPECT_NEAR(cache.layers[0].alpha[0][h](i, j), 1.0 / linked, 1e-15);
        } else {
          EXPECT_EQ(cache.layers[0].alpha[0][h](i, j), 0.0);
        }
      }
    }
  }
}

TEST(AttentionScores, MatchPlainAttentionOracle) {
  CommConfig cfg = small_config(4.0);
  Fixture f(cfg, 9);
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    AgentGroup g = random_group(4, rng);
    Mat x = random_mat(4, 8, rng);
    Mat m = random_mat(4, 8, rng);
    Mat mask = build_mask(g.dist, 4, cfg.radius, cfg.mask_sentinel);
    for (bool use_distance : {false, true}) {
      auto got = f.block.layer(1).scores(x, m, g, mask, f.block.embedding(), use_distance);
      auto want = plain_scores(f.block.layer(1), f.block.embedding(), x, m, g, mask, cfg.heads,
                               use_distance);
      for (int h = 0; h < cfg.heads; ++h) {
        for (int i = 0; i < 4; ++i) {
          for (int j = 0; j < 4; ++j) {
            double a = got[h](i, j), b = want[h](i, j);
            EXPECT_LE(std::abs(a - b), 1e-6 * std::max(1.0, std::abs(b)));
          }
        }
      }
    }
  }
}

TEST(AttentionScores, ShapeMismatchThrows) {
  Fixture f(small_config());
  std::mt19937_64 rng(1);
  AgentGroup g = random_group(3, rng);
  Mat mask = build_mask(g.dist, 3, 3.0, -1e9);
  EXPECT_THROW(f.block.layer(0).scores(Mat::Zero(3, 7), Mat::Zero(3, 8), g, mask,
                                       f.block.embedding(), true),
               ShapeError);
  EXPECT_THROW(f.block.layer(0).scores(Mat::Zero(3, 8), Mat::Zero(3, 8), g, Mat::Zero(2, 2),
                                       f.block.embedding(), true),
               ShapeError);
}

TEST(CommForward, NoneModeIsZero) {
  Fixture f(small_config());
  std::mt19937_64 rng(2);
  AgentGroup g = random_group(4, rng);
  Mat out = f.block.forward(random_mat(4, 8, rng), {g}, CommMode::kNone, nullptr);
  EXPECT_TRUE(out.isZero(0.0));
}

TEST(CommForward, SingleAgentDependsOnlyOnItself) {
  Fixture f(small_config());
  std::mt19937_64 rng(2);
  AgentGroup solo{0, 1, {0}};
  Mat m = random_mat(1, 8, rng);
  Mat a = f.block.forward(m, {solo}, CommMode::kRmha, nullptr);
  // A second environment next to it must not change agent 0's output.
  AgentGroup other{1, 3, random_group(3, rng).dist};
  Mat both(4, 8);
  both.row(0) = m.row(0);
  both.bottomRows(3) = random_mat(3, 8, rng);
  Mat b = f.block.forward(both, {solo, other}, CommMode::kRmha, nullptr);
  EXPECT_TRUE(a.row(0).isApprox(b.row(0), 0.0));
}

TEST(CommForward, MaskedPeersNeverInfluenceOutput) {
  CommConfig cfg = small_config(3.0);
  Fixture f(cfg, 5);
  std::mt19937_64 rng(6);
  int probes = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 6;
    AgentGroup g = random_group(n, rng, 8);
    Mat m = random_mat(n, 8, rng);
    for (CommMode mode : {CommMode::kRmha, CommMode::kGraphComm}) {
      CommBlock::Cache cache;
      Mat base = f.block.forward(m, {g}, mode, &cache);
      for (int l = 0; l < cfg.layers; ++l) {
        for (int h = 0; h < cfg.heads; ++h) {
          for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
              if (g.d(i, j) > cfg.radius) ASSERT_EQ(cache.layers[l].alpha[0][h](i, j), 0.0);
            }
          }
        }
      }
      for (int j = 0; j < n; ++j) {
        Mat p = m;
        p.row(j) += random_mat(1, 8, rng) * 3.0;
        Mat out = f.block.forward(p, {g}, mode, nullptr);
        for (int i = 0; i < n; ++i) {
          if (g.d(i, j) > cfg.radius) {
            ASSERT_TRUE((out.row(i).array() == base.row(i).array()).all());
            ++probes;
          }
        }
      }
    }
  }
  EXPECT_GT(probes, 100);
}

TEST(CommForward, ZeroDistanceTableReducesToGraphComm) {
  Fixture f(small_config(10.0), 8);
  f.block.embedding().table()->value.setZero();
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    AgentGroup g = random_group(5, rng);
    Mat m = random_mat(5, 8, rng);
    Mat a = f.block.forward(m, {g}, CommMode::kRmha, nullptr);
    Mat b = f.block.forward(m, {g}, CommMode::kGraphComm, nullptr);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(CommForward, NonFiniteInputNamesLayer) {
  Fixture f(small_config());
  std::mt19937_64 rng(1);
  AgentGroup g = random_group(3, rng);
  Mat m = random_mat(3, 8, rng);
  m(1, 2) = std::nan("");
  try {
    f.block.forward(m, {g}, CommMode::kRmha, nullptr);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_EQ(e.layer(), 0);
  }
}

TEST(CommBackward, ZeroUpstreamGivesZeroGradients) {
  Fixture f(small_config());
  std::mt19937_64 rng(12);
  AgentGroup g = random_group(4, rng);
  Mat m = random_mat(4, 8, rng);
  CommBlock::Cache cache;
  f.block.forward(m, {g}, CommMode::kRmha, &cache);
  f.ps.zero_grad();
  Mat dm = f.block.backward(cache, m, {g}, Mat::Zero(4, 8));
  EXPECT_TRUE(dm.isZero(0.0));
  EXPECT_EQ(f.ps.grad_norm(), 0.0);
}

TEST(CommBackward, GradientsAreLinearInUpstream) {
  Fixture f(small_config());
  std::mt19937_64 rng(13);
  AgentGroup g = random_group(4, rng);
  Mat m = random_mat(4, 8, rng);
  Mat dout = random_mat(4, 8, rng);
  CommBlock::Cache cache;
  f.block.forward(m, {g}, CommMode::kRmha, &cache);
  f.ps.zero_grad();
  Mat dm1 = f.block.backward(cache, m, {g}, dout);
  std::vector<Mat> g1;
  for (auto* p : f.ps.params()) g1.push_back(p->grad);
  f.ps.zero_grad();
  Mat dm2 = f.block.backward(cache, m, {g}, 2.0 * dout);
  EXPECT_TRUE(dm2.isApprox(2.0 * dm1, 1e-12));
  for (size_t k = 0; k < g1.size(); ++k) {
    EXPECT_TRUE(f.ps.params()[k]->grad.isApprox(2.0 * g1[k], 1e-12) || g1[k].isZero(0.0));
  }
}

TEST(CommBackward, MissingCacheThrows) {
  Fixture f(small_config());
  CommBlock::Cache empty;
  EXPECT_THROW(f.block.backward(empty, Mat::Zero(2, 8), {AgentGroup{0, 2, {0, 1, 1, 0}}},
                                Mat::Zero(2, 8)),
               std::logic_error);
}

TEST(Gradcheck, CommunicationSuitesPass) {
  gradcheck::Options opt;
  auto reports = gradcheck::run_all(opt);
  ASSERT_FALSE(reports.empty());
  for (const auto& r : reports) {
    EXPECT_TRUE(r.pass) << r.suite;
    for (const auto& t : r.tensors) EXPECT_LT(t.max_rel_err, 1e-3) << r.suite << " " << t.name;
  }
}
