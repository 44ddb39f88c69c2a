#include <algorithm>
#include <fstream>
#include <random>

#include "test_util.hpp"
#include "wsn/env.hpp"
#include "wsn/nn.hpp"

using namespace wsn;
using nn::Mat;
using nn::Vec;

namespace {

struct Fixture {
  WsnInstance inst;
  NodeFeatures features;
  CommGraph graph;
};

Fixture random_fixture(int sensors, int sites, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(5.0, 55.0);
  Fixture f;
  f.inst.map_type = 0;
  f.inst.width = 60;
  f.inst.height = 60;
  for (int i = 0; i < sites; ++i) f.inst.sites.push_back({u(rng), u(rng)});
  f.inst.site_accessible.assign(sites, true);
  for (int i = 0; i < sensors; ++i) f.inst.sensors_init.push_back({u(rng), u(rng)});
  std::uniform_real_distribution<double> r01(0.1, 1.0);
  std::vector<double> residuals(sensors), drains(sensors);
  for (auto& x : residuals) x = r01(rng);
  for (auto& x : drains) x = r01(rng);
  f.features = make_node_features(f.inst, f.inst.sensors_init, residuals, drains);
  f.graph = build_comm_graph(f.inst.sensors_init, f.inst.sites, f.inst.energy);
  return f;
}

}  // namespace

int main() {
  const nn::NetConfig cfg;

  section("parameter shapes and count");
  {
    const auto p = nn::QNetworkParams::init(cfg, 1);
    REQUIRE(p.w_x.rows() == 48 && p.w_x.cols() == 5);
    REQUIRE(p.w_msg[0].rows() == 48 && p.w_msg[0].cols() == 65);
    REQUIRE(p.t_sensor[2].rows() == 16);
    REQUIRE(p.w_q.rows() == 64 && p.w_q.cols() == 64);
    REQUIRE(p.w_h1.rows() == 128 && p.w_h1.cols() == 128);
    nn::NetConfig plain;
    plain.use_type_embedding = false;
    plain.use_feature_fusion = false;
    const auto q = nn::QNetworkParams::init(plain, 1);
    REQUIRE(q.w_x.rows() == 64);
    REQUIRE(q.w_msg[0].cols() == 65);
    // ablated variant drops the type-embedding and attention parameters
    std::vector<std::string> names;
    q.for_each([&names](const std::string& n, const Mat&) { names.push_back(n); });
    for (const auto& n : names) {
      REQUIRE(n.rfind("t_", 0) != 0);
      REQUIRE(n != "w_q" && n != "w_out");
    }
  }

  section("isolated node receives zero messages");
  {
    Fixture f = random_fixture(3, 2, 7);
    // park sensor 0 far away from everything
    f.inst.sensors_init[0] = {0.5, 0.5};
    f.graph = build_comm_graph(f.inst.sensors_init, f.inst.sites, f.inst.energy);
    bool isolated = true;
    for (const CommEdge& e : f.graph.edges) {
      if (e.u == 0 || e.v == 0) isolated = false;
    }
    REQUIRE(isolated);
    const auto p = nn::QNetworkParams::init(cfg, 3);
    nn::ForwardTrace trace;
    nn::encode(f.features, f.graph, p, &trace);
    for (int l = 0; l < nn::NetConfig::layers; ++l) {
      REQUIRE(trace.msg[l].row(0).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  section("permutation equivariance of encode");
  {
    const Fixture f = random_fixture(5, 3, 11);
    const auto p = nn::QNetworkParams::init(cfg, 5);
    const Mat h = nn::encode(f.features, f.graph, p, nullptr);
    // swap two sensors (and their feature rows)
    Fixture g = f;
    std::swap(g.inst.sensors_init[1], g.inst.sensors_init[3]);
    g.features = f.features;
    g.features.x.row(1) = f.features.x.row(3);
    g.features.x.row(3) = f.features.x.row(1);
    g.graph = build_comm_graph(g.inst.sensors_init, g.inst.sites, g.inst.energy);
    const Mat h2 = nn::encode(g.features, g.graph, p, nullptr);
    REQUIRE((h2.row(1) - h.row(3)).cwiseAbs().maxCoeff() <= 1e-12);
    REQUIRE((h2.row(3) - h.row(1)).cwiseAbs().maxCoeff() <= 1e-12);
    REQUIRE((h2.row(0) - h.row(0)).cwiseAbs().maxCoeff() <= 1e-12);
  }

  section("identical twins get identical embeddings");
  {
    // two sensors at mirrored positions with equal features and isomorphic
    // neighborhoods: a symmetric 4-node graph
    Fixture f = random_fixture(2, 2, 13);
    f.inst.width = 60;
    f.inst.height = 60;
    f.inst.sensors_init = {{20, 30}, {40, 30}};
    f.inst.sites = {{30, 20}, {30, 40}};
    f.graph = build_comm_graph(f.inst.sensors_init, f.inst.sites, f.inst.energy);
    std::vector<double> residuals = {0.5, 0.5}, drains = {0.7, 0.7};
    f.features = make_node_features(f.inst, f.inst.sensors_init, residuals, drains);
    // coordinates differ inside each pair; force symmetric features
    f.features.x(0, 1) = f.features.x(1, 1) = 0.5;
    f.features.x(2, 1) = f.features.x(3, 1) = 0.5;
    f.features.x(2, 2) = f.features.x(3, 2) = 0.5;
    const auto p = nn::QNetworkParams::init(cfg, 17);
    const Mat h = nn::encode(f.features, f.graph, p, nullptr);
    REQUIRE((h.row(0) - h.row(1)).cwiseAbs().maxCoeff() <= 1e-12);
    REQUIRE((h.row(2) - h.row(3)).cwiseAbs().maxCoeff() <= 1e-12);
  }

  section("attention scores and softmax normalization");
  {
    // q_i = k_j = e1 gives u = 1/sqrt(8)
    Mat q = Mat::Zero(1, 8), k = Mat::Zero(1, 8);
    q(0, 0) = 1.0;
    k(0, 0) = 1.0;
    const Mat u = nn::attention_scores(q, k);
    REQUIRE_NEAR(u(0, 0), 0.35355339059327373, 1e-15);

    const Fixture f = random_fixture(6, 3, 19);
    const auto p = nn::QNetworkParams::init(cfg, 19);
    nn::ForwardTrace trace;
    nn::q_values(f.features, f.graph, p, &trace);
    for (const Mat& a : trace.attn) {
      // stored transposed: one column per site query
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        REQUIRE_NEAR(a.col(j).sum(), 1.0, 1e-6);
        REQUIRE(a.col(j).minCoeff() >= 0.0);
      }
    }
  }

  section("single sensor: attention weight is 1 everywhere");
  {
    const Fixture f = random_fixture(1, 3, 23);
    const auto p = nn::QNetworkParams::init(cfg, 23);
    nn::ForwardTrace trace;
    nn::q_values(f.features, f.graph, p, &trace);
    for (const Mat& a : trace.attn) {
      REQUIRE(a.rows() == 1);  // one sensor
      for (Eigen::Index j = 0; j < a.cols(); ++j) REQUIRE_NEAR(a(0, j), 1.0, 1e-12);
    }
    // zero sensors violate the contract
    Mat empty(0, 64), sites(2, 64);
    REQUIRE_THROWS(nn::attention_fuse(sites, empty, p), ConfigError);
  }

  section("q_head: identical site embeddings give identical Q values");
  {
    const auto p = nn::QNetworkParams::init(cfg, 29);
    Mat fused(4, 64);
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int c = 0; c < 64; ++c) fused(0, c) = u(rng);
    for (int r = 1; r < 4; ++r) fused.row(r) = fused.row(0);
    const Vec q = nn::q_head(fused, p, nullptr);
    REQUIRE(q.size() == 4);
    for (int i = 1; i < 4; ++i) REQUIRE_NEAR(q[i], q[0], 1e-12);
  }

  section("q_head hand-computed single site");
  {
    nn::NetConfig plain;
    plain.use_type_embedding = false;
    plain.use_feature_fusion = false;
    auto p = nn::QNetworkParams::init(plain, 37);
    p.w_h1 = Mat::Identity(128, 128);
    p.b_h1 = Mat::Zero(128, 1);
    p.w_h2 = Mat::Ones(1, 128);
    p.b_h2 = Mat::Zero(1, 1);
    p.b_h2(0, 0) = 0.25;
    Mat emb(1, 64);
    for (int c = 0; c < 64; ++c) emb(0, c) = (c % 2 == 0 ? 1.0 : -1.0) * (c + 1) / 64.0;
    // with one site, pooled == the site embedding; head input is [emb||emb]
    double expect = 0.25;
    for (int c = 0; c < 64; ++c) expect += 2.0 * std::max(emb(0, c), 0.0);
    const Vec q = nn::q_head(emb, p, nullptr);
    REQUIRE_NEAR(q[0], expect, 1e-9);
  }

  section("argmax is invariant to a constant shift of the output bias");
  {
    const Fixture f = random_fixture(8, 5, 41);
    auto p = nn::QNetworkParams::init(cfg, 41);
    const Vec q1 = nn::q_values(f.features, f.graph, p, nullptr);
    int arg1 = 0;
    q1.maxCoeff(&arg1);
    p.b_h2(0, 0) += 3.14159;
    const Vec q2 = nn::q_values(f.features, f.graph, p, nullptr);
    int arg2 = 0;
    q2.maxCoeff(&arg2);
    REQUIRE(arg1 == arg2);
    for (int i = 0; i < q1.size(); ++i) REQUIRE_NEAR(q2[i] - q1[i], 3.14159, 1e-9);
  }

  section("ablation: no fusion feeds raw site embeddings to the head");
  {
    nn::NetConfig ab;
    ab.use_feature_fusion = false;
    const auto p = nn::QNetworkParams::init(ab, 43);
    const Fixture f = random_fixture(4, 3, 43);
    nn::ForwardTrace trace;
    const Vec q = nn::q_values(f.features, f.graph, p, &trace);
    REQUIRE(q.size() == 3);
    const Mat h = nn::encode(f.features, f.graph, p, nullptr);
    const Vec q2 = nn::q_head(h.bottomRows(3), p, nullptr);
    for (int i = 0; i < 3; ++i) REQUIRE_NEAR(q[i], q2[i], 1e-12);
  }

  section("zero loss coefficient gives zero gradients");
  {
    const Fixture f = random_fixture(3, 2, 47);
    const auto p = nn::QNetworkParams::init(cfg, 47);
    nn::ForwardTrace trace;
    const Vec q = nn::q_values(f.features, f.graph, p, &trace);
    auto grads = nn::QNetworkParams::zeros_like(p);
    nn::backward(trace, Vec::Zero(q.size()), p, grads);
    grads.for_each([](const std::string&, Mat& m) {
      if (m.size() > 0) REQUIRE(m.cwiseAbs().maxCoeff() == 0.0);
    });
    // loss touching only site 0 leaves other head outputs without gradient
    Vec dq = Vec::Zero(q.size());
    dq[0] = 1.0;
    grads = nn::QNetworkParams::zeros_like(p);
    nn::backward(trace, dq, p, grads);
    REQUIRE(grads.w_h2.cwiseAbs().maxCoeff() > 0.0);
  }

  section("batched path matches the per-sample path");
  {
    for (const bool fusion : {true, false}) {
      for (const bool type_emb : {true, false}) {
        nn::NetConfig bcfg;
        bcfg.use_feature_fusion = fusion;
        bcfg.use_type_embedding = type_emb;
        const auto p = nn::QNetworkParams::init(bcfg, 61);
        // batch of 5 feature sets over one shared graph
        const Fixture base = random_fixture(6, 4, 67);
        std::vector<NodeFeatures> feats;
        std::mt19937_64 rng(71);
        std::uniform_real_distribution<double> u01(0.05, 1.0);
        for (int b = 0; b < 5; ++b) {
          std::vector<double> residuals(6), drains(6);
          for (auto& r : residuals) r = u01(rng);
          for (auto& d : drains) d = u01(rng);
          feats.push_back(make_node_features(base.inst, base.inst.sensors_init,
                                             residuals, drains));
        }
        std::vector<const NodeFeatures*> ptrs;
        for (auto& f : feats) ptrs.push_back(&f);
        nn::BatchTrace btrace;
        const Mat qb = nn::q_values_batch(ptrs, base.graph, p, &btrace);
        REQUIRE(qb.rows() == 5 && qb.cols() == 4);

        Mat dq = Mat::Zero(5, 4);
        auto batch_grads = nn::QNetworkParams::zeros_like(p);
        auto sum_grads = nn::QNetworkParams::zeros_like(p);
        for (int b = 0; b < 5; ++b) dq(b, (b + 1) % 4) = 0.25 * (b + 1);
        nn::backward_batch(btrace, dq, p, batch_grads);

        for (int b = 0; b < 5; ++b) {
          nn::ForwardTrace trace;
          const Vec q = nn::q_values(feats[b], base.graph, p, &trace);
          REQUIRE((q.transpose() - qb.row(b)).cwiseAbs().maxCoeff() <= 1e-12);
          nn::backward(trace, dq.row(b).transpose(), p, sum_grads);
        }
        double worst = 0.0;
        batch_grads.for_each([&](const std::string& name, const Mat& gb) {
          sum_grads.for_each([&](const std::string& n2, const Mat& gs) {
            if (n2 == name && gb.size() > 0) {
              const double scale = std::max(1.0, gs.cwiseAbs().maxCoeff());
              worst = std::max(worst,
                               (gb - gs).cwiseAbs().maxCoeff() / scale);
            }
          });
        });
        REQUIRE(worst <= 1e-10);
      }
    }
  }

  section("gradient check vs central differences");
  {
    const double err = nn::grad_check(12345);
    std::cout << "   max relative gradient error: " << err << "\n";
    REQUIRE(err < 1e-4);
  }

  section("adam");
  {
    auto p = nn::QNetworkParams::init(cfg, 53);
    const auto before = p;
    auto zero_grads = nn::QNetworkParams::zeros_like(p);
    auto adam = nn::AdamState::fresh(p);
    nn::adam_step(p, zero_grads, adam);
    bool same = true;
    p.for_each([&](const std::string& name, Mat& m) {
      const Mat* b = nullptr;
      before.for_each([&](const std::string& n2, const Mat& m2) {
        if (n2 == name) b = &m2;
      });
      if (b && (m - *b).cwiseAbs().maxCoeff() != 0.0) same = false;
    });
    REQUIRE(same);  // zero gradient on fresh moments: parameters unchanged

    // one step with nonzero grad moves each entry by at most lr
    auto grads = nn::QNetworkParams::zeros_like(p);
    grads.w_x.setConstant(0.5);
    const Mat wx_before = p.w_x;
    nn::adam_step(p, grads, adam, 1e-4);
    const Mat delta = p.w_x - wx_before;
    REQUIRE(delta.cwiseAbs().maxCoeff() <= 1e-4 + 1e-12);
    REQUIRE(delta.maxCoeff() < 0.0);  // moves against the gradient

    // lr = 0 freezes parameters
    const Mat wx_now = p.w_x;
    nn::adam_step(p, grads, adam, 0.0);
    REQUIRE((p.w_x - wx_now).cwiseAbs().maxCoeff() == 0.0);
  }

  section("checkpoint round trip is bit-exact");
  {
    const auto p = nn::QNetworkParams::init(cfg, 59);
    const std::string path = "ckpt_roundtrip_test.bin";
    nn::save_checkpoint(path, p, 321, "rngstate 1 2 3");
    const nn::Checkpoint loaded = nn::load_checkpoint(path);
    REQUIRE(loaded.step_count == 321);
    REQUIRE(loaded.rng_state == "rngstate 1 2 3");
    bool equal = true;
    loaded.params.for_each([&](const std::string& name, const Mat& m) {
      p.for_each([&](const std::string& n2, const Mat& m2) {
        if (n2 == name) {
          for (Eigen::Index i = 0; i < m.size(); ++i) {
            if (m.data()[i] != m2.data()[i]) equal = false;
          }
        }
      });
    });
    REQUIRE(equal);
    const std::string path2 = "ckpt_roundtrip_test2.bin";
    nn::save_checkpoint(path2, loaded.params, loaded.step_count, loaded.rng_state);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)),
                   std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)),
                   std::istreambuf_iterator<char>());
    REQUIRE(!b1.empty() && b1 == b2);
  }

  std::cout << "nn_test OK\n";
  return 0;
}
