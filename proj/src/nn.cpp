#include "wsn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include <json.hpp>

namespace wsn::nn {

namespace {

double uniform_bound(Eigen::Index fan_in, Eigen::Index fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Mat uniform_init(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-uniform_bound(cols, rows),
                                           uniform_bound(cols, rows));
  Mat m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = u(rng);
  return m;
}

Mat normal_init(Eigen::Index rows, Eigen::Index cols, double stddev,
                std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = n(rng);
  return m;
}

// Node embeddings with the per-type slice appended: H = [mu || t_kind].
// Level picks the embedding set; the final embeddings reuse the last set.
Mat with_type(const Mat& mu, const CommGraph& graph, const QNetworkParams& p,
              int level) {
  if (!p.cfg.use_type_embedding) return mu;
  const int d_mu = p.cfg.d_mu();
  const int d_t = p.cfg.d_t();
  Mat h(mu.rows(), NetConfig::d_h);
  h.leftCols(d_mu) = mu;
  for (Eigen::Index i = 0; i < mu.rows(); ++i) {
    const Mat& t = graph.nodes[i].kind == NodeKind::sensor ? p.t_sensor[level]
                                                           : p.t_site[level];
    h.row(i).tail(d_t) = t.col(0).transpose();
  }
  return h;
}

void add_type_grad(const Mat& gh, const CommGraph& graph, QNetworkParams& grads,
                   int level) {
  if (!grads.cfg.use_type_embedding) return;
  const int d_t = grads.cfg.d_t();
  for (Eigen::Index i = 0; i < gh.rows(); ++i) {
    Mat& t = graph.nodes[i].kind == NodeKind::sensor ? grads.t_sensor[level]
                                                     : grads.t_site[level];
    t.col(0) += gh.row(i).tail(d_t).transpose();
  }
}

// Softmax over each COLUMN (queries live in columns of the transposed
// score matrix, so every pass is over contiguous storage).
Mat softmax_cols(const Mat& u_t) {
  const Eigen::RowVectorXd col_max = u_t.colwise().maxCoeff();
  Mat a = (u_t.rowwise() - col_max).array().exp();
  const Eigen::RowVectorXd col_sum = a.colwise().sum();
  a.array().rowwise() /= col_sum.array();
  return a;
}

}  // namespace

QNetworkParams QNetworkParams::init(const NetConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  QNetworkParams p;
  p.cfg = cfg;
  const int d_mu = cfg.d_mu();
  const int d_t = cfg.d_t();
  p.w_x = uniform_init(d_mu, NetConfig::feat_dim, rng);
  p.b_x = Mat::Zero(d_mu, 1);
  for (int l = 0; l < NetConfig::layers; ++l) {
    p.w_msg[l] = uniform_init(d_mu, NetConfig::d_h + 1, rng);
    p.w_upd_self[l] = uniform_init(d_mu, d_mu, rng);
    p.w_upd_msg[l] = uniform_init(d_mu, d_mu, rng);
    if (cfg.use_type_embedding) {
      p.t_sensor[l] = normal_init(d_t, 1, 0.01, rng);
      p.t_site[l] = normal_init(d_t, 1, 0.01, rng);
    }
  }
  if (cfg.use_feature_fusion) {
    p.w_q = uniform_init(NetConfig::d_h, NetConfig::d_h, rng);
    p.w_k = uniform_init(NetConfig::d_h, NetConfig::d_h, rng);
    p.w_v = uniform_init(NetConfig::d_h, NetConfig::d_h, rng);
    p.w_out = uniform_init(NetConfig::d_h, NetConfig::d_h, rng);
  }
  p.w_h1 = uniform_init(NetConfig::mlp_hidden, 2 * NetConfig::d_h, rng);
  p.b_h1 = Mat::Zero(NetConfig::mlp_hidden, 1);
  p.w_h2 = uniform_init(1, NetConfig::mlp_hidden, rng);
  p.b_h2 = Mat::Zero(1, 1);
  return p;
}

QNetworkParams QNetworkParams::zeros_like(const QNetworkParams& other) {
  QNetworkParams p = other;
  p.for_each([](const std::string&, Mat& m) { m.setZero(); });
  return p;
}

void QNetworkParams::for_each(
    const std::function<void(const std::string&, Mat&)>& fn) {
  fn("w_x", w_x);
  fn("b_x", b_x);
  for (int l = 0; l < NetConfig::layers; ++l) {
    const std::string suffix = std::to_string(l);
    fn("w_msg" + suffix, w_msg[l]);
    fn("w_upd_self" + suffix, w_upd_self[l]);
    fn("w_upd_msg" + suffix, w_upd_msg[l]);
    if (cfg.use_type_embedding) {
      fn("t_sensor" + suffix, t_sensor[l]);
      fn("t_site" + suffix, t_site[l]);
    }
  }
  if (cfg.use_feature_fusion) {
    fn("w_q", w_q);
    fn("w_k", w_k);
    fn("w_v", w_v);
    fn("w_out", w_out);
  }
  fn("w_h1", w_h1);
  fn("b_h1", b_h1);
  fn("w_h2", w_h2);
  fn("b_h2", b_h2);
}

void QNetworkParams::for_each(
    const std::function<void(const std::string&, const Mat&)>& fn) const {
  const_cast<QNetworkParams*>(this)->for_each(
      [&fn](const std::string& name, Mat& m) { fn(name, m); });
}

std::size_t QNetworkParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&n](const std::string&, const Mat& m) { n += m.size(); });
  return n;
}

Mat encode(const NodeFeatures& features, const CommGraph& graph,
           const QNetworkParams& p, ForwardTrace* trace) {
  const int n = static_cast<int>(graph.nodes.size());
  if (features.x.cols() != NetConfig::feat_dim || features.x.rows() != n ||
      features.sensor_count != graph.sensor_count ||
      features.site_count != graph.site_count) {
    throw ConfigError("encode: feature matrix does not match graph");
  }
  const int d_mu = p.cfg.d_mu();
  const int d_h = NetConfig::d_h;

  Mat mu = (features.x * p.w_x.transpose()).rowwise() + p.b_x.col(0).transpose();
  if (trace) {
    trace->x = features.x;
    trace->graph = &graph;
    trace->mu[0] = mu;
  }
  for (int l = 0; l < NetConfig::layers; ++l) {
    Mat h = with_type(mu, graph, p, l);
    // Split W_msg into the node part and the edge-weight column so the node
    // projection runs once per node instead of once per edge.
    const Mat proj = p.w_msg[l].leftCols(d_h) * h.transpose();  // d_mu x n
    const Vec wcol = p.w_msg[l].col(d_h);
    Mat msg_t = Mat::Zero(d_mu, n);
    const double* __restrict c = wcol.data();
    for (const CommEdge& e : graph.edges) {
      const double* __restrict pu = proj.col(e.u).data();
      const double* __restrict pv = proj.col(e.v).data();
      double* __restrict mv = msg_t.col(e.v).data();
      double* __restrict mu_col = msg_t.col(e.u).data();
      const double w = e.weight;
      for (int r = 0; r < d_mu; ++r) {
        mv[r] += std::max(pu[r] + w * c[r], 0.0);
        mu_col[r] += std::max(pv[r] + w * c[r], 0.0);
      }
    }
    const Mat msg = msg_t.transpose();
    Mat pre = mu * p.w_upd_self[l].transpose() + msg * p.w_upd_msg[l].transpose();
    mu = pre.cwiseMax(0.0);
    if (trace) {
      trace->h_typed[l] = std::move(h);
      trace->msg[l] = msg;
      trace->upd_pre[l] = std::move(pre);
      trace->mu[l + 1] = mu;
    }
  }
  Mat h_final = with_type(mu, graph, p, NetConfig::layers - 1);
  if (trace) trace->h_final = h_final;
  return h_final;
}

Mat attention_scores(const Mat& q, const Mat& k) {
  return q * k.transpose() / std::sqrt(static_cast<double>(NetConfig::d_k));
}

Mat attention_fuse(const Mat& site_emb, const Mat& sensor_emb,
                   const QNetworkParams& p, ForwardTrace* trace) {
  if (sensor_emb.rows() == 0) {
    throw ConfigError("attention_fuse: at least one sensor required");
  }
  const int d_k = NetConfig::d_k;
  const Mat q = site_emb * p.w_q.transpose();
  const Mat k = sensor_emb * p.w_k.transpose();
  const Mat v = sensor_emb * p.w_v.transpose();
  Mat h_prime(site_emb.rows(), NetConfig::d_h);
  // scores kept transposed (sensors x sites) so softmax runs down columns
  std::vector<Mat> attn_t(NetConfig::heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
  for (int m = 0; m < NetConfig::heads; ++m) {
    const auto qm = q.middleCols(m * d_k, d_k);
    const auto km = k.middleCols(m * d_k, d_k);
    attn_t[m] = softmax_cols(scale * (km * qm.transpose()));
    h_prime.middleCols(m * d_k, d_k) =
        attn_t[m].transpose() * v.middleCols(m * d_k, d_k);
  }
  Mat fused = h_prime * p.w_out.transpose();
  if (trace) {
    trace->q_proj = q;
    trace->k_proj = k;
    trace->v_proj = v;
    trace->attn = std::move(attn_t);
    trace->h_prime = std::move(h_prime);
  }
  return fused;
}

Vec q_head(const Mat& site_emb, const QNetworkParams& p, ForwardTrace* trace) {
  const int s = static_cast<int>(site_emb.rows());
  const int d_h = NetConfig::d_h;
  const Vec pooled = site_emb.colwise().mean().transpose();
  Mat z(s, 2 * d_h);
  z.leftCols(d_h) = site_emb;
  z.rightCols(d_h) = pooled.transpose().replicate(s, 1);
  Mat pre = (z * p.w_h1.transpose()).rowwise() + p.b_h1.col(0).transpose();
  const Mat hidden = pre.cwiseMax(0.0);
  Vec q = hidden * p.w_h2.row(0).transpose();
  q.array() += p.b_h2(0, 0);
  if (trace) {
    trace->pooled = pooled;
    trace->head_in = std::move(z);
    trace->head_pre = std::move(pre);
    trace->q_out = q;
  }
  return q;
}

Vec q_values(const NodeFeatures& features, const CommGraph& graph,
             const QNetworkParams& p, ForwardTrace* trace) {
  const Mat h = encode(features, graph, p, trace);
  const Mat site_emb = h.bottomRows(graph.site_count);
  Mat fused;
  if (p.cfg.use_feature_fusion) {
    fused = attention_fuse(site_emb, h.topRows(graph.sensor_count), p, trace);
  } else {
    fused = site_emb;
  }
  if (trace) trace->fused = fused;
  return q_head(fused, p, trace);
}

void backward(const ForwardTrace& trace, const Vec& dq, const QNetworkParams& p,
              QNetworkParams& grads) {
  const CommGraph& graph = *trace.graph;
  const int n = static_cast<int>(graph.nodes.size());
  const int n_sites = graph.site_count;
  const int n_sensors = graph.sensor_count;
  const int d_mu = p.cfg.d_mu();
  const int d_h = NetConfig::d_h;
  const int d_k = NetConfig::d_k;

  // Q-head.
  const Mat hidden = trace.head_pre.cwiseMax(0.0);
  grads.w_h2.row(0) += dq.transpose() * hidden;
  grads.b_h2(0, 0) += dq.sum();
  Mat g_hidden = dq * p.w_h2.row(0);
  g_hidden = (trace.head_pre.array() > 0.0).select(g_hidden, 0.0);
  grads.w_h1 += g_hidden.transpose() * trace.head_in;
  grads.b_h1.col(0) += g_hidden.colwise().sum().transpose();
  const Mat gz = g_hidden * p.w_h1;
  Mat g_fused = gz.leftCols(d_h);
  const Eigen::RowVectorXd g_pooled = gz.rightCols(d_h).colwise().sum();
  g_fused.rowwise() += g_pooled / static_cast<double>(n_sites);

  // Attention fusion (or pass-through).
  Mat gh = Mat::Zero(n, d_h);
  if (p.cfg.use_feature_fusion) {
    grads.w_out += g_fused.transpose() * trace.h_prime;
    const Mat g_hp = g_fused * p.w_out;
    Mat g_q = Mat::Zero(n_sites, d_h);
    Mat g_k = Mat::Zero(n_sensors, d_h);
    Mat g_v = Mat::Zero(n_sensors, d_h);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
    for (int m = 0; m < NetConfig::heads; ++m) {
      const auto g_hm = g_hp.middleCols(m * d_k, d_k);
      const Mat& am_t = trace.attn[m];  // sensors x sites
      const auto vm = trace.v_proj.middleCols(m * d_k, d_k);
      const Mat g_am_t = vm * g_hm.transpose();
      g_v.middleCols(m * d_k, d_k) += am_t * g_hm;
      const Eigen::RowVectorXd col_dot =
          (g_am_t.array() * am_t.array()).colwise().sum();
      const Mat g_um_t = am_t.array() * (g_am_t.rowwise() - col_dot).array();
      g_q.middleCols(m * d_k, d_k) +=
          scale * g_um_t.transpose() * trace.k_proj.middleCols(m * d_k, d_k);
      g_k.middleCols(m * d_k, d_k) +=
          scale * g_um_t * trace.q_proj.middleCols(m * d_k, d_k);
    }
    const auto site_rows = trace.h_final.bottomRows(n_sites);
    const auto sensor_rows = trace.h_final.topRows(n_sensors);
    grads.w_q += g_q.transpose() * site_rows;
    grads.w_k += g_k.transpose() * sensor_rows;
    grads.w_v += g_v.transpose() * sensor_rows;
    gh.bottomRows(n_sites) += g_q * p.w_q;
    gh.topRows(n_sensors) += g_k * p.w_k + g_v * p.w_v;
  } else {
    gh.bottomRows(n_sites) += g_fused;
  }

  // Final type slice shares the last embedding set with the last layer.
  add_type_grad(gh, graph, grads, NetConfig::layers - 1);
  Mat g_mu = gh.leftCols(d_mu);

  for (int l = NetConfig::layers - 1; l >= 0; --l) {
    const Mat g_pre =
        (trace.upd_pre[l].array() > 0.0).select(g_mu, 0.0);
    grads.w_upd_self[l] += g_pre.transpose() * trace.mu[l];
    grads.w_upd_msg[l] += g_pre.transpose() * trace.msg[l];
    Mat g_mu_prev = g_pre * p.w_upd_self[l];
    const Mat g_msg_t = (g_pre * p.w_upd_msg[l]).transpose();  // d_mu x n

    const Mat& h = trace.h_typed[l];
    const Mat proj = p.w_msg[l].leftCols(d_h) * h.transpose();
    const Vec wcol = p.w_msg[l].col(d_h);
    Mat d_src = Mat::Zero(d_mu, n);  // per-source summed ReLU-masked deltas
    Vec g_wcol = Vec::Zero(d_mu);
    const double* __restrict cb = wcol.data();
    double* __restrict gc = g_wcol.data();
    auto edge_dir = [&](int u, int v, double w) {
      const double* __restrict pu = proj.col(u).data();
      const double* __restrict gm = g_msg_t.col(v).data();
      double* __restrict ds = d_src.col(u).data();
      for (int r = 0; r < d_mu; ++r) {
        const double mask = pu[r] + w * cb[r] > 0.0 ? 1.0 : 0.0;
        ds[r] += mask * gm[r];
        gc[r] += mask * w * gm[r];
      }
    };
    for (const CommEdge& e : graph.edges) {
      edge_dir(e.u, e.v, e.weight);
      edge_dir(e.v, e.u, e.weight);
    }
    grads.w_msg[l].leftCols(d_h) += d_src * h;
    grads.w_msg[l].col(d_h) += g_wcol;
    const Mat gh_l = d_src.transpose() * p.w_msg[l].leftCols(d_h);
    add_type_grad(gh_l, graph, grads, l);
    g_mu = g_mu_prev + gh_l.leftCols(d_mu);
  }

  grads.w_x += g_mu.transpose() * trace.x;
  grads.b_x.col(0) += g_mu.colwise().sum().transpose();

  bool finite = true;
  grads.for_each([&finite](const std::string&, Mat& m) {
    if (!m.allFinite()) finite = false;
  });
  if (!finite) throw NumericError("backward: non-finite gradient");
}

AdamState AdamState::fresh(const QNetworkParams& params) {
  AdamState s;
  s.m = QNetworkParams::zeros_like(params);
  s.v = QNetworkParams::zeros_like(params);
  s.step = 0;
  return s;
}

void adam_step(QNetworkParams& params, const QNetworkParams& grads,
               AdamState& state, double lr, double beta1, double beta2,
               double eps) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  std::vector<Mat*> ps, ms, vs;
  std::vector<const Mat*> gs;
  params.for_each([&ps](const std::string&, Mat& m) { ps.push_back(&m); });
  grads.for_each([&gs](const std::string&, const Mat& m) { gs.push_back(&m); });
  state.m.for_each([&ms](const std::string&, Mat& m) { ms.push_back(&m); });
  state.v.for_each([&vs](const std::string&, Mat& m) { vs.push_back(&m); });
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Mat& m = *ms[i];
    Mat& v = *vs[i];
    const Mat& g = *gs[i];
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
    ps[i]->array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  }
}

double grad_check(std::uint64_t seed) {
  // Fixed 3-sensor / 2-site geometry; params and features drawn per seed.
  // Seeds whose forward pass lands too close to a ReLU kink are skipped so
  // the central difference (step 1e-4) stays on one linear piece.
  WsnInstance inst;
  inst.map_type = 0;
  inst.width = 60;
  inst.height = 60;
  inst.sites = {{20, 30}, {40, 30}};
  inst.site_accessible = {true, true};
  inst.sensors_init = {{15, 20}, {30, 40}, {45, 22}};
  inst.energy = {};

  for (std::uint64_t attempt = 0;; ++attempt) {
    std::mt19937_64 rng(seed + attempt * 7919);
    std::uniform_real_distribution<double> u01(0.05, 0.95);
    std::vector<double> residuals(3), drains(3);
    for (auto& r : residuals) r = u01(rng);
    for (auto& d : drains) d = u01(rng);
    const NodeFeatures f =
        make_node_features(inst, inst.sensors_init, residuals, drains);
    const CommGraph g =
        build_comm_graph(inst.sensors_init, inst.sites, inst.energy);

    NetConfig cfg;
    QNetworkParams params = QNetworkParams::init(cfg, rng());
    Vec coeff(inst.site_count());
    for (int i = 0; i < coeff.size(); ++i) coeff[i] = u01(rng) * 2.0 - 1.0;

    ForwardTrace trace;
    q_values(f, g, params, &trace);

    double margin = std::numeric_limits<double>::infinity();
    for (int l = 0; l < NetConfig::layers; ++l) {
      margin = std::min(margin, trace.upd_pre[l].cwiseAbs().minCoeff());
      const Mat h = with_type(trace.mu[l], g, params, l);
      const Mat proj = params.w_msg[l].leftCols(NetConfig::d_h) * h.transpose();
      const Vec wcol = params.w_msg[l].col(NetConfig::d_h);
      for (const CommEdge& e : g.edges) {
        margin = std::min(margin,
                          (proj.col(e.u) + e.weight * wcol).cwiseAbs().minCoeff());
        margin = std::min(margin,
                          (proj.col(e.v) + e.weight * wcol).cwiseAbs().minCoeff());
      }
    }
    margin = std::min(margin, trace.head_pre.cwiseAbs().minCoeff());
    if (margin < 2e-3) continue;

    QNetworkParams grads = QNetworkParams::zeros_like(params);
    backward(trace, coeff, params, grads);

    auto loss_at = [&]() {
      return coeff.dot(q_values(f, g, params, nullptr));
    };
    const double h_step = 1e-4;
    double max_rel = 0.0;
    std::vector<Mat*> ps, gs;
    params.for_each([&ps](const std::string&, Mat& m) { ps.push_back(&m); });
    grads.for_each([&gs](const std::string&, Mat& m) { gs.push_back(&m); });
    for (std::size_t k = 0; k < ps.size(); ++k) {
      Mat& pm = *ps[k];
      for (Eigen::Index idx = 0; idx < pm.size(); ++idx) {
        const double saved = pm.data()[idx];
        pm.data()[idx] = saved + h_step;
        const double lp = loss_at();
        pm.data()[idx] = saved - h_step;
        const double lm = loss_at();
        pm.data()[idx] = saved;
        const double numeric = (lp - lm) / (2.0 * h_step);
        const double analytic = gs[k]->data()[idx];
        const double rel = std::abs(analytic - numeric) /
                           std::max({std::abs(analytic), std::abs(numeric), 1e-3});
        max_rel = std::max(max_rel, rel);
      }
    }
    return max_rel;
  }
}

namespace {
constexpr char kMagic[] = "WSNQNET1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;
}  // namespace

void save_checkpoint(const std::string& path, const QNetworkParams& params,
                     long step_count, const std::string& rng_state) {
  nlohmann::json header;
  header["config"] = {{"use_type_embedding", params.cfg.use_type_embedding},
                      {"use_feature_fusion", params.cfg.use_feature_fusion}};
  header["step_count"] = step_count;
  header["rng_state"] = rng_state;
  nlohmann::json shapes = nlohmann::json::array();
  params.for_each([&shapes](const std::string& name, const Mat& m) {
    shapes.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  });
  header["params"] = shapes;
  const std::string head = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path);
  out.write(kMagic, static_cast<std::streamsize>(kMagicLen));
  const std::uint64_t len = head.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  params.for_each([&out](const std::string&, const Mat& m) {
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * m.size()));
  });
  if (!out) throw ConfigError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint " + path);
  char magic[kMagicLen];
  in.read(magic, static_cast<std::streamsize>(kMagicLen));
  if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0) {
    throw ConfigError("bad checkpoint magic in " + path);
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string head(len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(len));
  const nlohmann::json header = nlohmann::json::parse(head);

  NetConfig cfg;
  cfg.use_type_embedding = header.at("config").at("use_type_embedding").get<bool>();
  cfg.use_feature_fusion = header.at("config").at("use_feature_fusion").get<bool>();
  Checkpoint ckpt;
  ckpt.params = QNetworkParams::init(cfg, 0);
  ckpt.step_count = header.at("step_count").get<long>();
  ckpt.rng_state = header.at("rng_state").get<std::string>();

  const nlohmann::json& shapes = header.at("params");
  std::size_t k = 0;
  ckpt.params.for_each([&](const std::string& name, Mat& m) {
    const nlohmann::json& s = shapes.at(k++);
    if (s.at("name").get<std::string>() != name ||
        s.at("rows").get<Eigen::Index>() != m.rows() ||
        s.at("cols").get<Eigen::Index>() != m.cols()) {
      throw ConfigError("checkpoint shape mismatch at " + name);
    }
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
  });
  if (!in || k != shapes.size()) throw ConfigError("truncated checkpoint " + path);
  return ckpt;
}

}  // namespace wsn::nn
namespace wsn::nn {

namespace {

// Type-embedding columns for stacked samples, node-major rows (i*B + b).
void fill_type_batch(Mat& h, const Mat& mu, const CommGraph& graph, int batch,
                     const QNetworkParams& p, int level) {
  const int d_mu = p.cfg.d_mu();
  const int d_t = p.cfg.d_t();
  h.resize(mu.rows(), p.cfg.use_type_embedding ? NetConfig::d_h : d_mu);
  h.leftCols(d_mu) = mu;
  if (!p.cfg.use_type_embedding) return;
  const int n = static_cast<int>(graph.nodes.size());
  for (int i = 0; i < n; ++i) {
    const Mat& t = graph.nodes[i].kind == NodeKind::sensor ? p.t_sensor[level]
                                                           : p.t_site[level];
    h.middleRows(i * batch, batch).rightCols(d_t).rowwise() =
        t.col(0).transpose();
  }
}

void add_type_grad_batch(const Mat& gh, const CommGraph& graph, int batch,
                         QNetworkParams& grads, int level) {
  if (!grads.cfg.use_type_embedding) return;
  const int d_t = grads.cfg.d_t();
  const int n = static_cast<int>(graph.nodes.size());
  for (int i = 0; i < n; ++i) {
    Mat& t = graph.nodes[i].kind == NodeKind::sensor ? grads.t_sensor[level]
                                                     : grads.t_site[level];
    t.col(0) += gh.middleRows(i * batch, batch)
                    .rightCols(d_t)
                    .colwise()
                    .sum()
                    .transpose();
  }
}

void softmax_cols_inplace(Mat& a) {
  const Eigen::RowVectorXd col_max = a.colwise().maxCoeff();
  a = (a.rowwise() - col_max).array().exp();
  const Eigen::RowVectorXd col_sum = a.colwise().sum();
  a.array().rowwise() /= col_sum.array();
}

}  // namespace

Mat q_values_batch(const std::vector<const NodeFeatures*>& features,
                   const CommGraph& graph, const QNetworkParams& p,
                   BatchTrace* trace) {
  // All intermediates live in the trace so repeated calls with the same
  // shapes reuse their buffers instead of churning the allocator.
  BatchTrace local;
  BatchTrace& t = trace ? *trace : local;

  const int b_count = static_cast<int>(features.size());
  if (b_count == 0) throw ConfigError("q_values_batch: empty batch");
  const int n = static_cast<int>(graph.nodes.size());
  const int n_sensors = graph.sensor_count;
  const int n_sites = graph.site_count;
  const int d_mu = p.cfg.d_mu();
  const int d_h = NetConfig::d_h;
  const int d_k = NetConfig::d_k;
  const Eigen::Index nb = static_cast<Eigen::Index>(n) * b_count;

  t.batch = b_count;
  t.graph = &graph;
  t.x.resize(nb, NetConfig::feat_dim);
  for (int b = 0; b < b_count; ++b) {
    const NodeFeatures& f = *features[b];
    if (f.x.rows() != n || f.x.cols() != NetConfig::feat_dim) {
      throw ConfigError("q_values_batch: feature shape mismatch");
    }
    for (int i = 0; i < n; ++i) t.x.row(i * b_count + b) = f.x.row(i);
  }

  t.mu[0].resize(nb, d_mu);
  t.mu[0].noalias() = t.x * p.w_x.transpose();
  t.mu[0].rowwise() += p.b_x.col(0).transpose();
  for (int l = 0; l < NetConfig::layers; ++l) {
    fill_type_batch(t.h_typed[l], t.mu[l], graph, b_count, p, l);
    const Mat& h = t.h_typed[l];
    t.ws_proj_t.resize(d_mu, nb);
    t.ws_proj_t.noalias() = p.w_msg[l].leftCols(h.cols()) * h.transpose();
    const Vec wcol = p.w_msg[l].col(h.cols());
    t.ws_msg_t.resize(d_mu, nb);
    t.ws_msg_t.setZero();
    for (const CommEdge& e : graph.edges) {
      const auto pu = t.ws_proj_t.middleCols(e.u * b_count, b_count);
      const auto pv = t.ws_proj_t.middleCols(e.v * b_count, b_count);
      t.ws_msg_t.middleCols(e.v * b_count, b_count) +=
          (pu.colwise() + e.weight * wcol).cwiseMax(0.0);
      t.ws_msg_t.middleCols(e.u * b_count, b_count) +=
          (pv.colwise() + e.weight * wcol).cwiseMax(0.0);
    }
    t.msg[l].resize(nb, d_mu);
    t.msg[l].noalias() = t.ws_msg_t.transpose();
    t.upd_pre[l].resize(nb, d_mu);
    t.upd_pre[l].noalias() = t.mu[l] * p.w_upd_self[l].transpose();
    t.upd_pre[l].noalias() += t.msg[l] * p.w_upd_msg[l].transpose();
    t.mu[l + 1].resize(nb, d_mu);
    t.mu[l + 1] = t.upd_pre[l].cwiseMax(0.0);
  }
  fill_type_batch(t.h_final, t.mu[NetConfig::layers], graph, b_count, p,
                  NetConfig::layers - 1);

  // Switch to sample-major rows for the attention and head stages.
  t.hs.resize(static_cast<Eigen::Index>(n_sites) * b_count, t.h_final.cols());
  t.hn.resize(static_cast<Eigen::Index>(n_sensors) * b_count, t.h_final.cols());
  for (int b = 0; b < b_count; ++b) {
    for (int s = 0; s < n_sites; ++s) {
      t.hs.row(b * n_sites + s) = t.h_final.row((n_sensors + s) * b_count + b);
    }
    for (int j = 0; j < n_sensors; ++j) {
      t.hn.row(b * n_sensors + j) = t.h_final.row(j * b_count + b);
    }
  }

  if (p.cfg.use_feature_fusion) {
    t.q_proj.resize(t.hs.rows(), d_h);
    t.q_proj.noalias() = t.hs * p.w_q.transpose();
    t.k_proj.resize(t.hn.rows(), d_h);
    t.k_proj.noalias() = t.hn * p.w_k.transpose();
    t.v_proj.resize(t.hn.rows(), d_h);
    t.v_proj.noalias() = t.hn * p.w_v.transpose();
    t.h_prime.resize(t.hs.rows(), d_h);
    if (t.attn.size() != NetConfig::heads) t.attn.resize(NetConfig::heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
    for (int m = 0; m < NetConfig::heads; ++m) {
      Mat& u_t = t.attn[m];
      u_t.resize(n_sensors, static_cast<Eigen::Index>(n_sites) * b_count);
      for (int b = 0; b < b_count; ++b) {
        u_t.middleCols(b * n_sites, n_sites).noalias() =
            scale * t.k_proj.middleRows(b * n_sensors, n_sensors)
                        .middleCols(m * d_k, d_k) *
                t.q_proj.middleRows(b * n_sites, n_sites)
                    .middleCols(m * d_k, d_k)
                    .transpose();
      }
      softmax_cols_inplace(u_t);
      for (int b = 0; b < b_count; ++b) {
        t.h_prime.middleRows(b * n_sites, n_sites).middleCols(m * d_k, d_k)
            .noalias() = u_t.middleCols(b * n_sites, n_sites).transpose() *
                         t.v_proj.middleRows(b * n_sensors, n_sensors)
                             .middleCols(m * d_k, d_k);
      }
    }
    t.fused.resize(t.hs.rows(), d_h);
    t.fused.noalias() = t.h_prime * p.w_out.transpose();
  } else {
    t.fused = t.hs;
  }

  t.pooled.resize(b_count, d_h);
  for (int b = 0; b < b_count; ++b) {
    t.pooled.row(b) = t.fused.middleRows(b * n_sites, n_sites).colwise().mean();
  }
  t.head_in.resize(t.fused.rows(), 2 * d_h);
  t.head_in.leftCols(d_h) = t.fused;
  for (int b = 0; b < b_count; ++b) {
    t.head_in.middleRows(b * n_sites, n_sites).rightCols(d_h).rowwise() =
        t.pooled.row(b);
  }
  t.head_pre.resize(t.head_in.rows(), NetConfig::mlp_hidden);
  t.head_pre.noalias() = t.head_in * p.w_h1.transpose();
  t.head_pre.rowwise() += p.b_h1.col(0).transpose();
  t.ws_hidden.resize(t.head_pre.rows(), t.head_pre.cols());
  t.ws_hidden = t.head_pre.cwiseMax(0.0);
  t.ws_qflat.resize(t.ws_hidden.rows());
  t.ws_qflat.noalias() = t.ws_hidden * p.w_h2.row(0).transpose();
  t.ws_qflat.array() += p.b_h2(0, 0);

  Mat q_out(b_count, n_sites);
  for (int b = 0; b < b_count; ++b) {
    q_out.row(b) = t.ws_qflat.segment(b * n_sites, n_sites).transpose();
  }
  return q_out;
}

void backward_batch(BatchTrace& t, const Mat& dq, const QNetworkParams& p,
                    QNetworkParams& grads) {
  const CommGraph& graph = *t.graph;
  const int b_count = t.batch;
  const int n = static_cast<int>(graph.nodes.size());
  const int n_sites = graph.site_count;
  const int n_sensors = graph.sensor_count;
  const int d_mu = p.cfg.d_mu();
  const int d_h = NetConfig::d_h;
  const int d_k = NetConfig::d_k;
  const Eigen::Index nb = static_cast<Eigen::Index>(n) * b_count;
  const Eigen::Index sb = static_cast<Eigen::Index>(n_sites) * b_count;
  const Eigen::Index senb = static_cast<Eigen::Index>(n_sensors) * b_count;

  t.ws_dq_flat.resize(sb);
  for (int b = 0; b < b_count; ++b) {
    t.ws_dq_flat.segment(b * n_sites, n_sites) = dq.row(b).transpose();
  }

  // Q head.
  grads.w_h2.row(0) += t.ws_dq_flat.transpose() * t.ws_hidden;
  grads.b_h2(0, 0) += t.ws_dq_flat.sum();
  t.ws_g_hidden.resize(sb, NetConfig::mlp_hidden);
  t.ws_g_hidden.noalias() = t.ws_dq_flat * p.w_h2.row(0);
  t.ws_g_hidden = (t.head_pre.array() > 0.0).select(t.ws_g_hidden, 0.0);
  grads.w_h1 += t.ws_g_hidden.transpose() * t.head_in;
  grads.b_h1.col(0) += t.ws_g_hidden.colwise().sum().transpose();
  t.ws_gz.resize(sb, 2 * d_h);
  t.ws_gz.noalias() = t.ws_g_hidden * p.w_h1;
  t.ws_g_fused.resize(sb, d_h);
  t.ws_g_fused = t.ws_gz.leftCols(d_h);
  for (int b = 0; b < b_count; ++b) {
    const Eigen::RowVectorXd g_pooled =
        t.ws_gz.middleRows(b * n_sites, n_sites).rightCols(d_h).colwise().sum();
    t.ws_g_fused.middleRows(b * n_sites, n_sites).rowwise() +=
        g_pooled / static_cast<double>(n_sites);
  }

  t.ws_g_hs.resize(sb, t.hs.cols());
  t.ws_g_hs.setZero();
  t.ws_g_hn.resize(senb, t.hn.cols());
  t.ws_g_hn.setZero();
  if (p.cfg.use_feature_fusion) {
    grads.w_out += t.ws_g_fused.transpose() * t.h_prime;
    t.ws_g_hp.resize(sb, d_h);
    t.ws_g_hp.noalias() = t.ws_g_fused * p.w_out;
    t.ws_g_q.resize(sb, d_h);
    t.ws_g_q.setZero();
    t.ws_g_k.resize(senb, d_h);
    t.ws_g_k.setZero();
    t.ws_g_v.resize(senb, d_h);
    t.ws_g_v.setZero();
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
    for (int m = 0; m < NetConfig::heads; ++m) {
      const Mat& am_t = t.attn[m];  // N x (S*B)
      t.ws_g_am_t.resize(am_t.rows(), am_t.cols());
      for (int b = 0; b < b_count; ++b) {
        t.ws_g_am_t.middleCols(b * n_sites, n_sites).noalias() =
            t.v_proj.middleRows(b * n_sensors, n_sensors)
                .middleCols(m * d_k, d_k) *
            t.ws_g_hp.middleRows(b * n_sites, n_sites)
                .middleCols(m * d_k, d_k)
                .transpose();
        t.ws_g_v.middleRows(b * n_sensors, n_sensors).middleCols(m * d_k, d_k)
            .noalias() += am_t.middleCols(b * n_sites, n_sites) *
                          t.ws_g_hp.middleRows(b * n_sites, n_sites)
                              .middleCols(m * d_k, d_k);
      }
      const Eigen::RowVectorXd col_dot =
          (t.ws_g_am_t.array() * am_t.array()).colwise().sum();
      t.ws_g_um_t.resize(am_t.rows(), am_t.cols());
      t.ws_g_um_t =
          am_t.array() * (t.ws_g_am_t.rowwise() - col_dot).array();
      for (int b = 0; b < b_count; ++b) {
        t.ws_g_q.middleRows(b * n_sites, n_sites).middleCols(m * d_k, d_k)
            .noalias() +=
            scale * t.ws_g_um_t.middleCols(b * n_sites, n_sites).transpose() *
            t.k_proj.middleRows(b * n_sensors, n_sensors)
                .middleCols(m * d_k, d_k);
        t.ws_g_k.middleRows(b * n_sensors, n_sensors).middleCols(m * d_k, d_k)
            .noalias() += scale * t.ws_g_um_t.middleCols(b * n_sites, n_sites) *
                          t.q_proj.middleRows(b * n_sites, n_sites)
                              .middleCols(m * d_k, d_k);
      }
    }
    grads.w_q += t.ws_g_q.transpose() * t.hs;
    grads.w_k += t.ws_g_k.transpose() * t.hn;
    grads.w_v += t.ws_g_v.transpose() * t.hn;
    t.ws_g_hs.noalias() += t.ws_g_q * p.w_q;
    t.ws_g_hn.noalias() += t.ws_g_k * p.w_k;
    t.ws_g_hn.noalias() += t.ws_g_v * p.w_v;
  } else {
    t.ws_g_hs += t.ws_g_fused;
  }

  // Back to node-major rows.
  t.ws_gh.resize(nb, t.h_final.cols());
  for (int b = 0; b < b_count; ++b) {
    for (int s = 0; s < n_sites; ++s) {
      t.ws_gh.row((n_sensors + s) * b_count + b) = t.ws_g_hs.row(b * n_sites + s);
    }
    for (int j = 0; j < n_sensors; ++j) {
      t.ws_gh.row(j * b_count + b) = t.ws_g_hn.row(b * n_sensors + j);
    }
  }

  add_type_grad_batch(t.ws_gh, graph, b_count, grads, NetConfig::layers - 1);
  t.ws_g_mu.resize(nb, d_mu);
  t.ws_g_mu = t.ws_gh.leftCols(d_mu);

  for (int l = NetConfig::layers - 1; l >= 0; --l) {
    t.ws_g_pre.resize(nb, d_mu);
    t.ws_g_pre = (t.upd_pre[l].array() > 0.0).select(t.ws_g_mu, 0.0);
    grads.w_upd_self[l] += t.ws_g_pre.transpose() * t.mu[l];
    grads.w_upd_msg[l] += t.ws_g_pre.transpose() * t.msg[l];
    t.ws_g_mu_prev.resize(nb, d_mu);
    t.ws_g_mu_prev.noalias() = t.ws_g_pre * p.w_upd_self[l];
    t.ws_g_msg_t.resize(d_mu, nb);
    t.ws_g_msg_t.noalias() = (t.ws_g_pre * p.w_upd_msg[l]).transpose();

    const Mat& h = t.h_typed[l];
    t.ws_proj_t.resize(d_mu, nb);
    t.ws_proj_t.noalias() = p.w_msg[l].leftCols(h.cols()) * h.transpose();
    const Vec wcol = p.w_msg[l].col(h.cols());
    t.ws_d_src.resize(d_mu, nb);
    t.ws_d_src.setZero();
    Vec g_wcol = Vec::Zero(d_mu);
    t.ws_delta.resize(d_mu, b_count);
    for (const CommEdge& e : graph.edges) {
      const auto pu = t.ws_proj_t.middleCols(e.u * b_count, b_count);
      const auto pv = t.ws_proj_t.middleCols(e.v * b_count, b_count);
      const auto gmu_ = t.ws_g_msg_t.middleCols(e.u * b_count, b_count);
      const auto gmv = t.ws_g_msg_t.middleCols(e.v * b_count, b_count);
      t.ws_delta = ((pu.colwise() + e.weight * wcol).array() > 0.0).select(gmv, 0.0);
      t.ws_d_src.middleCols(e.u * b_count, b_count) += t.ws_delta;
      g_wcol.noalias() += e.weight * t.ws_delta.rowwise().sum();
      t.ws_delta = ((pv.colwise() + e.weight * wcol).array() > 0.0).select(gmu_, 0.0);
      t.ws_d_src.middleCols(e.v * b_count, b_count) += t.ws_delta;
      g_wcol.noalias() += e.weight * t.ws_delta.rowwise().sum();
    }
    grads.w_msg[l].leftCols(h.cols()) += t.ws_d_src * h;
    grads.w_msg[l].col(h.cols()) += g_wcol;
    t.ws_gh_l.resize(nb, h.cols());
    t.ws_gh_l.noalias() = t.ws_d_src.transpose() * p.w_msg[l].leftCols(h.cols());
    add_type_grad_batch(t.ws_gh_l, graph, b_count, grads, l);
    t.ws_g_mu = t.ws_g_mu_prev + t.ws_gh_l.leftCols(d_mu);
  }

  grads.w_x += t.ws_g_mu.transpose() * t.x;
  grads.b_x.col(0) += t.ws_g_mu.colwise().sum().transpose();

  bool finite = true;
  grads.for_each([&finite](const std::string&, Mat& m) {
    if (!m.allFinite()) finite = false;
  });
  if (!finite) throw NumericError("backward_batch: non-finite gradient");
}

}  // namespace wsn::nn
