#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wsn/comm_graph.hpp"
#include "wsn/env.hpp"

namespace wsn::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Architecture switches. The full network concatenates a learnable per-type
// embedding onto each node embedding (d_mu + d_t = d_h) and fuses site
// embeddings with sensor embeddings through multi-head attention. Either
// part can be disabled for the ablation variants.
struct NetConfig {
  bool use_type_embedding = true;
  bool use_feature_fusion = true;

  static constexpr int feat_dim = 5;
  static constexpr int d_h = 64;
  static constexpr int layers = 3;
  static constexpr int heads = 8;
  static constexpr int d_k = 8;       // per-head query/key/value width
  static constexpr int mlp_hidden = 128;

  int d_mu() const { return use_type_embedding ? 48 : d_h; }
  int d_t() const { return use_type_embedding ? d_h - 48 : 0; }
};

// Every learnable matrix of the Q-network, plus the same structure reused
// for gradients and Adam moments. Attention matrices are stored stacked:
// w_q/w_k/w_v rows [8m, 8m+8) belong to head m; w_out columns likewise.
struct QNetworkParams {
  NetConfig cfg;

  Mat w_x, b_x;                     // input projection, d_mu x 5 and d_mu x 1
  std::array<Mat, NetConfig::layers> w_msg;       // d_mu x (d_h + 1)
  std::array<Mat, NetConfig::layers> w_upd_self;  // d_mu x d_mu
  std::array<Mat, NetConfig::layers> w_upd_msg;   // d_mu x d_mu
  std::array<Mat, NetConfig::layers> t_sensor;    // d_t x 1
  std::array<Mat, NetConfig::layers> t_site;      // d_t x 1
  Mat w_q, w_k, w_v, w_out;         // d_h x d_h, head-stacked
  Mat w_h1, b_h1, w_h2, b_h2;       // MLP head

  static QNetworkParams init(const NetConfig& cfg, std::uint64_t seed);
  static QNetworkParams zeros_like(const QNetworkParams& other);

  // Visits parameters in the declared (checkpoint) order.
  void for_each(const std::function<void(const std::string&, Mat&)>& fn);
  void for_each(const std::function<void(const std::string&, const Mat&)>& fn) const;

  std::size_t parameter_count() const;
};

// Intermediate activations of one forward pass, kept for the backward pass.
struct ForwardTrace {
  Mat x;                       // node features, n x 5
  const CommGraph* graph = nullptr;
  std::array<Mat, NetConfig::layers + 1> mu;   // n x d_mu
  std::array<Mat, NetConfig::layers> h_typed;  // [mu || t], n x d_h
  std::array<Mat, NetConfig::layers> msg;      // aggregated messages
  std::array<Mat, NetConfig::layers> upd_pre;  // pre-ReLU update input
  Mat h_final;                 // n x d_h
  Mat q_proj, k_proj, v_proj;  // S x d_h, N x d_h, N x d_h (head blocks)
  std::vector<Mat> attn;       // per head, transposed (N x S); columns softmaxed
  Mat h_prime;                 // S x d_h, concatenated head outputs
  Mat fused;                   // S x d_h
  Vec pooled;                  // d_h
  Mat head_in;                 // S x (2 d_h)
  Mat head_pre;                // S x mlp_hidden, pre-ReLU
  Vec q_out;                   // S
};

// Typed message-passing encoder, Eqs. of the MPNN with per-layer type
// embeddings. Returns the final n x d_h node embeddings.
Mat encode(const NodeFeatures& features, const CommGraph& graph,
           const QNetworkParams& p, ForwardTrace* trace = nullptr);

// Multi-head attention where site embeddings query all sensor embeddings.
Mat attention_fuse(const Mat& site_emb, const Mat& sensor_emb,
                   const QNetworkParams& p, ForwardTrace* trace = nullptr);

// MLP head over [site embedding || mean-pooled site embedding].
Vec q_head(const Mat& site_emb, const QNetworkParams& p,
           ForwardTrace* trace = nullptr);

// Full forward pass: one Q value per site.
Vec q_values(const NodeFeatures& features, const CommGraph& graph,
             const QNetworkParams& p, ForwardTrace* trace = nullptr);

// Exact reverse-mode gradients for d(loss)/d(q_out) = dq. Accumulates into
// grads (callers zero it when starting a batch). Throws NumericError if a
// non-finite gradient shows up.
void backward(const ForwardTrace& trace, const Vec& dq, const QNetworkParams& p,
              QNetworkParams& grads);

// Scaled dot-product compatibility scores u_ij = q_i . k_j / sqrt(d_k) for
// one head; rows are queries.
Mat attention_scores(const Mat& q, const Mat& k);

// Batched forward/backward over B samples that share one communication
// graph (static maps during training). Node-wise work runs as single large
// GEMMs over row-stacked samples; results match the per-sample path.
struct BatchTrace {
  int batch = 0;
  const CommGraph* graph = nullptr;
  Mat x;                                        // (n*B) x 5, node-major rows
  std::array<Mat, NetConfig::layers + 1> mu;    // (n*B) x d_mu
  std::array<Mat, NetConfig::layers> h_typed;   // (n*B) x d_h
  std::array<Mat, NetConfig::layers> msg;
  std::array<Mat, NetConfig::layers> upd_pre;
  Mat h_final;                                  // node-major
  Mat hs, hn;            // sample-major site/sensor embeddings
  Mat q_proj, k_proj, v_proj;                   // (S*B|N*B) x d_h
  std::vector<Mat> attn;                        // per head, N x (S*B)
  Mat h_prime;                                  // (S*B) x d_h
  Mat fused;
  Mat pooled;                                   // B x d_h
  Mat head_in;                                  // (S*B) x 2 d_h
  Mat head_pre;
  // Scratch buffers; reused across calls so steady-state training does not
  // touch the allocator.
  Mat ws_proj_t, ws_msg_t, ws_hidden;
  Vec ws_qflat, ws_dq_flat;
  Mat ws_g_hidden, ws_gz, ws_g_fused, ws_g_hs, ws_g_hn, ws_g_hp;
  Mat ws_g_q, ws_g_k, ws_g_v, ws_g_am_t, ws_g_um_t, ws_gh, ws_g_mu;
  Mat ws_g_pre, ws_g_mu_prev, ws_g_msg_t, ws_d_src, ws_delta, ws_gh_l;
};

// Returns a B x S matrix of Q values, one row per sample.
Mat q_values_batch(const std::vector<const NodeFeatures*>& features,
                   const CommGraph& graph, const QNetworkParams& p,
                   BatchTrace* trace = nullptr);

// dq is B x S; gradients accumulate into grads. The trace doubles as a
// scratch workspace, hence non-const.
void backward_batch(BatchTrace& trace, const Mat& dq, const QNetworkParams& p,
                    QNetworkParams& grads);

struct AdamState {
  QNetworkParams m, v;
  long step = 0;

  static AdamState fresh(const QNetworkParams& params);
};

void adam_step(QNetworkParams& params, const QNetworkParams& grads,
               AdamState& state, double lr = 1e-4, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

// Compares analytic gradients against central finite differences (step 1e-4)
// on a random 3-sensor / 2-site network; returns the max relative error over
// all parameters.
double grad_check(std::uint64_t seed);

// Checkpoint: JSON header (shapes, config, step count, rng state) followed by
// little-endian 64-bit float arrays in declared parameter order.
void save_checkpoint(const std::string& path, const QNetworkParams& params,
                     long step_count, const std::string& rng_state);
struct Checkpoint {
  QNetworkParams params;
  long step_count = 0;
  std::string rng_state;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace wsn::nn
