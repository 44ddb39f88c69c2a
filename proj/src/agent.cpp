#include "wsn/agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace wsn {

StateSnapshot snapshot_of(const SimState& state) {
  return {state.sensor_positions, state.residuals, state.last_drain,
          state.sink_site, state.round};
}

std::size_t ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return items_.size() - 1;
  }
  const std::size_t slot = head_;
  items_[slot] = std::move(t);
  head_ = (head_ + 1) % capacity_;
  return slot;
}

std::vector<std::size_t> ReplayBuffer::sample_slots(std::size_t k,
                                                    std::mt19937_64& rng) const {
  k = std::min(k, items_.size());
  std::vector<std::size_t> out;
  out.reserve(k);
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  while (out.size() < k) {
    const std::size_t slot = pick(rng);
    if (std::find(out.begin(), out.end(), slot) == out.end()) out.push_back(slot);
  }
  return out;
}

double epsilon_for_episode(const TrainConfig& cfg, long episode) {
  return std::max(cfg.epsilon_fin,
                  cfg.epsilon_init - cfg.epsilon_decay * static_cast<double>(episode));
}

int greedy_action(const nn::Vec& q_values, const std::vector<bool>& mask) {
  int best = -1;
  double best_q = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < q_values.size(); ++a) {
    if (!mask[a]) continue;
    if (q_values[a] > best_q) {
      best_q = q_values[a];
      best = a;
    }
  }
  if (best < 0) throw ConfigError("greedy_action: all sites masked");
  return best;
}

int select_action(const nn::Vec& q_values, const std::vector<bool>& mask,
                  double epsilon, std::mt19937_64& rng) {
  std::vector<int> accessible;
  for (int a = 0; a < static_cast<int>(mask.size()); ++a) {
    if (mask[a]) accessible.push_back(a);
  }
  if (accessible.empty()) throw ConfigError("select_action: all sites masked");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  if (u01(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> pick(0, accessible.size() - 1);
    return accessible[pick(rng)];
  }
  return greedy_action(q_values, mask);
}

nn::Vec compute_targets(const std::vector<const Transition*>& batch,
                        const QFunction& online, const QFunction& target,
                        const std::vector<bool>& mask, double gamma) {
  nn::Vec y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition& t = *batch[i];
    if (t.done) {
      y[i] = t.reward;
      continue;
    }
    const int a_star = greedy_action(online(t.s2), mask);
    y[i] = t.reward + gamma * target(t.s2)[a_star];
  }
  return y;
}

DoubleDqnTrainer::DoubleDqnTrainer(const WsnInstance& instance,
                                   const TrainConfig& cfg,
                                   const nn::NetConfig& net_cfg,
                                   std::uint64_t seed,
                                   const RoutingExponents& routing)
    : instance_(instance),
      cfg_(cfg),
      routing_(routing),
      mask_(instance.site_accessible.begin(), instance.site_accessible.end()),
      buffer_(cfg.replay_capacity),
      online_(nn::QNetworkParams::init(net_cfg, seed)),
      target_(online_),
      adam_(nn::AdamState::fresh(online_)),
      rng_(seed ^ 0x9e3779b97f4a7c15ULL) {}

const CommGraph& DoubleDqnTrainer::graph_of(const StateSnapshot& snap) const {
  if (!instance_.dynamic) {
    if (!static_graph_) {
      static_graph_ = build_comm_graph(instance_.sensors_init, instance_.sites,
                                       instance_.energy);
    }
    return *static_graph_;
  }
  scratch_graph_ =
      build_comm_graph(snap.positions, instance_.sites, instance_.energy);
  return *scratch_graph_;
}

NodeFeatures DoubleDqnTrainer::features_of(const StateSnapshot& snap) const {
  return make_node_features(instance_, snap.positions, snap.residuals,
                            snap.drains);
}

nn::Vec DoubleDqnTrainer::online_q(const StateSnapshot& snap) const {
  return nn::q_values(features_of(snap), graph_of(snap), online_);
}

nn::Vec DoubleDqnTrainer::target_q(const StateSnapshot& snap) const {
  return nn::q_values(features_of(snap), graph_of(snap), target_);
}

void DoubleDqnTrainer::sync_target() {
  target_ = online_;
  target_epoch_ += 1;
}

const nn::Vec& DoubleDqnTrainer::cached_target_q(std::size_t slot) {
  if (cache_epoch_.size() != buffer_.capacity()) {
    cache_epoch_.assign(buffer_.capacity(), -1);
    target_q_cache_.assign(buffer_.capacity(), {});
  }
  if (cache_epoch_[slot] != target_epoch_) {
    target_q_cache_[slot] = target_q(buffer_.at_slot(slot).s2);
    cache_epoch_[slot] = target_epoch_;
  }
  return target_q_cache_[slot];
}

std::optional<double> DoubleDqnTrainer::train_step() {
  if (buffer_.size() < static_cast<std::size_t>(cfg_.batch_size)) {
    return std::nullopt;
  }
  const std::vector<std::size_t> slots =
      buffer_.sample_slots(static_cast<std::size_t>(cfg_.batch_size), rng_);
  return instance_.dynamic ? train_step_per_sample(slots)
                           : train_step_batched(slots);
}

// Dynamic maps: every snapshot has its own graph, so samples run one by one.
double DoubleDqnTrainer::train_step_per_sample(
    const std::vector<std::size_t>& slots) {
  // Double DQN targets, mirroring compute_targets but with the frozen
  // target net's Q vectors cached per slot.
  nn::Vec y(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const Transition& t = buffer_.at_slot(slots[i]);
    if (t.done) {
      y[i] = t.reward;
    } else {
      const int a_star = greedy_action(online_q(t.s2), mask_);
      y[i] = t.reward + cfg_.discount * cached_target_q(slots[i])[a_star];
    }
  }

  nn::QNetworkParams grads = nn::QNetworkParams::zeros_like(online_);
  double loss = 0.0;
  const double inv_b = 1.0 / static_cast<double>(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const Transition& t = buffer_.at_slot(slots[i]);
    nn::ForwardTrace trace;
    const nn::Vec q =
        nn::q_values(features_of(t.s), graph_of(t.s), online_, &trace);
    const double err = q[t.action] - y[i];
    loss += err * err * inv_b;
    nn::Vec dq = nn::Vec::Zero(q.size());
    dq[t.action] = 2.0 * err * inv_b;
    nn::backward(trace, dq, online_, grads);
  }
  nn::adam_step(online_, grads, adam_, cfg_.learning_rate, cfg_.adam_beta1,
                cfg_.adam_beta2, cfg_.adam_eps);
  return loss;
}

// Static maps share one graph, so the whole batch runs as stacked GEMMs.
double DoubleDqnTrainer::train_step_batched(
    const std::vector<std::size_t>& slots) {
  const CommGraph& graph = graph_of(buffer_.at_slot(slots[0]).s);
  const std::size_t b_count = slots.size();

  // Targets. Online argmax over s2 for all non-terminal samples at once;
  // the frozen target net hits its per-slot cache where possible.
  std::vector<NodeFeatures> s2_feats;
  std::vector<std::size_t> boot_index;
  s2_feats.reserve(b_count);
  for (std::size_t i = 0; i < b_count; ++i) {
    const Transition& t = buffer_.at_slot(slots[i]);
    if (!t.done) {
      s2_feats.push_back(features_of(t.s2));
      boot_index.push_back(i);
    }
  }
  nn::Vec y(b_count);
  if (!boot_index.empty()) {
    std::vector<const NodeFeatures*> ptrs;
    ptrs.reserve(s2_feats.size());
    for (const auto& f : s2_feats) ptrs.push_back(&f);
    const nn::Mat q2 = nn::q_values_batch(ptrs, graph, online_, &s2_trace_);
    // target-net values, batching the cache misses
    std::vector<std::size_t> miss_pos;
    std::vector<const NodeFeatures*> miss_ptrs;
    if (cache_epoch_.size() != buffer_.capacity()) {
      cache_epoch_.assign(buffer_.capacity(), -1);
      target_q_cache_.assign(buffer_.capacity(), {});
    }
    for (std::size_t k = 0; k < boot_index.size(); ++k) {
      const std::size_t slot = slots[boot_index[k]];
      if (cache_epoch_[slot] != target_epoch_) {
        miss_pos.push_back(k);
        miss_ptrs.push_back(&s2_feats[k]);
      }
    }
    if (!miss_ptrs.empty()) {
      const nn::Mat qt = nn::q_values_batch(miss_ptrs, graph, target_, &miss_trace_);
      for (std::size_t j = 0; j < miss_pos.size(); ++j) {
        const std::size_t slot = slots[boot_index[miss_pos[j]]];
        target_q_cache_[slot] = qt.row(j).transpose();
        cache_epoch_[slot] = target_epoch_;
      }
    }
    for (std::size_t k = 0; k < boot_index.size(); ++k) {
      const std::size_t i = boot_index[k];
      const Transition& t = buffer_.at_slot(slots[i]);
      int a_star = 0;
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < q2.cols(); ++a) {
        if (mask_[a] && q2(k, a) > best) {
          best = q2(k, a);
          a_star = a;
        }
      }
      y[i] = t.reward + cfg_.discount * target_q_cache_[slots[i]][a_star];
    }
  }
  for (std::size_t i = 0; i < b_count; ++i) {
    const Transition& t = buffer_.at_slot(slots[i]);
    if (t.done) y[i] = t.reward;
  }

  // One batched forward/backward over the sampled states.
  std::vector<NodeFeatures> s_feats;
  s_feats.reserve(b_count);
  std::vector<const NodeFeatures*> s_ptrs;
  for (std::size_t i = 0; i < b_count; ++i) {
    s_feats.push_back(features_of(buffer_.at_slot(slots[i]).s));
  }
  for (const auto& f : s_feats) s_ptrs.push_back(&f);
  const nn::Mat q = nn::q_values_batch(s_ptrs, graph, online_, &train_trace_);
  nn::Mat dq = nn::Mat::Zero(q.rows(), q.cols());
  double loss = 0.0;
  const double inv_b = 1.0 / static_cast<double>(b_count);
  for (std::size_t i = 0; i < b_count; ++i) {
    const Transition& t = buffer_.at_slot(slots[i]);
    const double err = q(i, t.action) - y[i];
    loss += err * err * inv_b;
    dq(i, t.action) = 2.0 * err * inv_b;
  }
  nn::QNetworkParams grads = nn::QNetworkParams::zeros_like(online_);
  nn::backward_batch(train_trace_, dq, online_, grads);
  nn::adam_step(online_, grads, adam_, cfg_.learning_rate, cfg_.adam_beta1,
                cfg_.adam_beta2, cfg_.adam_eps);
  return loss;
}

std::string DoubleDqnTrainer::rng_state() const {
  std::ostringstream ss;
  ss << rng_;
  return ss.str();
}

TrainResult DoubleDqnTrainer::train_loop(const std::string& log_path) {
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) throw ConfigError("cannot write training log " + log_path);
    log << "episode,lifetime_rounds,epsilon,mean_loss\n";
  }

  Environment env(instance_, routing_);
  TrainResult result{online_, {}, 0};
  for (long ep = 0; ep < cfg_.episodes; ++ep) {
    const double eps = epsilon_for_episode(cfg_, ep);
    env.reset(instance_.seed ^ (0x51d7348bULL + static_cast<std::uint64_t>(ep) * 0x2545F4914F6CDD1DULL));
    double loss_sum = 0.0;
    long loss_count = 0;
    double discounted_return = 0.0;
    double gamma_pow = 1.0;
    while (!env.done()) {
      const StateSnapshot s = snapshot_of(env.state());
      const nn::Vec q = online_q(s);
      const int action = select_action(q, mask_, eps, rng_);
      const StepResult r = env.step(action);
      const std::size_t slot =
          buffer_.push({s, action, r.reward, snapshot_of(env.state()), r.done});
      if (slot < cache_epoch_.size()) cache_epoch_[slot] = -1;
      discounted_return += gamma_pow * r.reward;
      gamma_pow *= cfg_.discount;
      total_steps_ += 1;
      if (const auto loss = train_step()) {
        loss_sum += *loss;
        loss_count += 1;
      }
      if (total_steps_ % cfg_.target_sync_period == 0) sync_target();
    }
    // Constant unit rewards make the discounted return a pure function of
    // the episode length; a drift here means the accounting broke.
    const int t_len = env.trace().lifetime;
    const double expected =
        (1.0 - std::pow(cfg_.discount, t_len)) / (1.0 - cfg_.discount);
    if (std::abs(discounted_return - expected) > 1e-9) {
      throw StateError("train_loop: discounted-return accounting mismatch");
    }
    EpisodeLog row{ep, t_len, eps, loss_count > 0 ? loss_sum / loss_count : 0.0};
    result.log.push_back(row);
    if (log) {
      log << row.episode << "," << row.lifetime_rounds << "," << row.epsilon
          << "," << row.mean_loss << "\n";
    }
  }
  result.params = online_;
  result.total_steps = total_steps_;
  return result;
}

int greedy_rollout(Environment& env, const nn::QNetworkParams& params,
                   std::uint64_t episode_seed) {
  env.reset(episode_seed);
  const std::vector<bool> mask = env.action_mask();
  while (!env.done()) {
    const nn::Vec q = nn::q_values(env.node_features(), env.comm_graph(), params);
    env.step(greedy_action(q, mask));
  }
  return env.trace().lifetime;
}

}  // namespace wsn
