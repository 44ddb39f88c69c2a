#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "wsn/env.hpp"
#include "wsn/nn.hpp"

namespace wsn {

// Raw state snapshot stored in the replay buffer; features and graphs are
// rebuilt from it at training time. Drains ride along because the drain
// feature cannot be reconstructed from positions and residuals alone.
struct StateSnapshot {
  std::vector<Position> positions;
  std::vector<double> residuals;
  std::vector<double> drains;
  int sink_site = -1;
  int round = 0;
};

StateSnapshot snapshot_of(const SimState& state);

struct Transition {
  StateSnapshot s;
  int action = -1;
  double reward = 0.0;
  StateSnapshot s2;
  bool done = false;
};

// FIFO ring buffer with stable storage slots (an evicted transition's slot
// is reused by the newcomer), so per-transition caches can key off the slot.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 50000) : capacity_(capacity) {}

  // Returns the storage slot the transition landed in.
  std::size_t push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }

  // Indexed oldest first.
  const Transition& operator[](std::size_t i) const {
    return items_[(head_ + i) % capacity_];
  }
  const Transition& at_slot(std::size_t slot) const { return items_[slot]; }

  // k distinct storage slots, uniform without replacement.
  std::vector<std::size_t> sample_slots(std::size_t k, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // slot of the oldest item once full
  std::vector<Transition> items_;
};

struct TrainConfig {
  int batch_size = 64;
  int episodes = 3000;
  double learning_rate = 1e-4;
  double discount = 0.98;
  double epsilon_init = 0.99;
  double epsilon_fin = 0.01;
  double epsilon_decay = 5e-5;  // per episode
  int target_sync_period = 1000;  // environment steps
  std::size_t replay_capacity = 50000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

double epsilon_for_episode(const TrainConfig& cfg, long episode);

// Epsilon-greedy over masked Q values; greedy ties break to the lowest index.
int select_action(const nn::Vec& q_values, const std::vector<bool>& mask,
                  double epsilon, std::mt19937_64& rng);
int greedy_action(const nn::Vec& q_values, const std::vector<bool>& mask);

// Double-DQN learning targets: Y = r + gamma * Q_target(s', argmax_a
// Q_online(s', a)) for non-terminal transitions, Y = r at terminals. The
// callables map a snapshot to per-site Q values (masked argmax inside).
using QFunction = std::function<nn::Vec(const StateSnapshot&)>;
nn::Vec compute_targets(const std::vector<const Transition*>& batch,
                        const QFunction& online, const QFunction& target,
                        const std::vector<bool>& mask, double gamma);

struct EpisodeLog {
  long episode = 0;
  int lifetime_rounds = 0;
  double epsilon = 0.0;
  double mean_loss = 0.0;
};

struct TrainResult {
  nn::QNetworkParams params;
  std::vector<EpisodeLog> log;
  long total_steps = 0;
};

// Owns nets, buffer, and optimizer state for one training run.
class DoubleDqnTrainer {
 public:
  DoubleDqnTrainer(const WsnInstance& instance, const TrainConfig& cfg,
                   const nn::NetConfig& net_cfg, std::uint64_t seed,
                   const RoutingExponents& routing = {});

  // One optimizer step over a sampled batch. Returns the batch loss, or
  // nullopt when the buffer has fewer than batch_size transitions (skip).
  std::optional<double> train_step();

  // Runs cfg.episodes episodes; optionally writes the per-episode CSV log
  // (episode,lifetime_rounds,epsilon,mean_loss) while training.
  TrainResult train_loop(const std::string& log_path = {});

  nn::Vec online_q(const StateSnapshot& snap) const;
  nn::Vec target_q(const StateSnapshot& snap) const;

  const nn::QNetworkParams& online_params() const { return online_; }
  const nn::QNetworkParams& target_params() const { return target_; }
  ReplayBuffer& buffer() { return buffer_; }
  long total_steps() const { return total_steps_; }
  std::string rng_state() const;
  void sync_target();

 private:
  NodeFeatures features_of(const StateSnapshot& snap) const;
  const CommGraph& graph_of(const StateSnapshot& snap) const;
  // Q_target(s2) for a buffered transition; the target net is frozen between
  // syncs, so values are cached per slot until the next sync or overwrite.
  const nn::Vec& cached_target_q(std::size_t slot);
  double train_step_per_sample(const std::vector<std::size_t>& slots);
  double train_step_batched(const std::vector<std::size_t>& slots);

  WsnInstance instance_;
  TrainConfig cfg_;
  RoutingExponents routing_;
  std::vector<bool> mask_;
  ReplayBuffer buffer_;
  nn::QNetworkParams online_;
  nn::QNetworkParams target_;
  nn::AdamState adam_;
  std::mt19937_64 rng_;
  long total_steps_ = 0;
  long target_epoch_ = 0;
  std::vector<long> cache_epoch_;
  std::vector<nn::Vec> target_q_cache_;
  nn::BatchTrace train_trace_, s2_trace_, miss_trace_;  // reused workspaces
  mutable std::optional<CommGraph> static_graph_;  // static maps never move
  mutable std::optional<CommGraph> scratch_graph_;
};

// Greedy rollout of a checkpoint on one episode; returns the lifetime.
int greedy_rollout(Environment& env, const nn::QNetworkParams& params,
                   std::uint64_t episode_seed);

}  // namespace wsn
