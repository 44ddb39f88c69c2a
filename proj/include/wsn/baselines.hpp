#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "wsn/agent.hpp"
#include "wsn/env.hpp"
#include "wsn/nn.hpp"

namespace wsn {

// Common policy surface: state in, next site out.
class SinkPolicy {
 public:
  virtual ~SinkPolicy() = default;
  virtual int select_site(const Environment& env) = 0;
  virtual std::string name() const = 0;
  virtual void on_episode_start(const Environment&) {}
};

// Sends the sink to the accessible site whose in-range sensors hold the most
// residual energy; ties break to the lower index.
int gmre_select(const SimState& state, const WsnInstance& inst, double radius);

class GmrePolicy : public SinkPolicy {
 public:
  explicit GmrePolicy(double radius = -1.0) : radius_(radius) {}
  int select_site(const Environment& env) override;
  std::string name() const override { return "gmre"; }

 private:
  double radius_;  // < 0 means d_max
};

class RandomPolicy : public SinkPolicy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : rng_(seed) {}
  int select_site(const Environment& env) override;
  std::string name() const override { return "random"; }

 private:
  std::mt19937_64 rng_;
};

struct AcoConfig {
  int ants = 10;
  double q0 = 0.95;           // exploitation probability
  double rho = 0.5;           // pheromone reinforcement rate
  double beta = 0.1;          // heuristic weight (exponent)
  double hop_weight = 10.0;   // weight of the average-hop term
  int horizon = 10;           // rounds planned per decision
  int iterations = 30;        // colony iterations per decision

  void validate() const {
    if (q0 < 0.0 || q0 > 1.0) throw ConfigError("aco: q0 outside [0,1]");
    if (rho <= 0.0 || rho > 1.0) throw ConfigError("aco: rho outside (0,1]");
    if (ants < 1 || horizon < 1 || iterations < 1) {
      throw ConfigError("aco: ants, horizon, iterations must be >= 1");
    }
  }
};

// Receding-horizon ant colony search: ants build site sequences guided by
// pheromone and a heuristic mixing average hops, nearby residual energy, and
// step distance; sequences are scored by rollout on a cloned environment.
class AcoPolicy : public SinkPolicy {
 public:
  AcoPolicy(const AcoConfig& cfg, std::uint64_t seed);
  int select_site(const Environment& env) override;
  std::string name() const override { return "aco"; }
  void on_episode_start(const Environment& env) override;

  // Heuristic desirability of moving to each accessible site.
  std::vector<double> heuristic(const Environment& env, int from_site) const;
  double pheromone(int from, int to) const;

 private:
  std::vector<double> static_heuristic(const Environment& env) const;
  static double max_site_distance(const WsnInstance& inst);
  double score_sequence(const Environment& env, const std::vector<int>& seq) const;

  AcoConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<std::vector<double>> tau_;
  double best_score_ = 0.0;
};

// Greedy policy over a trained (or fresh) Q-network.
class QNetPolicy : public SinkPolicy {
 public:
  explicit QNetPolicy(nn::QNetworkParams params, std::string label = "hgff")
      : params_(std::move(params)), label_(std::move(label)) {}
  int select_site(const Environment& env) override;
  std::string name() const override { return label_; }
  const nn::QNetworkParams& params() const { return params_; }

 private:
  nn::QNetworkParams params_;
  std::string label_;
};

struct OracleResult {
  int lifetime = 0;
  std::vector<int> sequence;  // sites of the best rollout, length <= horizon
};

// Exhaustive search over all site sequences up to the horizon. Refuses
// instances with |accessible sites|^horizon > 1e6.
OracleResult oracle_search(const WsnInstance& inst, int horizon,
                           std::uint64_t episode_seed = 0,
                           const RoutingExponents& routing = {});

// Full-episode rollout of a policy; returns the lifetime.
int rollout(Environment& env, SinkPolicy& policy, std::uint64_t episode_seed);

}  // namespace wsn
