#include "wsn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wsn {

int gmre_select(const SimState& state, const WsnInstance& inst, double radius) {
  int best = -1;
  double best_sum = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < inst.site_count(); ++j) {
    if (!inst.site_accessible[j]) continue;
    double sum = 0.0;
    for (int i = 0; i < inst.sensor_count(); ++i) {
      if (distance(state.sensor_positions[i], inst.sites[j]) <= radius) {
        sum += state.residuals[i];
      }
    }
    if (sum > best_sum) {
      best_sum = sum;
      best = j;
    }
  }
  if (best < 0) throw ConfigError("gmre_select: no accessible site");
  return best;
}

int GmrePolicy::select_site(const Environment& env) {
  const double r = radius_ > 0.0 ? radius_ : env.instance().energy.d_max;
  return gmre_select(env.state(), env.instance(), r);
}

int RandomPolicy::select_site(const Environment& env) {
  std::vector<int> accessible;
  for (int j = 0; j < env.instance().site_count(); ++j) {
    if (env.instance().site_accessible[j]) accessible.push_back(j);
  }
  std::uniform_int_distribution<std::size_t> pick(0, accessible.size() - 1);
  return accessible[pick(rng_)];
}

AcoPolicy::AcoPolicy(const AcoConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), rng_(seed) {
  cfg_.validate();
}

void AcoPolicy::on_episode_start(const Environment& env) {
  const std::size_t n = env.instance().site_count();
  tau_.assign(n, std::vector<double>(n, 1.0));
  best_score_ = 0.0;
}

double AcoPolicy::pheromone(int from, int to) const { return tau_[from][to]; }

// Site desirability without the step-distance term: average-hop inverse plus
// normalized nearby residual energy. Computed once per decision, as the
// heuristic information is fixed before the colony search starts.
std::vector<double> AcoPolicy::static_heuristic(const Environment& env) const {
  const WsnInstance& inst = env.instance();
  const SimState& state = env.state();
  const double d_max = inst.energy.d_max;
  const int m = inst.sensor_count();
  const int n = inst.site_count();

  std::vector<std::vector<int>> sensor_nbrs(m);
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      if (distance(state.sensor_positions[i], state.sensor_positions[j]) <= d_max) {
        sensor_nbrs[i].push_back(j);
        sensor_nbrs[j].push_back(i);
      }
    }
  }

  std::vector<double> eta(n, 0.0);
  std::vector<int> hops(m);
  std::vector<int> frontier;
  for (int j = 0; j < n; ++j) {
    if (!inst.site_accessible[j]) continue;
    // Min-hop BFS from site j over sensor relays.
    std::fill(hops.begin(), hops.end(), -1);
    frontier.clear();
    for (int i = 0; i < m; ++i) {
      if (distance(state.sensor_positions[i], inst.sites[j]) <= d_max) {
        hops[i] = 1;
        frontier.push_back(i);
      }
    }
    for (std::size_t k = 0; k < frontier.size(); ++k) {
      const int u = frontier[k];
      for (int v : sensor_nbrs[u]) {
        if (hops[v] < 0) {
          hops[v] = hops[u] + 1;
          frontier.push_back(v);
        }
      }
    }
    double hop_sum = 0.0;
    double resid_sum = 0.0;
    int resid_count = 0;
    for (int i = 0; i < m; ++i) {
      hop_sum += hops[i] > 0 ? hops[i] : m;  // unreachable counts as worst case
      if (hops[i] == 1) {
        resid_sum += std::max(state.residuals[i], 0.0) / inst.energy.e_init_J;
        resid_count += 1;
      }
    }
    eta[j] = cfg_.hop_weight * m / hop_sum +
             (resid_count > 0 ? resid_sum / resid_count : 0.0);
  }
  return eta;
}

double AcoPolicy::max_site_distance(const WsnInstance& inst) {
  double out = 0.0;
  for (int a = 0; a < inst.site_count(); ++a) {
    for (int b = a + 1; b < inst.site_count(); ++b) {
      out = std::max(out, distance(inst.sites[a], inst.sites[b]));
    }
  }
  return out;
}

std::vector<double> AcoPolicy::heuristic(const Environment& env,
                                         int from_site) const {
  const WsnInstance& inst = env.instance();
  const double max_d = max_site_distance(inst);
  std::vector<double> eta = static_heuristic(env);
  for (int j = 0; j < inst.site_count(); ++j) {
    if (!inst.site_accessible[j]) continue;
    const double step_d = distance(inst.sites[from_site], inst.sites[j]);
    eta[j] += max_d > 0.0 ? 1.0 - step_d / max_d : 1.0;
  }
  return eta;
}

double AcoPolicy::score_sequence(const Environment& env,
                                 const std::vector<int>& seq) const {
  Environment sim = env;  // cloned rollout, shared rng state is copied too
  double score = 0.0;
  for (int site : seq) {
    if (sim.done()) break;
    sim.step(site);
    score += 1.0;
  }
  if (!sim.done()) {
    // Survived the whole horizon: refine by how much headroom is left.
    double min_frac = 1.0;
    for (double u : sim.state().residuals) {
      min_frac = std::min(min_frac, u / sim.instance().energy.e_init_J);
    }
    score += std::max(min_frac, 0.0);
  }
  return score;
}

int AcoPolicy::select_site(const Environment& env) {
  const WsnInstance& inst = env.instance();
  if (tau_.size() != static_cast<std::size_t>(inst.site_count())) {
    on_episode_start(env);
  }
  std::vector<int> accessible;
  for (int j = 0; j < inst.site_count(); ++j) {
    if (inst.site_accessible[j]) accessible.push_back(j);
  }
  if (accessible.size() == 1) return accessible[0];

  const int current = env.state().sink_site;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<int> best_seq;
  double best = -1.0;

  const std::vector<double> base_eta = static_heuristic(env);
  const double max_d = max_site_distance(inst);
  auto eta_from = [&](int at, int to) {
    const double step_d = distance(inst.sites[at], inst.sites[to]);
    const double inv_step = max_d > 0.0 ? 1.0 - step_d / max_d : 1.0;
    return base_eta[to] + inv_step;
  };

  for (int iter = 0; iter < cfg_.iterations; ++iter) {
    std::vector<int> iter_best_seq;
    double iter_best = -1.0;
    for (int ant = 0; ant < cfg_.ants; ++ant) {
      std::vector<int> seq;
      seq.reserve(cfg_.horizon);
      int at = current;
      for (int t = 0; t < cfg_.horizon; ++t) {
        std::vector<double> weight(accessible.size());
        for (std::size_t k = 0; k < accessible.size(); ++k) {
          weight[k] =
              tau_[at][accessible[k]] *
              std::pow(std::max(eta_from(at, accessible[k]), 1e-12), cfg_.beta);
        }
        int next;
        if (u01(rng_) < cfg_.q0) {
          next = accessible[std::max_element(weight.begin(), weight.end()) -
                            weight.begin()];
        } else {
          std::discrete_distribution<std::size_t> pick(weight.begin(), weight.end());
          next = accessible[pick(rng_)];
        }
        seq.push_back(next);
        at = next;
      }
      const double s = score_sequence(env, seq);
      if (s > iter_best) {
        iter_best = s;
        iter_best_seq = seq;
      }
    }
    if (iter_best > best) {
      best = iter_best;
      best_seq = iter_best_seq;
    }
    best_score_ = std::max(best_score_, iter_best);
    // Reinforce the iteration-best sequence: tau <- (1-rho) tau + rho dtau.
    const double dtau = best_score_ > 0.0 ? iter_best / best_score_ : 0.0;
    int from = current;
    for (int site : iter_best_seq) {
      double& t = tau_[from][site];
      t = std::clamp((1.0 - cfg_.rho) * t + cfg_.rho * dtau, 0.01, 10.0);
      from = site;
    }
  }
  return best_seq.empty() ? accessible[0] : best_seq[0];
}

int QNetPolicy::select_site(const Environment& env) {
  const nn::Vec q = nn::q_values(env.node_features(), env.comm_graph(), params_);
  return greedy_action(q, env.action_mask());
}

namespace {

void oracle_dfs(Environment& env, int depth, int horizon,
                const std::vector<int>& accessible, std::vector<int>& seq,
                OracleResult& best) {
  if (env.done() || depth == horizon) {
    const int lifetime = env.trace().lifetime;
    if (lifetime > best.lifetime) {
      best.lifetime = lifetime;
      best.sequence = seq;
    }
    return;
  }
  for (int site : accessible) {
    Environment next = env;
    next.step(site);
    seq.push_back(site);
    oracle_dfs(next, depth + 1, horizon, accessible, seq, best);
    seq.pop_back();
  }
}

}  // namespace

OracleResult oracle_search(const WsnInstance& inst, int horizon,
                           std::uint64_t episode_seed,
                           const RoutingExponents& routing) {
  std::vector<int> accessible;
  for (int j = 0; j < inst.site_count(); ++j) {
    if (inst.site_accessible[j]) accessible.push_back(j);
  }
  const double combos =
      std::pow(static_cast<double>(accessible.size()), horizon);
  if (combos > 1e6) {
    throw SizeError("oracle_search: " + std::to_string(accessible.size()) +
                    " sites^" + std::to_string(horizon) + " exceeds 1e6");
  }
  Environment env(inst, routing);
  env.reset(episode_seed);
  OracleResult best;
  best.lifetime = -1;
  std::vector<int> seq;
  oracle_dfs(env, 0, horizon, accessible, seq, best);
  if (best.lifetime < 0) best.lifetime = 0;
  return best;
}

int rollout(Environment& env, SinkPolicy& policy, std::uint64_t episode_seed) {
  env.reset(episode_seed);
  policy.on_episode_start(env);
  while (!env.done()) {
    env.step(policy.select_site(env));
  }
  return env.trace().lifetime;
}

}  // namespace wsn
