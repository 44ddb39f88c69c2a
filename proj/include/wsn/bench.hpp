#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "wsn/baselines.hpp"
#include "wsn/env.hpp"

namespace wsn {

struct ResultRow {
  std::string method;
  int map_type = 0;
  std::uint64_t instance_seed = 0;
  int episode = 0;
  int lifetime_rounds = 0;
  double decision_time_ms = 0.0;
};

struct EvalResult {
  double mean_lifetime_rounds = 0.0;
  double mean_lifetime_seconds = 0.0;
  double mean_decision_time_ms = 0.0;
  std::vector<int> lifetimes;
  std::vector<double> per_episode_decision_ms;
};

// Greedy evaluation: n_episodes rollouts, lifetimes averaged; decision time
// is the policy call alone on a monotonic clock (environment stepping is
// excluded).
EvalResult evaluate(SinkPolicy& policy, const WsnInstance& instance,
                    int n_episodes = 20, std::uint64_t base_seed = 0,
                    const RoutingExponents& routing = {});

// Builds a fresh policy per evaluation cell. Learned methods need a
// checkpoint pattern with a {type} placeholder.
struct SuiteOptions {
  std::vector<int> map_types;
  int seeds_per_type = 10;
  std::vector<std::string> methods;  // gmre | aco | random | hgff
  int n_episodes = 20;
  std::uint64_t base_seed = 1;
  std::string checkpoint_pattern;  // e.g. "ckpt_type{type}.bin"
  bool dynamic = false;
  EnergyParams energy = {};
  AcoConfig aco = {};
  RoutingExponents routing = {};
};

struct SuiteResult {
  std::vector<ResultRow> rows;  // one per episode
  std::string results_csv;
  std::string summary_csv;  // one row per (map_type, method, seed)
};

SuiteResult run_suite(const SuiteOptions& options);
void write_suite_csvs(const SuiteResult& result, const std::string& out_dir);

std::string result_rows_to_csv(const std::vector<ResultRow>& rows);
std::vector<ResultRow> result_rows_from_csv(const std::string& csv);

// SVG of a finished trace: dashed circles for sites, dots for sensors, a
// star at the start site, numbered arrows in visit order with sojourn
// annotations (omitted when the sojourn is a single round).
std::string render_route(const EpisodeTrace& trace, const WsnInstance& instance);

std::unique_ptr<SinkPolicy> make_policy(const std::string& method,
                                        const WsnInstance& instance,
                                        std::uint64_t seed,
                                        const std::string& checkpoint_path = {},
                                        const AcoConfig& aco = {});

}  // namespace wsn
