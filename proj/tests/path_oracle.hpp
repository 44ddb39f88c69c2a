#pragma once

// Test-only oracle: exhaustive enumeration of simple paths to the sink.
// Independent of the Dijkstra implementation it cross-checks; only usable
// for a handful of sensors.

#include <limits>
#include <span>
#include <vector>

#include "wsn/routing.hpp"
#include "wsn/types.hpp"

namespace testoracle {

struct PathSearch {
  std::span<const wsn::Position> sensors;
  std::span<const double> residuals;
  const wsn::Position* sink;
  const wsn::EnergyParams* params;
  const wsn::RoutingExponents* exps;
  std::vector<char> used;
  double best = std::numeric_limits<double>::infinity();

  double edge_cost(int from, const wsn::Position& to) const {
    const double d = wsn::distance(sensors[from], to);
    if (d > params->d_max) return std::numeric_limits<double>::infinity();
    return wsn::link_cost(wsn::transmit_cost(d, *params),
                          residuals[from] / params->e_init_J, *exps);
  }

  void dfs(int at, double cost) {
    if (cost >= best) return;
    const double direct = edge_cost(at, *sink);
    if (cost + direct < best) best = cost + direct;
    for (int next = 0; next < static_cast<int>(sensors.size()); ++next) {
      if (used[next]) continue;
      const double c = edge_cost(at, sensors[next]);
      if (!std::isfinite(c)) continue;
      used[next] = 1;
      dfs(next, cost + c);
      used[next] = 0;
    }
  }
};

// Minimum total link cost from sensor `source` to the sink over all simple
// relay paths.
inline double min_path_cost_bruteforce(std::span<const wsn::Position> sensors,
                                       std::span<const double> residuals,
                                       const wsn::Position& sink,
                                       const wsn::EnergyParams& params,
                                       const wsn::RoutingExponents& exps,
                                       int source) {
  PathSearch search{sensors, residuals, &sink, &params, &exps,
                    std::vector<char>(sensors.size(), 0)};
  search.used[source] = 1;
  search.dfs(source, 0.0);
  return search.best;
}

}  // namespace testoracle
