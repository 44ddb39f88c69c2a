#include "wsn/comm_graph.hpp"

namespace wsn {

CommGraph build_comm_graph(std::span<const Position> sensors,
                           std::span<const Position> sites,
                           const EnergyParams& p) {
  CommGraph g;
  g.sensor_count = static_cast<int>(sensors.size());
  g.site_count = static_cast<int>(sites.size());
  g.nodes.reserve(sensors.size() + sites.size());
  for (const auto& s : sensors) g.nodes.push_back({NodeKind::sensor, s});
  for (const auto& s : sites) g.nodes.push_back({NodeKind::site, s});

  const int n = static_cast<int>(g.nodes.size());
  g.adj.assign(n, {});
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double d = distance(g.nodes[i].pos, g.nodes[j].pos);
      if (d <= p.d_max) {
        const double w = d / p.d_max;
        g.edges.push_back({i, j, w});
        g.adj[i].emplace_back(j, w);
        g.adj[j].emplace_back(i, w);
      }
    }
  }
  return g;
}

}  // namespace wsn
