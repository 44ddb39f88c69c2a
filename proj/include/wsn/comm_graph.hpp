#pragma once

#include <span>
#include <utility>
#include <vector>

#include "wsn/types.hpp"

namespace wsn {

enum class NodeKind { sensor, site };

struct CommNode {
  NodeKind kind;
  Position pos;
};

// Undirected edge, u < v, weight = d_uv / d_max in (0, 1].
struct CommEdge {
  int u;
  int v;
  double weight;
};

// Communication graph over sensors (first) and sites (after), edge iff
// d <= d_max. Disconnected outputs are legal; map generation enforces
// connectivity where it matters.
struct CommGraph {
  std::vector<CommNode> nodes;
  std::vector<CommEdge> edges;
  std::vector<std::vector<std::pair<int, double>>> adj;  // (neighbor, weight)
  int sensor_count = 0;
  int site_count = 0;
};

CommGraph build_comm_graph(std::span<const Position> sensors,
                           std::span<const Position> sites,
                           const EnergyParams& p);

}  // namespace wsn
