#pragma once

#include <span>
#include <string>
#include <vector>

#include "wsn/types.hpp"

namespace wsn {

// Link-cost exponents for the energy-aware shortest-path routing. x3 weights
// the normalized initial-energy term, identically 1 here; kept for config
// compatibility.
struct RoutingExponents {
  double x1 = 1.0;
  double x2 = 50.0;
  double x3 = 50.0;
};

// Per-round forwarding tree. Sensors are 0..m-1; parent == m means the sink.
struct RoutingTree {
  std::vector<int> parent;
  std::vector<double> send_flow;  // f_i, bits/round
  std::vector<double> recv_flow;  // g_i, bits/round
  std::vector<int> hop_count;     // hops to the sink
  std::vector<double> path_cost;  // accumulated link cost to the sink

  int sink_index() const { return static_cast<int>(parent.size()); }
};

// Dimensionless link cost for sensor i sending over energy et_J_per_bit while
// holding residual fraction u_i/E_i. The fraction is clamped below at 1e-4 so
// x2 = 50 cannot overflow.
double link_cost(double et_J_per_bit, double residual_fraction,
                 const RoutingExponents& e);

// Minimum-cost-path tree from every sensor to the sink, plus per-sensor flows
// (f from own sensing plus relayed data, g received) and hop counts.
// Throws ConnectivityError naming the first sensor that cannot reach the sink.
RoutingTree build_routing_tree(std::span<const Position> sensors,
                               std::span<const double> residuals,
                               const Position& sink_pos, const EnergyParams& p,
                               const RoutingExponents& e = {});

// Energy drained from each sensor by one round of the given tree, in J.
std::vector<double> round_energy_drain(const RoutingTree& tree,
                                       std::span<const Position> sensors,
                                       const Position& sink_pos,
                                       const EnergyParams& p);

// Debug dump: parent array + flow arrays.
std::string routing_tree_to_json(const RoutingTree& tree);

}  // namespace wsn
