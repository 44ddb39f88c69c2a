#include <random>

#include "path_oracle.hpp"
#include "test_util.hpp"
#include "wsn/routing.hpp"

using namespace wsn;

namespace {

// Random connected layout of m sensors around a sink at the center.
std::vector<Position> random_connected(int m, double extent, std::mt19937_64& rng,
                                       const Position& sink) {
  std::uniform_real_distribution<double> u(0.0, extent);
  for (;;) {
    std::vector<Position> sensors(m);
    for (auto& s : sensors) s = {u(rng), u(rng)};
    // every sensor must reach the sink through relays
    try {
      std::vector<double> res(m, 1.0);
      build_routing_tree(sensors, res, sink, {});
      return sensors;
    } catch (const ConnectivityError&) {
    }
  }
}

}  // namespace

int main() {
  EnergyParams p;
  RoutingExponents exps;

  section("link_cost");
  {
    const double et = transmit_cost(10.0, p);
    REQUIRE_NEAR(link_cost(et, 1.0, exps), std::pow(et, exps.x1), 1e-20);
    RoutingExponents unit{1.0, 1.0, 1.0};
    REQUIRE_NEAR(link_cost(et, 0.5, unit), 2.0 * et, 1e-20);
    // residual fraction clamps at 1e-4 before exponentiation
    REQUIRE_NEAR(link_cost(et, 1e-9, unit), et / 1e-4, 1e-12);
    REQUIRE(link_cost(et, 1e-9, exps) == link_cost(et, 1e-4, exps));
  }

  section("one-hop tree");
  {
    const std::vector<Position> sensors = {{10, 0}};
    const std::vector<double> res = {1.0};
    const RoutingTree t = build_routing_tree(sensors, res, {0, 0}, p);
    REQUIRE(t.parent[0] == t.sink_index());
    REQUIRE(t.send_flow[0] == 3600.0);
    REQUIRE(t.recv_flow[0] == 0.0);
    REQUIRE(t.hop_count[0] == 1);
  }

  section("two-hop chain flows");
  {
    // A at (50,0) cannot reach the sink at (0,0); B at (25,0) relays.
    const std::vector<Position> sensors = {{50, 0}, {25, 0}};
    const std::vector<double> res = {1.0, 1.0};
    const RoutingTree t = build_routing_tree(sensors, res, {0, 0}, p);
    REQUIRE(t.parent[0] == 1);
    REQUIRE(t.parent[1] == t.sink_index());
    REQUIRE(t.send_flow[0] == 3600.0);
    REQUIRE(t.recv_flow[1] == 3600.0);
    REQUIRE(t.send_flow[1] == 7200.0);
    REQUIRE(t.hop_count[0] == 2);
  }

  section("equal-cost parents break to the lower index");
  {
    // Symmetric diamond: both relays give identical path cost.
    const std::vector<Position> sensors = {{20, 10}, {20, -10}, {40, 0}};
    const std::vector<double> res = {1.0, 1.0, 1.0};
    const RoutingTree t = build_routing_tree(sensors, res, {0, 0}, p);
    REQUIRE(t.parent[2] == 0);
  }

  section("depleted sender relays through a fresh neighbor");
  {
    // Sender S within direct range of the sink, but its huge residual factor
    // multiplies the whole first hop; routing through the nearby fresh relay
    // is cheaper.
    const std::vector<Position> sensors = {{29, 0}, {15, 0}};
    std::vector<double> res = {0.05, 1.0};
    RoutingTree t = build_routing_tree(sensors, res, {0, 0}, p);
    REQUIRE(t.parent[0] == 1);
    // At full energy, the direct link wins (a d^2/2 < b inside d_max).
    res = {1.0, 1.0};
    t = build_routing_tree(sensors, res, {0, 0}, p);
    REQUIRE(t.parent[0] == t.sink_index());
  }

  section("unreachable sensor raises ConnectivityError with its index");
  {
    const std::vector<Position> sensors = {{10, 0}, {200, 200}};
    const std::vector<double> res = {1.0, 1.0};
    try {
      build_routing_tree(sensors, res, {0, 0}, p);
      REQUIRE(false);
    } catch (const ConnectivityError& e) {
      REQUIRE(e.sensor_index == 1);
    }
  }

  section("round_energy_drain");
  {
    // leaf sending 3600 bits over d = 10
    const std::vector<Position> sensors = {{10, 0}};
    const std::vector<double> res = {1.0};
    const RoutingTree t = build_routing_tree(sensors, res, {0, 0}, p);
    const auto drain = round_energy_drain(t, sensors, {0, 0}, p);
    REQUIRE_NEAR(drain[0], 2.16e-4, 1e-18);
  }
  {
    // relay receives 3600 bits: receive share is er * g = 1.8e-4 J
    const std::vector<Position> sensors = {{50, 0}, {25, 0}};
    const std::vector<double> res = {1.0, 1.0};
    const RoutingTree t = build_routing_tree(sensors, res, {0, 0}, p);
    const auto drain = round_energy_drain(t, sensors, {0, 0}, p);
    const double receive_share = p.receive_cost_J_per_bit() * t.recv_flow[1];
    REQUIRE_NEAR(receive_share, 1.8e-4, 1e-18);
    REQUIRE_NEAR(drain[1],
                 transmit_cost(25.0, p) * 7200.0 + 1.8e-4, 1e-18);
    // sensor with g = 0 has no receive term
    REQUIRE_NEAR(drain[0], transmit_cost(25.0, p) * 3600.0, 1e-18);
  }

  section("flow conservation and sink inflow on random instances");
  {
    std::mt19937_64 rng(23);
    const Position sink{50, 50};
    for (int trial = 0; trial < 30; ++trial) {
      const int m = 12 + static_cast<int>(rng() % 10);
      const auto sensors = random_connected(m, 100.0, rng, sink);
      std::vector<double> res(m);
      std::uniform_real_distribution<double> ur(0.05, 1.0);
      for (auto& r : res) r = ur(rng);
      const RoutingTree t = build_routing_tree(sensors, res, sink, p);
      const double bits = p.bits_per_round();
      double inflow = 0.0;
      for (int i = 0; i < m; ++i) {
        REQUIRE(t.recv_flow[i] + bits == t.send_flow[i]);  // exact
        if (t.parent[i] == t.sink_index()) inflow += t.send_flow[i];
        // acyclic: walking parents reaches the sink within m steps
        int at = i;
        int steps = 0;
        while (at != t.sink_index()) {
          at = t.parent[at];
          ++steps;
          REQUIRE(steps <= m);
        }
      }
      REQUIRE(inflow == m * bits);  // exact in doubles: sums of 3600-multiples
    }
  }

  section("Dijkstra path costs match brute-force enumeration (<= 6 sensors)");
  {
    std::mt19937_64 rng(31);
    const Position sink{30, 30};
    std::uniform_real_distribution<double> ur(0.02, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
      const int m = 3 + static_cast<int>(rng() % 4);
      const auto sensors = random_connected(m, 60.0, rng, sink);
      std::vector<double> res(m);
      for (auto& r : res) r = ur(rng);
      const RoutingTree t = build_routing_tree(sensors, res, sink, p);
      for (int i = 0; i < m; ++i) {
        const double brute = testoracle::min_path_cost_bruteforce(
            sensors, res, sink, p, exps, i);
        REQUIRE(std::abs(t.path_cost[i] - brute) <= 1e-9 * brute);
      }
    }
  }

  section("tree json dump");
  {
    const std::vector<Position> sensors = {{10, 0}};
    const std::vector<double> res = {1.0};
    const RoutingTree t = build_routing_tree(sensors, res, {0, 0}, p);
    const std::string j = routing_tree_to_json(t);
    REQUIRE(j.find("\"parent\"") != std::string::npos);
    REQUIRE(j.find("\"send_flow\"") != std::string::npos);
  }

  std::cout << "routing_test OK\n";
  return 0;
}
