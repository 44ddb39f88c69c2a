#include <random>

#include "test_util.hpp"
#include "wsn/comm_graph.hpp"
#include "wsn/instance.hpp"
#include "wsn/types.hpp"

using namespace wsn;

int main() {
  EnergyParams p;  // defaults: a=100 pJ/bit/m^2, b=50 nJ/bit, d_max=30 m

  section("transmit_cost");
  REQUIRE_NEAR(transmit_cost(0.0, p), 5.0e-8, 1e-20);
  REQUIRE_NEAR(transmit_cost(30.0, p), 1.4e-7, 1e-18);
  REQUIRE_NEAR(transmit_cost(10.0, p), 6.0e-8, 1e-18);
  REQUIRE_THROWS(transmit_cost(30.000001, p), RangeError);
  REQUIRE_THROWS(transmit_cost(-1.0, p), RangeError);

  section("transmit_cost strictly increasing on [0, d_max]");
  {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 30.0);
    for (int k = 0; k < 1000; ++k) {
      double d1 = u(rng);
      double d2 = u(rng);
      if (d1 > d2) std::swap(d1, d2);
      if (d1 == d2) continue;
      REQUIRE(transmit_cost(d1, p) < transmit_cost(d2, p));
    }
  }

  section("build_comm_graph boundary rules");
  {
    const std::vector<Position> sensors = {{0, 0}, {30, 0}};
    const CommGraph g = build_comm_graph(sensors, {}, p);
    REQUIRE(g.edges.size() == 1);  // d == d_max is connected
    REQUIRE_NEAR(g.edges[0].weight, 1.0, 1e-15);
  }
  {
    const std::vector<Position> sensors = {{0, 0}, {31, 0}};
    const CommGraph g = build_comm_graph(sensors, {}, p);
    REQUIRE(g.edges.empty());
  }
  {
    const std::vector<Position> sensors = {{0, 0}, {15, 0}};
    const CommGraph g = build_comm_graph(sensors, {}, p);
    REQUIRE(g.edges.size() == 1);
    REQUIRE_NEAR(g.edges[0].weight, 0.5, 1e-15);
  }

  section("graph symmetry and weight normalization");
  {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    std::vector<Position> sensors(25), sites(9);
    for (auto& s : sensors) s = {u(rng), u(rng)};
    for (auto& s : sites) s = {u(rng), u(rng)};
    const CommGraph g = build_comm_graph(sensors, sites, p);
    REQUIRE(g.sensor_count == 25);
    REQUIRE(g.site_count == 9);
    for (const CommEdge& e : g.edges) {
      REQUIRE(e.u < e.v);
      REQUIRE(e.weight > 0.0 && e.weight <= 1.0);
      // adjacency mirrors each edge both ways with the same weight
      bool fwd = false, bwd = false;
      for (const auto& [nbr, w] : g.adj[e.u]) {
        if (nbr == e.v && w == e.weight) fwd = true;
      }
      for (const auto& [nbr, w] : g.adj[e.v]) {
        if (nbr == e.u && w == e.weight) bwd = true;
      }
      REQUIRE(fwd && bwd);
      const double d = distance(g.nodes[e.u].pos, g.nodes[e.v].pos);
      REQUIRE(std::abs(e.weight * p.d_max - d) <= 1e-9 * d);
    }
    // edge present iff within range
    std::size_t expected = 0;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      for (std::size_t j = i + 1; j < g.nodes.size(); ++j) {
        if (distance(g.nodes[i].pos, g.nodes[j].pos) <= p.d_max) ++expected;
      }
    }
    REQUIRE(g.edges.size() == expected);
  }

  section("instance json round trip");
  {
    WsnInstance inst;
    inst.map_type = 0;
    inst.seed = 42;
    inst.width = 60;
    inst.height = 50;
    inst.sites = {{15, 25}, {45, 25}};
    inst.site_accessible = {true, false};
    inst.sensors_init = {{10, 10}, {30, 30}, {50, 40}};
    inst.dynamic = true;
    inst.perturb_variance = 3.0;
    const WsnInstance back = instance_from_json(instance_to_json(inst));
    REQUIRE(back.map_type == inst.map_type);
    REQUIRE(back.seed == inst.seed);
    REQUIRE(back.sites.size() == 2);
    REQUIRE(back.site_accessible[0] && !back.site_accessible[1]);
    REQUIRE(back.sensors_init.size() == 3);
    REQUIRE(back.sensors_init[1].x == 30.0 && back.sensors_init[1].y == 30.0);
    REQUIRE(back.dynamic);
    REQUIRE(back.energy.d_max == 30.0);
  }

  section("energy params validation");
  {
    EnergyParams bad;
    bad.er_nJ = 0.0;
    REQUIRE_THROWS(bad.validate(), ConfigError);
  }

  std::cout << "core_test OK\n";
  return 0;
}
