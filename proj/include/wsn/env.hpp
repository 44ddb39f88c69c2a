#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wsn/comm_graph.hpp"
#include "wsn/instance.hpp"
#include "wsn/routing.hpp"

namespace wsn {

// One row of the standard map table: sensor count, site grid (cols along
// width, rows along height), map size.
struct MapSpec {
  int map_type = 0;
  int sensor_count = 0;
  int grid_cols = 0;
  int grid_rows = 0;
  double width = 0.0;
  double height = 0.0;
  bool half_sites_inaccessible = false;

  int site_count() const { return grid_cols * grid_rows; }
};

const MapSpec& standard_map_spec(int map_type);  // map_type in 1..10

// Sites on a regular grid, sensors uniform at random, resampled (up to 1000
// tries) until the sensor graph is connected and every accessible site is
// covered. Throws GenerationError when the retry budget runs out.
WsnInstance generate_map(const MapSpec& spec, std::uint64_t seed,
                         const EnergyParams& energy = {}, bool dynamic = false,
                         double perturb_variance = 3.0);
WsnInstance generate_map(int map_type, std::uint64_t seed,
                         const EnergyParams& energy = {}, bool dynamic = false);

struct SimState {
  int round = 0;
  std::vector<Position> sensor_positions;
  std::vector<double> residuals;   // J; the terminal round may push one <= 0
  int sink_site = -1;
  std::vector<double> last_drain;  // J spent in the previous round
};

struct EpisodeTrace {
  int start_site = -1;
  std::vector<int> visited;          // site chosen each round, 1..T
  std::vector<long> sojourn_totals;  // per-site rounds
  std::vector<double> min_residual;  // after each round
  int lifetime = 0;
};

// Node features, one row per node (sensors first, then sites), 5 columns:
// type mark, x/width, y/height, residual fraction, normalized drain.
// Site rows carry [1, x/w, y/h, 0, 0].
struct NodeFeatures {
  Eigen::MatrixXd x;
  int sensor_count = 0;
  int site_count = 0;
};

struct StepResult {
  double reward = 0.0;
  bool done = false;
};

NodeFeatures make_node_features(const WsnInstance& inst,
                                const std::vector<Position>& sensor_positions,
                                const std::vector<double>& residuals,
                                const std::vector<double>& drains);

// One draw of the dynamic perturbation: every coordinate sampled from
// Normal(initial coordinate, perturb_variance), clamped to map bounds.
// No connectivity repair here; perturb_sensors adds the retry loop.
std::vector<Position> perturbed_positions(const WsnInstance& inst,
                                          std::mt19937_64& rng);

// The MDP environment. Copyable so planners can roll out clones.
class Environment {
 public:
  explicit Environment(WsnInstance inst, const RoutingExponents& routing = {});

  const WsnInstance& instance() const { return inst_; }
  const SimState& state() const { return state_; }
  const EpisodeTrace& trace() const { return trace_; }
  bool done() const { return done_; }

  void reset(std::uint64_t seed);
  StepResult step(int site);

  NodeFeatures node_features() const;
  std::vector<bool> action_mask() const;
  const CommGraph& comm_graph() const;
  // Forwarding tree built by the most recent step.
  const RoutingTree& last_tree() const { return last_tree_; }

  // Accessible site nearest the map center, lower index on ties.
  static int initial_sink_site(const WsnInstance& inst);

 private:
  void perturb_sensors();

  WsnInstance inst_;
  RoutingExponents routing_;
  SimState state_;
  EpisodeTrace trace_;
  std::mt19937_64 rng_;
  bool done_ = true;
  RoutingTree last_tree_;
  mutable std::optional<CommGraph> graph_cache_;
};

// CSV rows: round,site_index,min_residual_J (header included).
std::string trace_to_csv(const EpisodeTrace& trace);

}  // namespace wsn
