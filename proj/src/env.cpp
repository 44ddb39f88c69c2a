#include "wsn/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace wsn {

namespace {

const MapSpec kStandardMaps[] = {
    {1, 30, 5, 5, 100, 100, false},    {2, 50, 5, 5, 100, 100, false},
    {3, 100, 5, 5, 100, 100, false},   {4, 100, 10, 10, 150, 150, false},
    {5, 200, 5, 5, 100, 100, false},   {6, 200, 10, 10, 150, 150, false},
    {7, 100, 5, 15, 50, 150, false},   {8, 100, 10, 10, 100, 100, true},
    {9, 300, 10, 10, 150, 150, false}, {10, 500, 20, 20, 150, 150, false},
};

std::vector<Position> grid_sites(const MapSpec& spec) {
  std::vector<Position> sites;
  sites.reserve(spec.site_count());
  for (int r = 0; r < spec.grid_rows; ++r) {
    for (int c = 0; c < spec.grid_cols; ++c) {
      sites.push_back({(c + 0.5) * spec.width / spec.grid_cols,
                       (r + 0.5) * spec.height / spec.grid_rows});
    }
  }
  return sites;
}

}  // namespace

const MapSpec& standard_map_spec(int map_type) {
  if (map_type < 1 || map_type > 10) {
    throw ConfigError("map_type must be in 1..10, got " + std::to_string(map_type));
  }
  return kStandardMaps[map_type - 1];
}

WsnInstance generate_map(const MapSpec& spec, std::uint64_t seed,
                         const EnergyParams& energy, bool dynamic,
                         double perturb_variance) {
  energy.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(0.0, spec.width);
  std::uniform_real_distribution<double> uy(0.0, spec.height);

  WsnInstance inst;
  inst.map_type = spec.map_type;
  inst.seed = seed;
  inst.width = spec.width;
  inst.height = spec.height;
  inst.sites = grid_sites(spec);
  inst.dynamic = dynamic;
  inst.perturb_variance = perturb_variance;
  inst.energy = energy;

  const int retry_budget = 1000;
  for (int attempt = 0; attempt < retry_budget; ++attempt) {
    inst.site_accessible.assign(inst.sites.size(), true);
    if (spec.half_sites_inaccessible) {
      std::vector<int> idx(inst.sites.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      for (std::size_t k = 0; k < idx.size() / 2; ++k) {
        inst.site_accessible[idx[k]] = false;
      }
    }
    inst.sensors_init.clear();
    inst.sensors_init.reserve(spec.sensor_count);
    for (int i = 0; i < spec.sensor_count; ++i) {
      inst.sensors_init.push_back({ux(rng), uy(rng)});
    }
    if (sensors_connected(inst.sensors_init, energy.d_max) &&
        sites_covered(inst.sensors_init, inst.sites, inst.site_accessible,
                      energy.d_max)) {
      inst.validate();
      return inst;
    }
  }
  throw GenerationError("generate_map: retry budget exhausted for map_type " +
                        std::to_string(spec.map_type) + ", seed " +
                        std::to_string(seed));
}

WsnInstance generate_map(int map_type, std::uint64_t seed,
                         const EnergyParams& energy, bool dynamic) {
  return generate_map(standard_map_spec(map_type), seed, energy, dynamic);
}

NodeFeatures make_node_features(const WsnInstance& inst,
                                const std::vector<Position>& sensor_positions,
                                const std::vector<double>& residuals,
                                const std::vector<double>& drains) {
  const int m = inst.sensor_count();
  const int n = inst.site_count();
  NodeFeatures f;
  f.sensor_count = m;
  f.site_count = n;
  f.x.resize(m + n, 5);
  double max_drain = 0.0;
  for (double d : drains) max_drain = std::max(max_drain, d);
  for (int i = 0; i < m; ++i) {
    const double frac = std::clamp(residuals[i] / inst.energy.e_init_J, 0.0, 1.0);
    f.x(i, 0) = 0.0;
    f.x(i, 1) = sensor_positions[i].x / inst.width;
    f.x(i, 2) = sensor_positions[i].y / inst.height;
    f.x(i, 3) = frac;
    f.x(i, 4) = max_drain > 0.0 ? drains[i] / max_drain : 0.0;
  }
  for (int j = 0; j < n; ++j) {
    f.x(m + j, 0) = 1.0;
    f.x(m + j, 1) = inst.sites[j].x / inst.width;
    f.x(m + j, 2) = inst.sites[j].y / inst.height;
    f.x(m + j, 3) = 0.0;
    f.x(m + j, 4) = 0.0;
  }
  return f;
}

std::vector<Position> perturbed_positions(const WsnInstance& inst,
                                          std::mt19937_64& rng) {
  const double sigma = std::sqrt(inst.perturb_variance);
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<Position> out;
  out.reserve(inst.sensors_init.size());
  for (const auto& p0 : inst.sensors_init) {
    Position p{p0.x + noise(rng), p0.y + noise(rng)};
    p.x = std::clamp(p.x, 0.0, inst.width);
    p.y = std::clamp(p.y, 0.0, inst.height);
    out.push_back(p);
  }
  return out;
}

Environment::Environment(WsnInstance inst, const RoutingExponents& routing)
    : inst_(std::move(inst)), routing_(routing) {
  inst_.validate();
}

int Environment::initial_sink_site(const WsnInstance& inst) {
  const Position center{inst.width / 2.0, inst.height / 2.0};
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int j = 0; j < inst.site_count(); ++j) {
    if (!inst.site_accessible[j]) continue;
    const double d = distance(inst.sites[j], center);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

void Environment::reset(std::uint64_t seed) {
  rng_.seed(seed);
  state_.round = 0;
  state_.sensor_positions = inst_.sensors_init;
  state_.residuals.assign(inst_.sensor_count(), inst_.energy.e_init_J);
  state_.last_drain.assign(inst_.sensor_count(), 0.0);
  state_.sink_site = initial_sink_site(inst_);
  trace_ = {};
  last_tree_ = {};
  trace_.start_site = state_.sink_site;
  trace_.sojourn_totals.assign(inst_.site_count(), 0);
  done_ = false;
  graph_cache_.reset();
}

void Environment::perturb_sensors() {
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<Position> cand = perturbed_positions(inst_, rng_);
    if (sensors_connected(cand, inst_.energy.d_max) &&
        sites_covered(cand, inst_.sites, inst_.site_accessible,
                      inst_.energy.d_max)) {
      state_.sensor_positions = std::move(cand);
      return;
    }
  }
  // All tries broke connectivity: keep the previous positions.
}

StepResult Environment::step(int site) {
  if (done_) throw StateError("step: episode already finished");
  if (site < 0 || site >= inst_.site_count()) {
    throw ActionError("step: site index " + std::to_string(site) + " out of range");
  }
  if (!inst_.site_accessible[site]) {
    throw ActionError("step: site " + std::to_string(site) + " is inaccessible");
  }
  if (inst_.dynamic) {
    perturb_sensors();
    graph_cache_.reset();
  }
  state_.sink_site = site;
  last_tree_ = build_routing_tree(state_.sensor_positions, state_.residuals,
                                  inst_.sites[site], inst_.energy, routing_);
  std::vector<double> drain = round_energy_drain(
      last_tree_, state_.sensor_positions, inst_.sites[site], inst_.energy);
  double min_resid = std::numeric_limits<double>::infinity();
  for (int i = 0; i < inst_.sensor_count(); ++i) {
    state_.residuals[i] -= drain[i];
    min_resid = std::min(min_resid, state_.residuals[i]);
  }
  state_.last_drain = std::move(drain);
  state_.round += 1;
  trace_.visited.push_back(site);
  trace_.sojourn_totals[site] += 1;
  trace_.min_residual.push_back(min_resid);
  trace_.lifetime = state_.round;
  done_ = min_resid <= 0.0;
  return {1.0, done_};
}

NodeFeatures Environment::node_features() const {
  return make_node_features(inst_, state_.sensor_positions, state_.residuals,
                            state_.last_drain);
}

std::vector<bool> Environment::action_mask() const {
  return {inst_.site_accessible.begin(), inst_.site_accessible.end()};
}

const CommGraph& Environment::comm_graph() const {
  if (!graph_cache_) {
    graph_cache_ = build_comm_graph(state_.sensor_positions, inst_.sites,
                                    inst_.energy);
  }
  return *graph_cache_;
}

std::string trace_to_csv(const EpisodeTrace& trace) {
  std::ostringstream out;
  out << "round,site_index,min_residual_J\n";
  out.precision(17);
  for (std::size_t k = 0; k < trace.visited.size(); ++k) {
    out << k + 1 << "," << trace.visited[k] << "," << trace.min_residual[k] << "\n";
  }
  return out.str();
}

}  // namespace wsn
