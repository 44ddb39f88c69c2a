#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wsn/types.hpp"

namespace wsn {

// Immutable map description. map_type 1..10 are the standard layouts;
// map_type 0 marks a custom instance (tests, tiny oracle maps).
struct WsnInstance {
  int map_type = 0;
  std::uint64_t seed = 0;
  double width = 0.0;
  double height = 0.0;
  std::vector<Position> sites;          // ordering defines action indices
  std::vector<bool> site_accessible;
  std::vector<Position> sensors_init;   // ordering defines node indices
  bool dynamic = false;
  double perturb_variance = 3.0;        // m^2, per coordinate
  EnergyParams energy;

  int sensor_count() const { return static_cast<int>(sensors_init.size()); }
  int site_count() const { return static_cast<int>(sites.size()); }
  int accessible_site_count() const;
  void validate() const;
};

// True iff the sensor-only communication graph is one component.
bool sensors_connected(const std::vector<Position>& sensors, double d_max);

// True iff every accessible site has at least one sensor within d_max.
bool sites_covered(const std::vector<Position>& sensors,
                   const std::vector<Position>& sites,
                   const std::vector<bool>& accessible, double d_max);

std::string instance_to_json(const WsnInstance& inst);
WsnInstance instance_from_json(const std::string& text);
void save_instance(const WsnInstance& inst, const std::string& path);
WsnInstance load_instance(const std::string& path);

}  // namespace wsn
