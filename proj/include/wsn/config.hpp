#pragma once

#include <string>

#include "wsn/agent.hpp"
#include "wsn/baselines.hpp"
#include "wsn/routing.hpp"

namespace wsn {

// Flat key = value settings file covering every tunable the CLI exposes.
// Unknown keys are errors so typos do not silently fall back to defaults.
struct RunConfig {
  TrainConfig train;
  AcoConfig aco;
  RoutingExponents routing;
  double gmre_radius = -1.0;  // < 0 means d_max
  double e_init_J = 1.0;
  std::string learning_optimizer = "adam";

  static RunConfig load(const std::string& path);
  static RunConfig parse(const std::string& text);
};

}  // namespace wsn
