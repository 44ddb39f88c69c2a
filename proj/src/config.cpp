#include "wsn/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace wsn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto as_double = [&] { return std::stod(value); };
    auto as_int = [&] { return std::stoi(value); };

    if (key == "batch_size") cfg.train.batch_size = as_int();
    else if (key == "replay_buffer_size") cfg.train.replay_capacity = std::stoul(value);
    else if (key == "training_episodes") cfg.train.episodes = as_int();
    else if (key == "learning_optimizer") cfg.learning_optimizer = value;
    else if (key == "learning_rate") cfg.train.learning_rate = as_double();
    else if (key == "epsilon_init") cfg.train.epsilon_init = as_double();
    else if (key == "epsilon_fin") cfg.train.epsilon_fin = as_double();
    else if (key == "epsilon_decay") cfg.train.epsilon_decay = as_double();
    else if (key == "discount_factor") cfg.train.discount = as_double();
    else if (key == "target_sync_period") cfg.train.target_sync_period = as_int();
    else if (key == "aco_ants") cfg.aco.ants = as_int();
    else if (key == "aco_exploitation_rate") cfg.aco.q0 = as_double();
    else if (key == "aco_pheromone_reinforcement") cfg.aco.rho = as_double();
    else if (key == "aco_heuristic_weight") cfg.aco.beta = as_double();
    else if (key == "aco_hop_weight") cfg.aco.hop_weight = as_double();
    else if (key == "aco_horizon") cfg.aco.horizon = as_int();
    else if (key == "aco_iterations") cfg.aco.iterations = as_int();
    else if (key == "gmre_radius") cfg.gmre_radius = as_double();
    else if (key == "fa_x1") cfg.routing.x1 = as_double();
    else if (key == "fa_x2") cfg.routing.x2 = as_double();
    else if (key == "fa_x3") cfg.routing.x3 = as_double();
    else if (key == "e_init_J") cfg.e_init_J = as_double();
    else {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": unknown key '" + key + "'");
    }
  }
  if (cfg.learning_optimizer != "adam") {
    throw ConfigError("learning_optimizer: only 'adam' is supported");
  }
  cfg.aco.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace wsn
