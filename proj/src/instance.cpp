#include "wsn/instance.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace wsn {

using nlohmann::json;

int WsnInstance::accessible_site_count() const {
  int n = 0;
  for (bool a : site_accessible) n += a ? 1 : 0;
  return n;
}

void WsnInstance::validate() const {
  energy.validate();
  if (width <= 0 || height <= 0) throw ConfigError("instance: non-positive map size");
  if (sites.empty()) throw ConfigError("instance: no sites");
  if (sensors_init.empty()) throw ConfigError("instance: no sensors");
  if (site_accessible.size() != sites.size()) {
    throw ConfigError("instance: site_accessible length mismatch");
  }
  if (accessible_site_count() == 0) throw ConfigError("instance: no accessible site");
  auto inside = [&](const Position& p) {
    return p.x >= 0 && p.x <= width && p.y >= 0 && p.y <= height;
  };
  for (const auto& p : sites)
    if (!inside(p)) throw ConfigError("instance: site outside map bounds");
  for (const auto& p : sensors_init)
    if (!inside(p)) throw ConfigError("instance: sensor outside map bounds");
  if (perturb_variance < 0) throw ConfigError("instance: negative perturb_variance");
}

bool sensors_connected(const std::vector<Position>& sensors, double d_max) {
  const int m = static_cast<int>(sensors.size());
  if (m == 0) return false;
  std::vector<char> seen(m, 0);
  std::vector<int> stack = {0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v = 0; v < m; ++v) {
      if (!seen[v] && distance(sensors[u], sensors[v]) <= d_max) {
        seen[v] = 1;
        ++count;
        stack.push_back(v);
      }
    }
  }
  return count == m;
}

bool sites_covered(const std::vector<Position>& sensors,
                   const std::vector<Position>& sites,
                   const std::vector<bool>& accessible, double d_max) {
  for (std::size_t j = 0; j < sites.size(); ++j) {
    if (!accessible[j]) continue;
    bool covered = false;
    for (const auto& s : sensors) {
      if (distance(s, sites[j]) <= d_max) {
        covered = true;
        break;
      }
    }
    if (!covered) return false;
  }
  return true;
}

static json positions_to_json(const std::vector<Position>& ps) {
  json out = json::array();
  for (const auto& p : ps) out.push_back(json::array({p.x, p.y}));
  return out;
}

static std::vector<Position> positions_from_json(const json& j) {
  std::vector<Position> out;
  out.reserve(j.size());
  for (const auto& e : j) out.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
  return out;
}

std::string instance_to_json(const WsnInstance& inst) {
  json j;
  j["map_type"] = inst.map_type;
  j["seed"] = inst.seed;
  j["width"] = inst.width;
  j["height"] = inst.height;
  j["sites"] = positions_to_json(inst.sites);
  j["site_accessible"] = inst.site_accessible;
  j["sensors"] = positions_to_json(inst.sensors_init);
  j["dynamic"] = inst.dynamic;
  j["perturb_variance"] = inst.perturb_variance;
  j["energy"] = {{"a_pJ", inst.energy.a_pJ},       {"b_nJ", inst.energy.b_nJ},
                 {"er_nJ", inst.energy.er_nJ},     {"d_max", inst.energy.d_max},
                 {"z_bps", inst.energy.z_bps},     {"delta_t_s", inst.energy.delta_t_s},
                 {"e_init_J", inst.energy.e_init_J}};
  return j.dump(2);
}

WsnInstance instance_from_json(const std::string& text) {
  json j = json::parse(text);
  WsnInstance inst;
  inst.map_type = j.at("map_type").get<int>();
  inst.seed = j.at("seed").get<std::uint64_t>();
  inst.width = j.at("width").get<double>();
  inst.height = j.at("height").get<double>();
  inst.sites = positions_from_json(j.at("sites"));
  inst.site_accessible = j.at("site_accessible").get<std::vector<bool>>();
  inst.sensors_init = positions_from_json(j.at("sensors"));
  inst.dynamic = j.at("dynamic").get<bool>();
  inst.perturb_variance = j.at("perturb_variance").get<double>();
  const json& e = j.at("energy");
  inst.energy.a_pJ = e.at("a_pJ").get<double>();
  inst.energy.b_nJ = e.at("b_nJ").get<double>();
  inst.energy.er_nJ = e.at("er_nJ").get<double>();
  inst.energy.d_max = e.at("d_max").get<double>();
  inst.energy.z_bps = e.at("z_bps").get<double>();
  inst.energy.delta_t_s = e.at("delta_t_s").get<double>();
  inst.energy.e_init_J = e.at("e_init_J").get<double>();
  inst.validate();
  return inst;
}

void save_instance(const WsnInstance& inst, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << instance_to_json(inst) << "\n";
}

WsnInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return instance_from_json(ss.str());
}

}  // namespace wsn
