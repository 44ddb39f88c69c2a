#include "wsn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace wsn {

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a + 0x9e3779b97f4a7c15ULL + (b << 17);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

}  // namespace

EvalResult evaluate(SinkPolicy& policy, const WsnInstance& instance,
                    int n_episodes, std::uint64_t base_seed,
                    const RoutingExponents& routing) {
  using clock = std::chrono::steady_clock;
  EvalResult result;
  Environment env(instance, routing);
  double total_decision_s = 0.0;
  long total_decisions = 0;
  for (int ep = 0; ep < n_episodes; ++ep) {
    env.reset(mix_seed(base_seed, static_cast<std::uint64_t>(ep)));
    policy.on_episode_start(env);
    double episode_decision_s = 0.0;
    long episode_decisions = 0;
    while (!env.done()) {
      const auto t0 = clock::now();
      const int site = policy.select_site(env);
      const auto t1 = clock::now();
      episode_decision_s += std::chrono::duration<double>(t1 - t0).count();
      episode_decisions += 1;
      env.step(site);
    }
    result.lifetimes.push_back(env.trace().lifetime);
    result.per_episode_decision_ms.push_back(
        episode_decisions > 0 ? 1e3 * episode_decision_s / episode_decisions : 0.0);
    total_decision_s += episode_decision_s;
    total_decisions += episode_decisions;
  }
  const double sum =
      std::accumulate(result.lifetimes.begin(), result.lifetimes.end(), 0.0);
  result.mean_lifetime_rounds = sum / n_episodes;
  result.mean_lifetime_seconds =
      result.mean_lifetime_rounds * instance.energy.delta_t_s;
  result.mean_decision_time_ms =
      total_decisions > 0 ? 1e3 * total_decision_s / total_decisions : 0.0;
  return result;
}

std::unique_ptr<SinkPolicy> make_policy(const std::string& method,
                                        const WsnInstance& instance,
                                        std::uint64_t seed,
                                        const std::string& checkpoint_path,
                                        const AcoConfig& aco) {
  (void)instance;
  if (method == "gmre") return std::make_unique<GmrePolicy>();
  if (method == "random") return std::make_unique<RandomPolicy>(seed);
  if (method == "aco") return std::make_unique<AcoPolicy>(aco, seed);
  if (method == "hgff") {
    if (checkpoint_path.empty()) {
      throw ConfigError("method hgff needs a checkpoint");
    }
    return std::make_unique<QNetPolicy>(
        nn::load_checkpoint(checkpoint_path).params);
  }
  throw ConfigError("unknown method: " + method);
}

std::string result_rows_to_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  out << "method,map_type,instance_seed,episode,lifetime_rounds,decision_time_ms\n";
  out.precision(6);
  out << std::fixed;
  for (const ResultRow& r : rows) {
    out << r.method << "," << r.map_type << "," << r.instance_seed << ","
        << r.episode << "," << r.lifetime_rounds << "," << r.decision_time_ms
        << "\n";
  }
  return out.str();
}

std::vector<ResultRow> result_rows_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);  // header
  if (line != "method,map_type,instance_seed,episode,lifetime_rounds,decision_time_ms") {
    throw ConfigError("unexpected results CSV header: " + line);
  }
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ResultRow r;
    std::string field;
    std::getline(ls, r.method, ',');
    std::getline(ls, field, ',');
    r.map_type = std::stoi(field);
    std::getline(ls, field, ',');
    r.instance_seed = std::stoull(field);
    std::getline(ls, field, ',');
    r.episode = std::stoi(field);
    std::getline(ls, field, ',');
    r.lifetime_rounds = std::stoi(field);
    std::getline(ls, field, ',');
    r.decision_time_ms = std::stod(field);
    rows.push_back(std::move(r));
  }
  return rows;
}

SuiteResult run_suite(const SuiteOptions& options) {
  SuiteResult result;
  struct SummaryEntry {
    int type;
    std::string method;
    std::uint64_t seed;
    EvalResult ev;
  };
  std::vector<SummaryEntry> summaries;

  for (int type : options.map_types) {
    for (int s = 0; s < options.seeds_per_type; ++s) {
      const std::uint64_t instance_seed = mix_seed(options.base_seed,
          static_cast<std::uint64_t>(type) * 1000 + static_cast<std::uint64_t>(s));
      const WsnInstance instance =
          generate_map(standard_map_spec(type), instance_seed, options.energy,
                       options.dynamic);
      for (const std::string& method : options.methods) {
        std::string ckpt;
        if (method == "hgff") {
          if (options.checkpoint_pattern.empty()) {
            throw ConfigError("suite: method hgff needs --checkpoint pattern");
          }
          ckpt = options.checkpoint_pattern;
          const std::string token = "{type}";
          if (const auto pos = ckpt.find(token); pos != std::string::npos) {
            ckpt.replace(pos, token.size(), std::to_string(type));
          }
          if (!std::filesystem::exists(ckpt)) {
            throw ConfigError("suite: missing checkpoint " + ckpt);
          }
        }
        auto policy = make_policy(method, instance,
                                  mix_seed(instance_seed, 0xAC0), ckpt,
                                  options.aco);
        EvalResult ev = evaluate(*policy, instance, options.n_episodes,
                                 instance_seed, options.routing);
        for (int ep = 0; ep < options.n_episodes; ++ep) {
          result.rows.push_back({method, type, instance_seed, ep,
                                 ev.lifetimes[ep],
                                 ev.per_episode_decision_ms[ep]});
        }
        summaries.push_back({type, method, instance_seed, std::move(ev)});
      }
    }
  }
  // Grouped by map type then method; seeds stay in generation order.
  std::stable_sort(summaries.begin(), summaries.end(),
                   [](const SummaryEntry& a, const SummaryEntry& b) {
                     if (a.type != b.type) return a.type < b.type;
                     return a.method < b.method;
                   });
  std::ostringstream summary;
  summary << "map_type,method,instance_seed,mean_lifetime_rounds,"
             "mean_lifetime_s,mean_decision_time_ms\n";
  summary.precision(12);
  summary << std::fixed;
  for (const SummaryEntry& e : summaries) {
    summary << e.type << "," << e.method << "," << e.seed << ","
            << e.ev.mean_lifetime_rounds << "," << e.ev.mean_lifetime_seconds
            << "," << e.ev.mean_decision_time_ms << "\n";
  }
  result.results_csv = result_rows_to_csv(result.rows);
  result.summary_csv = summary.str();
  return result;
}

void write_suite_csvs(const SuiteResult& result, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto write = [](const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << text;
  };
  write(out_dir + "/results.csv", result.results_csv);
  write(out_dir + "/summary.csv", result.summary_csv);
}

namespace {

struct Visit {
  int site;
  int sojourn;
};

std::vector<Visit> run_lengths(const EpisodeTrace& trace) {
  std::vector<Visit> out;
  for (int site : trace.visited) {
    if (!out.empty() && out.back().site == site) {
      out.back().sojourn += 1;
    } else {
      out.push_back({site, 1});
    }
  }
  return out;
}

}  // namespace

std::string render_route(const EpisodeTrace& trace, const WsnInstance& inst) {
  const double margin = 10.0;
  const double w = inst.width + 2 * margin;
  const double h = inst.height + 2 * margin;
  std::ostringstream svg;
  svg.precision(2);
  svg << std::fixed;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << w << " "
      << h << "\" width=\"" << 6 * w << "\" height=\"" << 6 * h << "\">\n";
  svg << "<defs><marker id=\"arrow\" viewBox=\"0 0 10 10\" refX=\"9\" refY=\"5\""
         " markerWidth=\"5\" markerHeight=\"5\" orient=\"auto-start-reverse\">"
         "<path d=\"M 0 0 L 10 5 L 0 10 z\" fill=\"#c0392b\"/></marker></defs>\n";
  // Flip y so the map origin sits bottom-left.
  auto px = [&](double x) { return x + margin; };
  auto py = [&](double y) { return h - (y + margin); };

  svg << "<rect x=\"" << px(0) << "\" y=\"" << py(inst.height) << "\" width=\""
      << inst.width << "\" height=\"" << inst.height
      << "\" fill=\"white\" stroke=\"#888\"/>\n";
  for (int j = 0; j < inst.site_count(); ++j) {
    const Position& p = inst.sites[j];
    svg << "<circle class=\"site\" cx=\"" << px(p.x) << "\" cy=\"" << py(p.y)
        << "\" r=\"2.2\" fill=\"none\" stroke=\""
        << (inst.site_accessible[j] ? "#34495e" : "#d5d8dc")
        << "\" stroke-dasharray=\"1.5,1\"/>\n";
  }
  for (const Position& p : inst.sensors_init) {
    svg << "<circle class=\"sensor\" cx=\"" << px(p.x) << "\" cy=\"" << py(p.y)
        << "\" r=\"0.8\" fill=\"#7f8c8d\"/>\n";
  }

  const std::vector<Visit> visits = run_lengths(trace);
  // Arrows between consecutive distinct sojourns, numbered in move order.
  std::vector<Visit> stops;
  stops.push_back({trace.start_site, 0});
  for (const Visit& v : visits) {
    if (v.site != stops.back().site) {
      stops.push_back(v);
    } else {
      stops.back().sojourn += v.sojourn;
    }
  }
  for (std::size_t k = 1; k < stops.size(); ++k) {
    const Position& a = inst.sites[stops[k - 1].site];
    const Position& b = inst.sites[stops[k].site];
    svg << "<line class=\"move\" x1=\"" << px(a.x) << "\" y1=\"" << py(a.y)
        << "\" x2=\"" << px(b.x) << "\" y2=\"" << py(b.y)
        << "\" stroke=\"#c0392b\" stroke-width=\"0.5\" marker-end=\"url(#arrow)\"/>\n";
    const double mx = px((a.x + b.x) / 2);
    const double my = py((a.y + b.y) / 2);
    svg << "<text x=\"" << mx << "\" y=\"" << my
        << "\" font-size=\"3\" fill=\"#c0392b\">" << k;
    if (stops[k].sojourn > 1) svg << " (t=" << stops[k].sojourn << ")";
    svg << "</text>\n";
  }
  // Star at the sink's start site.
  if (trace.start_site >= 0) {
    const Position& s = inst.sites[trace.start_site];
    const double cx = px(s.x);
    const double cy = py(s.y);
    svg << "<path class=\"start\" d=\"";
    for (int k = 0; k < 10; ++k) {
      const double r = k % 2 == 0 ? 3.0 : 1.2;
      const double ang = -1.5707963267948966 + k * 0.6283185307179586;
      svg << (k == 0 ? "M" : "L") << cx + r * std::cos(ang) << " "
          << cy + r * std::sin(ang) << " ";
    }
    svg << "Z\" fill=\"#e74c3c\"/>\n";
    if (!stops.empty() && stops[0].sojourn > 1) {
      svg << "<text x=\"" << cx + 3 << "\" y=\"" << cy
          << "\" font-size=\"3\" fill=\"#e74c3c\">t=" << stops[0].sojourn
          << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace wsn
