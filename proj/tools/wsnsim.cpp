#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wsn/agent.hpp"
#include "wsn/baselines.hpp"
#include "wsn/bench.hpp"
#include "wsn/config.hpp"
#include "wsn/env.hpp"
#include "wsn/nn.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    const auto comma = csv.find(',', pos);
    out.push_back(std::stoi(csv.substr(pos, comma - pos)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::vector<std::string> parse_string_list(const std::string& csv) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    const auto comma = csv.find(',', pos);
    out.push_back(csv.substr(pos, comma - pos));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw wsn::ConfigError("cannot write " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mobile-sink WSN lifetime simulator and HGFF training harness"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  std::string config_path;
  std::string out_dir = "out";
  app.add_option("--seed", seed, "Base RNG seed")->capture_default_str();
  app.add_option("--config", config_path, "Flat key=value settings file");
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();

  // gen-maps
  auto* gen = app.add_subcommand("gen-maps", "Generate map instance files");
  int gen_type = 1;
  int gen_count = 10;
  bool gen_dynamic = false;
  gen->add_option("--type", gen_type, "Map type 1..10")->required();
  gen->add_option("--count", gen_count, "Instances to generate")
      ->capture_default_str();
  gen->add_flag("--dynamic", gen_dynamic, "Perturb sensors every round");

  // train
  auto* train = app.add_subcommand("train", "Train the HGFF agent on one map");
  std::string train_map;
  int train_episodes = -1;
  bool no_fusion = false;
  bool no_type_embedding = false;
  train->add_option("--map", train_map, "Instance JSON")->required();
  train->add_option("--episodes", train_episodes, "Override training episodes");
  train->add_flag("--no-fusion", no_fusion, "Disable attention feature fusion");
  train->add_flag("--no-type-embedding", no_type_embedding,
                  "Disable node type embeddings");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  std::string eval_map, eval_ckpt, eval_trace;
  int eval_episodes = 20;
  eval_cmd->add_option("--map", eval_map, "Instance JSON")->required();
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--episodes", eval_episodes, "Test episodes")
      ->capture_default_str();
  eval_cmd->add_option("--trace", eval_trace, "Write last episode trace CSV here");

  // baseline
  auto* base = app.add_subcommand("baseline", "Evaluate a heuristic policy");
  std::string base_map, base_method = "gmre";
  int base_episodes = 20;
  base->add_option("--map", base_map, "Instance JSON")->required();
  base->add_option("--method", base_method, "gmre | aco | random")
      ->capture_default_str();
  base->add_option("--episodes", base_episodes, "Test episodes")
      ->capture_default_str();

  // oracle
  auto* oracle = app.add_subcommand("oracle", "Exhaustive search on a tiny map");
  std::string oracle_map;
  int oracle_horizon = 8;
  oracle->add_option("--map", oracle_map, "Instance JSON")->required();
  oracle->add_option("--horizon", oracle_horizon, "Sequence length")
      ->capture_default_str();

  // render
  auto* render = app.add_subcommand("render", "Render one greedy episode as SVG");
  std::string render_map, render_ckpt, render_method, render_out = "route.svg";
  render->add_option("--map", render_map, "Instance JSON")->required();
  render->add_option("--checkpoint", render_ckpt, "Checkpoint (HGFF policy)");
  render->add_option("--method", render_method, "Heuristic policy instead");
  render->add_option("--svg", render_out, "Output SVG path")->capture_default_str();

  // suite
  auto* suite = app.add_subcommand("suite", "Run the benchmark suite");
  std::string suite_types = "1,4,7";
  int suite_seeds = 10;
  std::string suite_methods = "gmre,random";
  int suite_episodes = 20;
  std::string suite_ckpt_pattern;
  bool suite_dynamic = false;
  suite->add_option("--types", suite_types, "Comma-separated map types")
      ->capture_default_str();
  suite->add_option("--seeds-per-type", suite_seeds, "Instances per type")
      ->capture_default_str();
  suite->add_option("--methods", suite_methods,
                    "Comma-separated: gmre,aco,random,hgff")
      ->capture_default_str();
  suite->add_option("--episodes", suite_episodes, "Test episodes per instance")
      ->capture_default_str();
  suite->add_option("--checkpoint", suite_ckpt_pattern,
                    "Checkpoint path pattern, {type} substituted");
  suite->add_flag("--dynamic", suite_dynamic, "Dynamic maps");

  CLI11_PARSE(app, argc, argv);

  try {
    wsn::RunConfig cfg;
    if (!config_path.empty()) cfg = wsn::RunConfig::load(config_path);

    if (*gen) {
      fs::create_directories(out_dir);
      wsn::EnergyParams energy;
      energy.e_init_J = cfg.e_init_J;
      for (int k = 0; k < gen_count; ++k) {
        const auto inst = wsn::generate_map(wsn::standard_map_spec(gen_type),
                                            seed + k, energy, gen_dynamic);
        const std::string path = out_dir + "/map_type" + std::to_string(gen_type) +
                                 "_seed" + std::to_string(seed + k) + ".json";
        wsn::save_instance(inst, path);
        std::cout << path << "\n";
      }
    } else if (*train) {
      fs::create_directories(out_dir);
      const wsn::WsnInstance inst = wsn::load_instance(train_map);
      wsn::TrainConfig tc = cfg.train;
      if (train_episodes > 0) tc.episodes = train_episodes;
      wsn::nn::NetConfig nc;
      nc.use_feature_fusion = !no_fusion;
      nc.use_type_embedding = !no_type_embedding;
      wsn::DoubleDqnTrainer trainer(inst, tc, nc, seed, cfg.routing);
      const std::string log_path = out_dir + "/train_log.csv";
      const wsn::TrainResult result = trainer.train_loop(log_path);
      const std::string ckpt_path = out_dir + "/checkpoint.bin";
      wsn::nn::save_checkpoint(ckpt_path, result.params, result.total_steps,
                               trainer.rng_state());
      std::cout << "checkpoint: " << ckpt_path << "\n"
                << "train log:  " << log_path << "\n";
    } else if (*eval_cmd) {
      const wsn::WsnInstance inst = wsn::load_instance(eval_map);
      wsn::QNetPolicy policy(wsn::nn::load_checkpoint(eval_ckpt).params);
      const wsn::EvalResult r =
          wsn::evaluate(policy, inst, eval_episodes, seed, cfg.routing);
      std::cout << "mean_lifetime_rounds: " << r.mean_lifetime_rounds << "\n"
                << "mean_lifetime_s:      " << r.mean_lifetime_seconds << "\n"
                << "mean_decision_ms:     " << r.mean_decision_time_ms << "\n";
      if (!eval_trace.empty()) {
        wsn::Environment env(inst, cfg.routing);
        wsn::greedy_rollout(env, policy.params(), seed);
        write_text(eval_trace, wsn::trace_to_csv(env.trace()));
      }
    } else if (*base) {
      const wsn::WsnInstance inst = wsn::load_instance(base_map);
      auto policy = wsn::make_policy(base_method, inst, seed, {}, cfg.aco);
      const wsn::EvalResult r =
          wsn::evaluate(*policy, inst, base_episodes, seed, cfg.routing);
      std::cout << "method:               " << policy->name() << "\n"
                << "mean_lifetime_rounds: " << r.mean_lifetime_rounds << "\n"
                << "mean_lifetime_s:      " << r.mean_lifetime_seconds << "\n"
                << "mean_decision_ms:     " << r.mean_decision_time_ms << "\n";
    } else if (*oracle) {
      const wsn::WsnInstance inst = wsn::load_instance(oracle_map);
      const wsn::OracleResult r =
          wsn::oracle_search(inst, oracle_horizon, seed, cfg.routing);
      std::cout << "best_lifetime: " << r.lifetime << "\nsequence:";
      for (int s : r.sequence) std::cout << " " << s;
      std::cout << "\n";
    } else if (*render) {
      const wsn::WsnInstance inst = wsn::load_instance(render_map);
      wsn::Environment env(inst, cfg.routing);
      if (!render_ckpt.empty()) {
        wsn::greedy_rollout(env, wsn::nn::load_checkpoint(render_ckpt).params,
                            seed);
      } else if (!render_method.empty()) {
        auto policy = wsn::make_policy(render_method, inst, seed, {}, cfg.aco);
        wsn::rollout(env, *policy, seed);
      } else {
        throw wsn::ConfigError("render: pass --checkpoint or --method");
      }
      write_text(render_out, wsn::render_route(env.trace(), inst));
      std::cout << render_out << " (lifetime " << env.trace().lifetime << ")\n";
    } else if (*suite) {
      wsn::SuiteOptions opt;
      opt.map_types = parse_int_list(suite_types);
      opt.seeds_per_type = suite_seeds;
      opt.methods = parse_string_list(suite_methods);
      opt.n_episodes = suite_episodes;
      opt.base_seed = seed;
      opt.checkpoint_pattern = suite_ckpt_pattern;
      opt.dynamic = suite_dynamic;
      opt.energy.e_init_J = cfg.e_init_J;
      opt.aco = cfg.aco;
      opt.routing = cfg.routing;
      const wsn::SuiteResult result = wsn::run_suite(opt);
      wsn::write_suite_csvs(result, out_dir);
      std::cout << out_dir << "/results.csv\n" << out_dir << "/summary.csv\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
