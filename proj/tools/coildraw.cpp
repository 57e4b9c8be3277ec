#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "coildraw/harness.hpp"

using namespace coildraw;

namespace {

/// --config wins; otherwise COILDRAW_CONFIG; otherwise built-in defaults.
RunConfig base_config(const std::string& config_flag) {
  std::string path = config_flag;
  if (path.empty()) {
    if (const char* env = std::getenv("COILDRAW_CONFIG")) path = env;
  }
  if (path.empty()) return RunConfig{};
  return load_run_config(path);
}

int fail(const std::string& kind, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << "\n";
  return 1;
}

void print_line(const nlohmann::ordered_json& j) { std::cout << j.dump() << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"inductor layout agents with a surrogate EM simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string agent_flag;
  std::uint64_t seed_flag = 0;
  std::string out_flag;
  std::string layout_path;
  std::vector<std::string> run_dirs;

  CLI::App* train = app.add_subcommand("train", "train one agent and write run artifacts");
  train->add_option("--config", config_path, "JSON config file");
  train->add_option("--agent", agent_flag, "agent kind")
      ->check(CLI::IsMember({"dqn", "ga", "random"}));
  train->add_option("--seed", seed_flag, "RNG seed; overrides the config");
  train->add_option("--out", out_flag, "output directory; overrides the config");

  CLI::App* transfer = app.add_subcommand("transfer", "pre-train, fine-tune, and scratch baseline");
  transfer->add_option("--config", config_path, "JSON config file with a transfer block");
  transfer->add_option("--seed", seed_flag, "RNG seed; overrides the config");
  transfer->add_option("--out", out_flag, "output directory; overrides the config");

  CLI::App* simulate_cmd = app.add_subcommand("simulate", "evaluate a stored layout");
  simulate_cmd->add_option("--layout", layout_path, "layout JSON file")->required();
  simulate_cmd->add_option("--config", config_path, "JSON config file");

  CLI::App* export_svg = app.add_subcommand("export-svg", "render a stored layout to SVG");
  export_svg->add_option("--layout", layout_path, "layout JSON file")->required();
  export_svg->add_option("--out", out_flag, "output SVG path")->required();
  export_svg->add_option("--config", config_path, "JSON config file");

  CLI::App* report = app.add_subcommand("report", "simulation-growth report across runs");
  report->add_option("--runs", run_dirs, "run directories with metrics.csv")->required();
  report->add_option("--out", out_flag, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail("usage", e.what());
  }

  try {
    if (app.got_subcommand(train)) {
      RunConfig cfg = base_config(config_path);
      if (train->count("--agent")) cfg.agent = agent_from_name(agent_flag);
      if (train->count("--seed")) cfg.seed = seed_flag;
      if (train->count("--out")) cfg.output_dir = out_flag;
      const StageSummary sum = run_training(cfg);
      nlohmann::ordered_json j;
      j["agent"] = agent_name(sum.agent);
      j["seed"] = sum.seed;
      j["episodes"] = sum.episodes;
      j["env_steps"] = sum.env_steps;
      j["simulations"] = sum.simulations;
      j["best_reward"] = sum.best_reward;
      j["out"] = cfg.output_dir;
      print_line(j);
    } else if (app.got_subcommand(transfer)) {
      RunConfig cfg = base_config(config_path);
      if (transfer->count("--seed")) cfg.seed = seed_flag;
      if (transfer->count("--out")) cfg.output_dir = out_flag;
      const TransferSummary sum = run_transfer(cfg);
      nlohmann::ordered_json j;
      j["threshold"] = sum.threshold;
      j["finetune_simulations_to_threshold"] =
          sum.finetune_sims_to_threshold ? nlohmann::ordered_json(*sum.finetune_sims_to_threshold)
                                         : nlohmann::ordered_json(nullptr);
      j["scratch_simulations_to_threshold"] =
          sum.scratch_sims_to_threshold ? nlohmann::ordered_json(*sum.scratch_sims_to_threshold)
                                        : nlohmann::ordered_json(nullptr);
      j["best_cached_at_finetune_start"] = sum.best_cached_at_finetune_start;
      j["out"] = cfg.output_dir;
      print_line(j);
    } else if (app.got_subcommand(simulate_cmd)) {
      const RunConfig cfg = base_config(config_path);
      nlohmann::json record;
      try {
        record = nlohmann::json::parse(read_text_file(layout_path));
      } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("cannot parse " + layout_path + ": " + e.what());
      }
      const Layout layout = layout_from_json(record, cfg.canvas);
      if (layout.status != LayoutStatus::kComplete)
        throw std::invalid_argument("layout is not complete");
      nlohmann::ordered_json j;
      if (const std::optional<Metrics> m = simulate(layout, cfg.material)) {
        j["valid"] = true;
        j["inductance"] = m->inductance;
        j["resistance"] = m->resistance;
        j["srf"] = m->srf;
        j["q_factor"] = m->q_factor;
        j["area"] = m->area;
        j["reward"] = reward(*m, cfg.target);
      } else {
        j["valid"] = false;
        j["reward"] = invalid_penalty(cfg.target);
      }
      print_line(j);
    } else if (app.got_subcommand(export_svg)) {
      const RunConfig cfg = base_config(config_path);
      export_svg_file(layout_path, out_flag, cfg);
      nlohmann::ordered_json j;
      j["out"] = out_flag;
      print_line(j);
    } else if (app.got_subcommand(report)) {
      std::vector<std::pair<std::string, std::vector<EpisodeRow>>> traces;
      for (const std::string& dir : run_dirs) {
        const std::string label = std::filesystem::path(dir).filename().string();
        traces.emplace_back(label.empty() ? dir : label, load_metrics_csv(dir + "/metrics.csv"));
      }
      write_text_file(out_flag, sim_growth_report(traces));
      nlohmann::ordered_json j;
      j["out"] = out_flag;
      j["traces"] = traces.size();
      print_line(j);
    }
  } catch (const ConfigError& e) {
    return fail("config", e.what());
  } catch (const std::invalid_argument& e) {
    return fail("invalid_argument", e.what());
  } catch (const std::exception& e) {
    return fail("error", e.what());
  }
  return 0;
}
