#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "coildraw/agents.hpp"
#include "coildraw/cache.hpp"
#include "coildraw/config.hpp"
#include "coildraw/env.hpp"
#include "coildraw/fmt.hpp"
#include "coildraw/io.hpp"
#include "coildraw/simulate.hpp"
#include "coildraw/svg.hpp"

namespace coildraw {

/// One metrics.csv line, appended after every finished episode.
struct EpisodeRow {
  std::int64_t env_step = 0;
  std::int64_t simulations = 0;
  double episode_reward = 0.0;
  double best_reward_so_far = 0.0;

  bool operator==(const EpisodeRow&) const = default;
};

struct StageSummary {
  AgentKind agent = AgentKind::kRandom;
  Mode mode = Mode::kSymmetric;
  std::uint64_t seed = 0;
  std::int64_t budget = 0;
  std::int64_t episodes = 0;
  std::int64_t env_steps = 0;
  std::int64_t simulations = 0;
  double best_reward = std::numeric_limits<double>::lowest();
  std::vector<EpisodeRow> rows;
};

struct TransferSummary {
  StageSummary pretrain;
  StageSummary finetune;
  StageSummary scratch;
  double threshold = 0.0;
  std::optional<std::int64_t> finetune_sims_to_threshold;
  std::optional<std::int64_t> scratch_sims_to_threshold;
  double best_cached_at_finetune_start = std::numeric_limits<double>::lowest();
};

namespace detail {

inline std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage) {
  return splitmix64(seed ^ splitmix64(0xC0115EEDULL + stage));
}

struct TrainOptions {
  const RunConfig* cfg = nullptr;
  AgentKind agent = AgentKind::kRandom;
  std::int64_t budget = 0;
  std::uint64_t seed = 0;
  bool transfer_features = false;
  std::optional<TargetSpec> fixed_target;
  bool sample_targets = false;
  double spread = 0.0;
  std::optional<std::string> load_checkpoint_path;
  std::optional<double> epsilon_start_override;
  SimulationCache* cache = nullptr;
  std::filesystem::path out_dir;
};

inline std::string metrics_csv(const std::vector<EpisodeRow>& rows) {
  std::string s = "env_step,simulations,episode_reward,best_reward_so_far\n";
  for (const EpisodeRow& r : rows) {
    s += std::to_string(r.env_step);
    s += ',';
    s += std::to_string(r.simulations);
    s += ',';
    s += format_double(r.episode_reward);
    s += ',';
    s += format_double(r.best_reward_so_far);
    s += '\n';
  }
  return s;
}

struct TopEntry {
  double reward = 0.0;
  std::string key;
  std::vector<int> actions;
  Metrics metrics;
};

inline std::vector<TopEntry> top_designs(const SimulationCache& cache, Mode mode,
                                         const TargetSpec& target, int k) {
  std::vector<TopEntry> entries;
  for (const SimulationCache::Record& rec : cache.snapshot()) {
    if (!rec.valid || !rec.metrics) continue;
    if (rec.mode != mode) continue;
    TopEntry e;
    e.reward = reward(*rec.metrics, target);
    e.key = rec.key;
    e.actions = rec.actions;
    e.metrics = *rec.metrics;
    entries.push_back(std::move(e));
  }
  std::stable_sort(entries.begin(), entries.end(), [](const TopEntry& a, const TopEntry& b) {
    if (a.reward != b.reward) return a.reward > b.reward;
    return a.key < b.key;
  });
  if (static_cast<int>(entries.size()) > k) entries.resize(static_cast<std::size_t>(k));
  return entries;
}

inline Layout rebuild_layout(const RunConfig& cfg, const std::vector<int>& actions) {
  Layout layout = initial_layout(cfg.canvas, cfg.mode);
  for (const int a : actions) {
    AppendResult r = append_segment(layout, a);
    if (!r.ok()) throw std::logic_error("rebuild_layout: cached actions do not replay");
    layout = *std::move(r.layout);
  }
  if (layout.status != LayoutStatus::kComplete)
    throw std::logic_error("rebuild_layout: cached actions do not complete");
  return layout;
}

inline std::vector<Segment> full_segments(const Layout& layout) {
  if (layout.mode != Mode::kSymmetric) return layout.segments;
  MirrorOutcome m = mirror(layout);
  if (!m.ok) throw std::logic_error("full_segments: mirror failed for a valid design");
  return std::move(m.segments);
}

inline void write_topk(const RunConfig& cfg, const TargetSpec& target, const SimulationCache& cache,
                       const std::filesystem::path& dir, nlohmann::ordered_json& summary_block) {
  const std::vector<TopEntry> top = top_designs(cache, cfg.mode, target, cfg.top_k);
  std::filesystem::create_directories(dir);
  summary_block = nlohmann::ordered_json::array();
  int rank = 1;
  for (const TopEntry& e : top) {
    const Layout layout = rebuild_layout(cfg, e.actions);
    const std::string stem = "rank_" + std::to_string(rank);
    write_text_file((dir / (stem + ".json")).string(), layout_to_json(layout).dump(2) + "\n");
    SvgAnnotation note;
    note.metrics = e.metrics;
    note.target = target;
    note.reward = e.reward;
    const std::vector<Segment> segs = full_segments(layout);
    write_text_file((dir / (stem + ".svg")).string(),
                    render_layout_svg(cfg.canvas, segs, cfg.mode, note));
    nlohmann::ordered_json row;
    row["rank"] = rank;
    row["reward"] = e.reward;
    row["key"] = e.key;
    row["file"] = stem + ".json";
    summary_block.push_back(std::move(row));
    ++rank;
  }
}

/// Runs one training stage and writes its artifacts into out_dir.
inline StageSummary train_one(const TrainOptions& opt) {
  const RunConfig& cfg = *opt.cfg;
  SimulationCache& cache = *opt.cache;
  const TargetSpec run_target = opt.fixed_target ? *opt.fixed_target : cfg.target;

  Environment env(cfg.env_options(opt.transfer_features), &cache);

  StageSummary sum;
  sum.agent = opt.agent;
  sum.mode = cfg.mode;
  sum.seed = opt.seed;
  sum.budget = opt.budget;

  const std::int64_t sim_base = cache.simulation_count();
  auto sims = [&] { return cache.simulation_count() - sim_base; };

  std::string episode_log;
  auto log_step = [&](std::int64_t episode, int step, int action, const ActionMask& mask,
                      const StepResult& r) {
    if (!cfg.log_episodes) return;
    nlohmann::ordered_json row;
    row["episode"] = episode;
    row["step"] = step;
    row["action"] = action;
    row["mask"] = mask;
    row["reward"] = r.reward;
    row["done"] = r.done;
    episode_log += row.dump();
    episode_log += '\n';
  };

  auto finish_episode = [&](double reward) {
    ++sum.episodes;
    sum.best_reward = std::max(sum.best_reward, reward);
    sum.rows.push_back({sum.env_steps, sims(), reward, sum.best_reward});
  };

  std::optional<DqnAgent> dqn;
  if (opt.agent == AgentKind::kDqn) {
    DqnConfig dc = cfg.dqn;
    if (opt.epsilon_start_override) dc.epsilon_start = *opt.epsilon_start_override;
    dqn.emplace(cfg.net_arch(opt.transfer_features), dc, opt.seed);
    if (opt.load_checkpoint_path) dqn->load(*opt.load_checkpoint_path);
  }

  Rng ga_rng = Rng::stream(opt.seed, 3);
  Rng random_rng = Rng::stream(opt.seed, 4);
  Rng target_rng = Rng::stream(opt.seed, 5);

  auto episode_target = [&]() -> TargetSpec {
    if (opt.sample_targets) return sample_target(cfg.target, opt.spread, target_rng);
    return run_target;
  };

  if (opt.agent == AgentKind::kDqn || opt.agent == AgentKind::kRandom) {
    while (sims() < opt.budget && sum.env_steps < cfg.max_env_steps) {
      Observation obs = env.reset(episode_target());
      PackedObservation prev = PackedObservation::pack(obs);
      int step_in_episode = 0;
      double episode_reward = 0.0;
      bool done = false;
      while (!done) {
        const ActionMask mask = env.action_mask();
        const int action = opt.agent == AgentKind::kDqn
                               ? dqn->act(prev, mask, sum.env_steps)
                               : random_policy(mask, random_rng);
        const StepResult r = env.step(action);
        ++sum.env_steps;
        log_step(sum.episodes, step_in_episode, action, mask, r);
        ++step_in_episode;
        episode_reward += r.reward;
        done = r.done;
        if (opt.agent == AgentKind::kDqn) {
          Transition t;
          t.obs = std::move(prev);
          t.action = action;
          t.reward = r.reward;
          t.next_obs = PackedObservation::pack(r.observation);
          t.done = r.done;
          t.next_mask = r.info.mask;
          prev = t.next_obs;
          dqn->record(std::move(t));
          dqn->maybe_update(sum.env_steps);
        } else {
          prev = PackedObservation::pack(r.observation);
        }
      }
      finish_episode(episode_reward);
    }
  } else {
    std::vector<Genome> population;
    population.reserve(static_cast<std::size_t>(cfg.ga.population));
    for (int i = 0; i < cfg.ga.population; ++i)
      population.push_back(random_genome(cfg.ga.genome_length, ga_rng));
    bool out_of_budget = false;
    while (!out_of_budget) {
      std::vector<double> fitness;
      fitness.reserve(population.size());
      for (const Genome& genome : population) {
        // Episodes are capped alongside env steps: a decode whose first gene
        // is masked consumes no env step, so steps alone cannot bound the run.
        if (sims() >= opt.budget || sum.env_steps >= cfg.max_env_steps ||
            sum.episodes >= cfg.max_env_steps) {
          out_of_budget = true;
          break;
        }
        int step_in_episode = 0;
        const GaDecodeOutcome outcome =
            ga_decode(env, genome, [&](int action, const ActionMask& mask, const StepResult& r) {
              ++sum.env_steps;
              log_step(sum.episodes, step_in_episode, action, mask, r);
              ++step_in_episode;
            });
        fitness.push_back(outcome.reward);
        finish_episode(outcome.reward);
      }
      if (!out_of_budget) population = ga_evolve(population, fitness, cfg.ga, ga_rng);
    }
  }

  sum.simulations = sims();

  std::filesystem::create_directories(opt.out_dir);
  write_text_file((opt.out_dir / "config.json").string(),
                  run_config_to_json(cfg).dump(2) + "\n");
  write_text_file((opt.out_dir / "metrics.csv").string(), metrics_csv(sum.rows));
  cache.persist((opt.out_dir / "cache.jsonl").string());
  if (cfg.log_episodes)
    write_text_file((opt.out_dir / "episodes.jsonl").string(), episode_log);
  if (dqn) dqn->save((opt.out_dir / "checkpoint.bin").string());

  nlohmann::ordered_json topk;
  write_topk(cfg, run_target, cache, opt.out_dir / "topk", topk);

  nlohmann::ordered_json summary;
  summary["agent"] = agent_name(opt.agent);
  summary["mode"] = mode_name(cfg.mode);
  summary["seed"] = opt.seed;
  summary["simulation_budget"] = opt.budget;
  summary["episodes"] = sum.episodes;
  summary["env_steps"] = sum.env_steps;
  summary["simulations"] = sum.simulations;
  summary["best_reward"] = sum.best_reward;
  summary["target"] = {{"inductance", run_target.inductance},
                       {"resistance", run_target.resistance},
                       {"srf", run_target.srf},
                       {"area_max", run_target.area_max}};
  summary["top_k"] = std::move(topk);
  write_text_file((opt.out_dir / "summary.json").string(), summary.dump(2) + "\n");
  return sum;
}

inline std::optional<std::int64_t> sims_to_threshold(const std::vector<EpisodeRow>& rows,
                                                     double threshold) {
  for (const EpisodeRow& r : rows)
    if (r.best_reward_so_far >= threshold - 1e-12) return r.simulations;
  return std::nullopt;
}

}  // namespace detail

/// Trains the configured agent until the simulation budget (cache misses) is
/// exhausted or max_env_steps is reached, writing config.json, metrics.csv,
/// cache.jsonl, summary.json, top-k layouts, the DQN checkpoint, and the
/// per-step episode log when enabled.
inline StageSummary run_training(const RunConfig& cfg) {
  cfg.validate();
  SimulationCache cache;
  detail::TrainOptions opt;
  opt.cfg = &cfg;
  opt.agent = cfg.agent;
  opt.budget = cfg.simulation_budget;
  opt.seed = cfg.seed;
  opt.cache = &cache;
  opt.out_dir = cfg.output_dir;
  return detail::train_one(opt);
}

/// Two-stage transfer experiment: pre-train on sampled targets, fine-tune
/// the checkpoint on the scaled target (sharing the pre-training cache),
/// and train a fresh agent on the same target for comparison. Writes each
/// stage under its own subdirectory plus transfer_summary.json.
inline TransferSummary run_transfer(const RunConfig& cfg) {
  cfg.validate();
  if (!cfg.transfer) throw ConfigError("missing transfer block");
  if (cfg.agent != AgentKind::kDqn) throw ConfigError("transfer requires the dqn agent");
  const TransferConfig& tc = *cfg.transfer;
  const std::filesystem::path root = cfg.output_dir;
  const TargetSpec tuned = cfg.finetune_target();

  TransferSummary out;
  SimulationCache shared_cache;
  {
    detail::TrainOptions opt;
    opt.cfg = &cfg;
    opt.agent = AgentKind::kDqn;
    opt.budget = tc.pretrain_budget;
    opt.seed = detail::stage_seed(cfg.seed, 1);
    opt.transfer_features = true;
    opt.sample_targets = true;
    opt.spread = tc.spread;
    opt.cache = &shared_cache;
    opt.out_dir = root / "pretrain";
    out.pretrain = detail::train_one(opt);
  }
  {
    const std::vector<detail::TopEntry> cached =
        detail::top_designs(shared_cache, cfg.mode, tuned, 1);
    if (!cached.empty()) out.best_cached_at_finetune_start = cached.front().reward;
  }
  {
    detail::TrainOptions opt;
    opt.cfg = &cfg;
    opt.agent = AgentKind::kDqn;
    opt.budget = tc.finetune_budget;
    opt.seed = detail::stage_seed(cfg.seed, 2);
    opt.transfer_features = true;
    opt.fixed_target = tuned;
    opt.load_checkpoint_path = (root / "pretrain" / "checkpoint.bin").string();
    opt.epsilon_start_override = tc.finetune_epsilon_start;
    opt.cache = &shared_cache;
    opt.out_dir = root / "finetune";
    out.finetune = detail::train_one(opt);
  }
  {
    SimulationCache fresh;
    detail::TrainOptions opt;
    opt.cfg = &cfg;
    opt.agent = AgentKind::kDqn;
    opt.budget = tc.finetune_budget;
    opt.seed = detail::stage_seed(cfg.seed, 3);
    opt.transfer_features = true;
    opt.fixed_target = tuned;
    opt.cache = &fresh;
    opt.out_dir = root / "scratch";
    out.scratch = detail::train_one(opt);
  }

  out.threshold = out.scratch.best_reward;
  out.finetune_sims_to_threshold = detail::sims_to_threshold(out.finetune.rows, out.threshold);
  out.scratch_sims_to_threshold = detail::sims_to_threshold(out.scratch.rows, out.threshold);

  nlohmann::ordered_json j;
  j["threshold"] = out.threshold;
  j["finetune_simulations_to_threshold"] =
      out.finetune_sims_to_threshold ? nlohmann::ordered_json(*out.finetune_sims_to_threshold)
                                     : nlohmann::ordered_json(nullptr);
  j["scratch_simulations_to_threshold"] =
      out.scratch_sims_to_threshold ? nlohmann::ordered_json(*out.scratch_sims_to_threshold)
                                    : nlohmann::ordered_json(nullptr);
  j["best_cached_at_finetune_start"] = out.best_cached_at_finetune_start;
  j["pretrain"] = {{"simulations", out.pretrain.simulations},
                   {"episodes", out.pretrain.episodes},
                   {"best_reward", out.pretrain.best_reward}};
  j["finetune"] = {{"simulations", out.finetune.simulations},
                   {"episodes", out.finetune.episodes},
                   {"best_reward", out.finetune.best_reward}};
  j["scratch"] = {{"simulations", out.scratch.simulations},
                  {"episodes", out.scratch.episodes},
                  {"best_reward", out.scratch.best_reward}};
  std::filesystem::create_directories(root);
  write_text_file((root / "transfer_summary.json").string(), j.dump(2) + "\n");
  return out;
}

/// Renders a stored layout file to SVG, annotated with surrogate metrics
/// normalized by the config target.
inline void export_svg_file(const std::string& layout_path, const std::string& out_path,
                            const RunConfig& cfg) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(layout_path));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("export_svg: cannot parse " + layout_path + ": " + e.what());
  }
  const Layout layout = layout_from_json(j, cfg.canvas);
  if (layout.status != LayoutStatus::kComplete)
    throw std::invalid_argument("export_svg: layout is not complete");
  const std::vector<Segment> segs = detail::full_segments(layout);
  std::optional<SvgAnnotation> note;
  if (const std::optional<Metrics> m = simulate(layout, cfg.material)) {
    SvgAnnotation a;
    a.metrics = *m;
    a.target = cfg.target;
    a.reward = reward(*m, cfg.target);
    note = a;
  }
  write_text_file(out_path, render_layout_svg(layout.canvas, segs, layout.mode, note));
}

inline std::vector<EpisodeRow> load_metrics_csv(const std::string& path) {
  const std::string text = read_text_file(path);
  std::vector<EpisodeRow> rows;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    if (header) {
      if (line != "env_step,simulations,episode_reward,best_reward_so_far")
        throw std::invalid_argument("load_metrics_csv: unexpected header in " + path);
      header = false;
      continue;
    }
    EpisodeRow r;
    std::size_t a = line.find(',');
    std::size_t b = line.find(',', a + 1);
    std::size_t c = line.find(',', b + 1);
    if (a == std::string::npos || b == std::string::npos || c == std::string::npos)
      throw std::invalid_argument("load_metrics_csv: bad row in " + path);
    try {
      r.env_step = std::stoll(line.substr(0, a));
      r.simulations = std::stoll(line.substr(a + 1, b - a - 1));
      r.episode_reward = std::stod(line.substr(b + 1, c - b - 1));
      r.best_reward_so_far = std::stod(line.substr(c + 1));
    } catch (const std::exception&) {
      throw std::invalid_argument("load_metrics_csv: bad row in " + path);
    }
    rows.push_back(r);
  }
  return rows;
}

/// Least-squares slope of cumulative simulations against env_step.
inline double sim_growth_slope(const std::vector<EpisodeRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("sim_growth_slope: empty trace");
  if (rows.size() == 1) {
    if (rows.front().env_step == 0) throw std::invalid_argument("sim_growth_slope: degenerate trace");
    return static_cast<double>(rows.front().simulations) / rows.front().env_step;
  }
  double sx = 0.0, sy = 0.0;
  for (const EpisodeRow& r : rows) {
    sx += static_cast<double>(r.env_step);
    sy += static_cast<double>(r.simulations);
  }
  const double mx = sx / rows.size();
  const double my = sy / rows.size();
  double num = 0.0, den = 0.0;
  for (const EpisodeRow& r : rows) {
    const double dx = r.env_step - mx;
    num += dx * (r.simulations - my);
    den += dx * dx;
  }
  if (den == 0.0) throw std::invalid_argument("sim_growth_slope: degenerate trace");
  return num / den;
}

/// CSV with one (label, env_step, cumulative_simulations) row per episode
/// sample, followed by one least-squares slope comment line per trace.
inline std::string sim_growth_report(
    const std::vector<std::pair<std::string, std::vector<EpisodeRow>>>& traces) {
  if (traces.empty()) throw std::invalid_argument("sim_growth_report: no traces");
  std::string s = "label,env_step,cumulative_simulations\n";
  for (const auto& [label, rows] : traces) {
    if (rows.empty()) throw std::invalid_argument("sim_growth_report: empty trace " + label);
    for (const EpisodeRow& r : rows) {
      s += label;
      s += ',';
      s += std::to_string(r.env_step);
      s += ',';
      s += std::to_string(r.simulations);
      s += '\n';
    }
  }
  for (const auto& [label, rows] : traces) {
    s += "# slope ";
    s += label;
    s += ' ';
    s += format_double(sim_growth_slope(rows));
    s += '\n';
  }
  return s;
}

struct ReplayReport {
  std::int64_t episodes = 0;
  std::int64_t steps = 0;
  std::int64_t new_simulations = 0;
  std::int64_t reward_mismatches = 0;
  std::int64_t mask_mismatches = 0;
  bool clean() const { return new_simulations == 0 && reward_mismatches == 0 && mask_mismatches == 0; }
};

/// Replays a run's episode log against its persisted cache: with every
/// design already cached, stepping through the logged actions must trigger
/// no new simulations and reproduce the logged rewards exactly. Applies to
/// fixed-target runs (the standard train command).
inline ReplayReport replay_episodes(const RunConfig& cfg, const std::string& run_dir) {
  const std::filesystem::path dir(run_dir);
  SimulationCache cache;
  cache.load((dir / "cache.jsonl").string());
  Environment env(cfg.env_options(false), &cache);

  const std::string log = read_text_file((dir / "episodes.jsonl").string());
  ReplayReport report;
  const std::int64_t sim_base = cache.simulation_count();
  std::size_t pos = 0;
  std::int64_t current_episode = -1;
  while (pos < log.size()) {
    std::size_t end = log.find('\n', pos);
    if (end == std::string::npos) end = log.size();
    const std::string line = log.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(std::string("replay_episodes: bad log line: ") + e.what());
    }
    const std::int64_t episode = row.at("episode").get<std::int64_t>();
    if (episode != current_episode) {
      env.reset();
      current_episode = episode;
      ++report.episodes;
    }
    const ActionMask live_mask = env.action_mask();
    const std::vector<bool> logged_mask = row.at("mask").get<std::vector<bool>>();
    for (int a = 0; a < kActionCount; ++a)
      if (logged_mask[static_cast<std::size_t>(a)] != live_mask[static_cast<std::size_t>(a)]) {
        ++report.mask_mismatches;
        break;
      }
    const StepResult r = env.step(row.at("action").get<int>());
    ++report.steps;
    if (r.reward != row.at("reward").get<double>() || r.done != row.at("done").get<bool>())
      ++report.reward_mismatches;
  }
  report.new_simulations = cache.simulation_count() - sim_base;
  return report;
}

}  // namespace coildraw
