#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "coildraw/harness.hpp"

using namespace coildraw;
using nlohmann::json;

namespace {

struct TempDir {
  std::string path;
  TempDir() {
    char buf[] = "/tmp/coildraw_run_XXXXXX";
    path = mkdtemp(buf);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string sub(const std::string& name) const { return path + "/" + name; }
};

RunConfig tiny_config(AgentKind agent, std::int64_t budget, std::uint64_t seed) {
  RunConfig c;
  c.agent = agent;
  c.simulation_budget = budget;
  c.seed = seed;
  c.network.conv1_channels = 4;
  c.network.conv2_channels = 8;
  c.network.hidden = 32;
  c.dqn.min_replay = 20;
  c.dqn.batch_size = 8;
  c.dqn.update_every = 4;
  c.dqn.epsilon_decay_steps = 300;
  c.ga.population = 12;
  return c;
}

int count_lines(const std::string& text) {
  int n = 0;
  for (const char ch : text)
    if (ch == '\n') ++n;
  return n;
}

Layout hand_loop(const Canvas& canvas) {
  Layout layout = initial_layout(canvas, Mode::kSymmetric);
  for (const int a : {2, 2, 2, 4}) layout = *append_segment(layout, a).layout;
  REQUIRE(layout.status == LayoutStatus::kComplete);
  return layout;
}

}  // namespace

TEST_CASE("a seeded random run exhausts exactly its simulation budget") {
  TempDir dir;
  RunConfig cfg = tiny_config(AgentKind::kRandom, 50, 11);
  cfg.output_dir = dir.sub("random");
  const StageSummary sum = run_training(cfg);

  CHECK(sum.simulations == 50);
  CHECK(sum.agent == AgentKind::kRandom);
  REQUIRE_FALSE(sum.rows.empty());
  CHECK(sum.episodes == static_cast<std::int64_t>(sum.rows.size()));

  SECTION("best_reward_so_far is the exact running maximum of episode rewards") {
    double best = std::numeric_limits<double>::lowest();
    std::int64_t prev_step = 0;
    std::int64_t prev_sims = 0;
    for (const EpisodeRow& r : sum.rows) {
      best = std::max(best, r.episode_reward);
      CHECK(r.best_reward_so_far == best);
      CHECK(r.env_step > prev_step);
      CHECK(r.simulations >= prev_sims);
      prev_step = r.env_step;
      prev_sims = r.simulations;
    }
    CHECK(sum.rows.back().simulations == 50);
    CHECK(sum.best_reward == best);
  }

  SECTION("the metrics CSV parses back to the in-memory rows") {
    const std::vector<EpisodeRow> rows = load_metrics_csv(cfg.output_dir + "/metrics.csv");
    REQUIRE(rows.size() == sum.rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i] == sum.rows[i]);
  }

  SECTION("the run directory holds the expected artifacts") {
    namespace fs = std::filesystem;
    CHECK(fs::exists(cfg.output_dir + "/config.json"));
    CHECK(fs::exists(cfg.output_dir + "/summary.json"));
    CHECK_FALSE(fs::exists(cfg.output_dir + "/checkpoint.bin"));
    CHECK_FALSE(fs::exists(cfg.output_dir + "/episodes.jsonl"));
    CHECK(count_lines(read_text_file(cfg.output_dir + "/cache.jsonl")) == 50);

    const json summary = json::parse(read_text_file(cfg.output_dir + "/summary.json"));
    CHECK(summary.at("agent") == "random");
    CHECK(summary.at("simulations") == 50);
    CHECK(summary.at("episodes") == sum.episodes);
    CHECK(summary.at("best_reward").get<double>() == sum.best_reward);

    REQUIRE(summary.at("top_k").size() >= 1);
    const std::string rank1 = cfg.output_dir + "/topk/rank_1.json";
    REQUIRE(fs::exists(rank1));
    const Layout best = layout_from_json(json::parse(read_text_file(rank1)), cfg.canvas);
    CHECK(best.status == LayoutStatus::kComplete);
    const std::string svg = read_text_file(cfg.output_dir + "/topk/rank_1.svg");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK_THAT(svg, Catch::Matchers::ContainsSubstring("<polygon"));
    CHECK_THAT(svg, Catch::Matchers::ContainsSubstring("reward="));
  }
}

TEST_CASE("reruns with the same seed and config are byte-identical") {
  TempDir dir;

  SECTION("random agent") {
    RunConfig cfg = tiny_config(AgentKind::kRandom, 30, 3);
    cfg.output_dir = dir.sub("a");
    run_training(cfg);
    cfg.output_dir = dir.sub("b");
    run_training(cfg);
    for (const char* name : {"/metrics.csv", "/cache.jsonl", "/summary.json"})
      CHECK(read_text_file(dir.sub("a") + name) == read_text_file(dir.sub("b") + name));

    RunConfig other = tiny_config(AgentKind::kRandom, 30, 4);
    other.output_dir = dir.sub("c");
    run_training(other);
    CHECK(read_text_file(dir.sub("a") + "/metrics.csv") !=
          read_text_file(dir.sub("c") + "/metrics.csv"));
  }

  SECTION("ga agent") {
    RunConfig cfg = tiny_config(AgentKind::kGa, 10, 5);
    cfg.output_dir = dir.sub("a");
    run_training(cfg);
    cfg.output_dir = dir.sub("b");
    run_training(cfg);
    for (const char* name : {"/metrics.csv", "/cache.jsonl"})
      CHECK(read_text_file(dir.sub("a") + name) == read_text_file(dir.sub("b") + name));
  }

  SECTION("dqn agent, including the checkpoint") {
    RunConfig cfg = tiny_config(AgentKind::kDqn, 6, 7);
    cfg.output_dir = dir.sub("a");
    run_training(cfg);
    cfg.output_dir = dir.sub("b");
    run_training(cfg);
    for (const char* name : {"/metrics.csv", "/cache.jsonl", "/checkpoint.bin"})
      CHECK(read_text_file(dir.sub("a") + name) == read_text_file(dir.sub("b") + name));
  }
}

TEST_CASE("ga training exhausts the budget through genome evaluations") {
  TempDir dir;
  RunConfig cfg = tiny_config(AgentKind::kGa, 12, 2);
  cfg.output_dir = dir.sub("ga");
  const StageSummary sum = run_training(cfg);
  CHECK(sum.simulations == 12);
  CHECK(sum.episodes >= 12);
  double best = std::numeric_limits<double>::lowest();
  for (const EpisodeRow& r : sum.rows) {
    best = std::max(best, r.episode_reward);
    CHECK(r.best_reward_so_far == best);
  }
}

TEST_CASE("dqn training writes a checkpoint that matches the configured architecture") {
  TempDir dir;
  RunConfig cfg = tiny_config(AgentKind::kDqn, 5, 13);
  cfg.output_dir = dir.sub("dqn");
  const StageSummary sum = run_training(cfg);
  CHECK(sum.simulations == 5);
  const QNetwork<float> net = load_checkpoint(cfg.output_dir + "/checkpoint.bin", cfg.net_arch(false));
  CHECK(net.parameters().size() == QNetwork<float>(cfg.net_arch(false)).parameters().size());
  CHECK_THROWS_AS(load_checkpoint(cfg.output_dir + "/checkpoint.bin", cfg.net_arch(true)),
                  std::runtime_error);
}

TEST_CASE("the episode log replays against the persisted cache without new simulations") {
  TempDir dir;
  RunConfig cfg = tiny_config(AgentKind::kRandom, 25, 17);
  cfg.output_dir = dir.sub("run");
  cfg.log_episodes = true;
  const StageSummary sum = run_training(cfg);
  REQUIRE(std::filesystem::exists(cfg.output_dir + "/episodes.jsonl"));

  const ReplayReport report = replay_episodes(cfg, cfg.output_dir);
  CHECK(report.clean());
  CHECK(report.episodes == sum.episodes);
  CHECK(report.steps == sum.env_steps);
  CHECK(report.new_simulations == 0);

  SECTION("a tampered log is detected") {
    std::string log = read_text_file(cfg.output_dir + "/episodes.jsonl");
    const std::size_t pos = log.find("\"done\":true");
    REQUIRE(pos != std::string::npos);
    log.replace(pos, 11, "\"done\":false");
    write_text_file(cfg.output_dir + "/episodes.jsonl", log);
    const ReplayReport tampered = replay_episodes(cfg, cfg.output_dir);
    CHECK(tampered.reward_mismatches >= 1);
    CHECK_FALSE(tampered.clean());
  }
}

TEST_CASE("transfer runs pre-train, fine-tune, and scratch stages that share the cache") {
  TempDir dir;
  RunConfig cfg = tiny_config(AgentKind::kDqn, 2000, 21);
  cfg.output_dir = dir.sub("transfer");
  TransferConfig t;
  t.spread = 0.1;
  t.pretrain_budget = 8;
  t.finetune_budget = 6;
  t.inductance_scale = 0.95;
  t.finetune_epsilon_start = 0.3;
  cfg.transfer = t;

  const TransferSummary sum = run_transfer(cfg);
  CHECK(sum.pretrain.simulations == 8);
  CHECK(sum.scratch.simulations == 6);
  CHECK(sum.finetune.simulations <= 6);
  REQUIRE(sum.scratch_sims_to_threshold.has_value());
  CHECK(*sum.scratch_sims_to_threshold <= 6);
  CHECK(sum.threshold == sum.scratch.best_reward);

  const std::string root = cfg.output_dir;
  CHECK(count_lines(read_text_file(root + "/pretrain/cache.jsonl")) == 8);
  CHECK(count_lines(read_text_file(root + "/finetune/cache.jsonl")) ==
        8 + static_cast<int>(sum.finetune.simulations));
  CHECK(count_lines(read_text_file(root + "/scratch/cache.jsonl")) == 6);

  const QNetwork<float> pre =
      load_checkpoint(root + "/pretrain/checkpoint.bin", cfg.net_arch(true));
  CHECK(pre.arch().extra_inputs == 11);

  const json j = json::parse(read_text_file(root + "/transfer_summary.json"));
  CHECK(j.at("threshold").get<double>() == sum.threshold);
  CHECK_FALSE(j.at("scratch_simulations_to_threshold").is_null());
  CHECK(j.contains("best_cached_at_finetune_start"));

  SECTION("transfer requires the transfer block and the dqn agent") {
    RunConfig bare = tiny_config(AgentKind::kDqn, 10, 1);
    bare.output_dir = dir.sub("bare");
    CHECK_THROWS_AS(run_transfer(bare), ConfigError);
    RunConfig ga_cfg = cfg;
    ga_cfg.agent = AgentKind::kGa;
    ga_cfg.output_dir = dir.sub("ga");
    CHECK_THROWS_AS(run_transfer(ga_cfg), ConfigError);
  }
}

TEST_CASE("svg export renders a stored layout deterministically") {
  TempDir dir;
  RunConfig cfg;
  const Layout loop = hand_loop(cfg.canvas);
  const std::string layout_path = dir.sub("loop.json");
  write_text_file(layout_path, layout_to_json(loop).dump(2) + "\n");

  export_svg_file(layout_path, dir.sub("a.svg"), cfg);
  export_svg_file(layout_path, dir.sub("b.svg"), cfg);
  const std::string svg = read_text_file(dir.sub("a.svg"));
  CHECK(svg == read_text_file(dir.sub("b.svg")));
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK_THAT(svg, Catch::Matchers::ContainsSubstring("<polygon"));
  CHECK_THAT(svg, Catch::Matchers::ContainsSubstring("stroke-dasharray"));
  CHECK_THAT(svg, Catch::Matchers::ContainsSubstring(">IN</text>"));
  CHECK_THAT(svg, Catch::Matchers::ContainsSubstring(">OUT</text>"));
  CHECK_THAT(svg, Catch::Matchers::ContainsSubstring("L/Lt="));
  CHECK_THAT(svg, Catch::Matchers::ContainsSubstring("reward="));

  SECTION("incomplete and malformed layout files are rejected") {
    Layout empty = initial_layout(cfg.canvas, Mode::kSymmetric);
    write_text_file(dir.sub("empty.json"), layout_to_json(empty).dump(2) + "\n");
    CHECK_THROWS_AS(export_svg_file(dir.sub("empty.json"), dir.sub("x.svg"), cfg),
                    std::invalid_argument);
    write_text_file(dir.sub("junk.json"), "not json");
    CHECK_THROWS_AS(export_svg_file(dir.sub("junk.json"), dir.sub("y.svg"), cfg),
                    std::invalid_argument);
  }
}

TEST_CASE("sim growth report computes least-squares slopes per trace") {
  const std::vector<EpisodeRow> linear = {{2, 1, 0, 0}, {4, 2, 0, 0}, {6, 3, 0, 0}};
  const std::vector<EpisodeRow> flat = {{1, 5, 0, 0}, {2, 5, 0, 0}, {3, 5, 0, 0}};
  CHECK(sim_growth_slope(linear) == Catch::Approx(0.5).margin(1e-12));
  CHECK(sim_growth_slope(flat) == Catch::Approx(0.0).margin(1e-12));
  CHECK(sim_growth_slope({{4, 2, 0, 0}}) == Catch::Approx(0.5));
  CHECK_THROWS_AS(sim_growth_slope({}), std::invalid_argument);
  CHECK_THROWS_AS(sim_growth_slope({{0, 3, 0, 0}}), std::invalid_argument);

  const std::string csv = sim_growth_report({{"random", linear}, {"ga", flat}});
  CHECK_THAT(csv, Catch::Matchers::ContainsSubstring("label,env_step,cumulative_simulations\n"));
  CHECK_THAT(csv, Catch::Matchers::ContainsSubstring("random,2,1\n"));
  CHECK_THAT(csv, Catch::Matchers::ContainsSubstring("ga,3,5\n"));
  CHECK_THAT(csv, Catch::Matchers::ContainsSubstring("# slope random " + format_double(0.5)));
  CHECK_THAT(csv, Catch::Matchers::ContainsSubstring("# slope ga " + format_double(0.0)));
  CHECK_THROWS_AS(sim_growth_report({}), std::invalid_argument);
  CHECK_THROWS_AS(sim_growth_report({{"empty", {}}}), std::invalid_argument);
}

TEST_CASE("the metrics csv loader rejects malformed files") {
  TempDir dir;
  write_text_file(dir.sub("bad_header.csv"), "step,sims\n1,2\n");
  CHECK_THROWS_AS(load_metrics_csv(dir.sub("bad_header.csv")), std::invalid_argument);
  write_text_file(dir.sub("bad_row.csv"),
                  "env_step,simulations,episode_reward,best_reward_so_far\n1,2\n");
  CHECK_THROWS_AS(load_metrics_csv(dir.sub("bad_row.csv")), std::invalid_argument);
  write_text_file(dir.sub("bad_num.csv"),
                  "env_step,simulations,episode_reward,best_reward_so_far\na,b,c,d\n");
  CHECK_THROWS_AS(load_metrics_csv(dir.sub("bad_num.csv")), std::invalid_argument);
}

TEST_CASE("run_training validates its config up front") {
  RunConfig cfg;
  cfg.simulation_budget = 0;
  CHECK_THROWS_AS(run_training(cfg), ConfigError);
}
