#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coildraw/agents.hpp"
#include "coildraw/env.hpp"
#include "coildraw/geometry.hpp"
#include "coildraw/io.hpp"
#include "coildraw/nn.hpp"
#include "coildraw/reward.hpp"
#include "coildraw/simulate_types.hpp"

namespace coildraw {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class AgentKind { kDqn, kGa, kRandom };

inline const char* agent_name(AgentKind k) {
  switch (k) {
    case AgentKind::kDqn: return "dqn";
    case AgentKind::kGa: return "ga";
    case AgentKind::kRandom: return "random";
  }
  throw std::invalid_argument("agent_name: unknown agent");
}

inline AgentKind agent_from_name(const std::string& name) {
  if (name == "dqn") return AgentKind::kDqn;
  if (name == "ga") return AgentKind::kGa;
  if (name == "random") return AgentKind::kRandom;
  throw ConfigError("unknown agent: " + name);
}

/// Pre-train/fine-tune stage description. Scales apply to the run target to
/// form the fine-tune target.
struct TransferConfig {
  double spread = 0.2;
  std::int64_t pretrain_budget = 1000;
  std::int64_t finetune_budget = 500;
  double inductance_scale = 1.0;
  double resistance_scale = 1.0;
  double srf_scale = 1.0;
  double finetune_epsilon_start = 0.2;

  void validate() const {
    if (!(spread >= 0.0) || spread >= 1.0) throw ConfigError("transfer.spread must be in [0,1)");
    if (pretrain_budget <= 0) throw ConfigError("transfer.pretrain_budget must be positive");
    if (finetune_budget <= 0) throw ConfigError("transfer.finetune_budget must be positive");
    if (!(inductance_scale > 0.0) || !(resistance_scale > 0.0) || !(srf_scale > 0.0))
      throw ConfigError("transfer scales must be positive");
    if (finetune_epsilon_start < 0.0 || finetune_epsilon_start > 1.0)
      throw ConfigError("transfer.finetune_epsilon_start must be in [0,1]");
  }
};

/// Complete description of one experiment. Every field has a default,
/// matching the reference setup; a config file overrides selectively.
struct RunConfig {
  AgentKind agent = AgentKind::kDqn;
  Mode mode = Mode::kSymmetric;
  std::uint64_t seed = 1;
  std::int64_t simulation_budget = 2000;
  std::int64_t max_env_steps = 200000;
  std::string output_dir = "runs/out";
  bool log_episodes = false;
  int top_k = 5;
  Canvas canvas;
  double raster_resolution = 2.5;
  int max_steps_per_episode = 15;
  MaterialParams material;
  TargetSpec target;
  struct Network {
    int conv1_channels = 16;
    int conv2_channels = 32;
    int kernel = 3;
    int stride = 2;
    int hidden = 128;
  } network;
  DqnConfig dqn;
  GaConfig ga;
  std::optional<TransferConfig> transfer;

  void validate() const {
    if (simulation_budget <= 0) throw ConfigError("simulation_budget must be positive");
    if (max_env_steps <= 0) throw ConfigError("max_env_steps must be positive");
    if (top_k <= 0) throw ConfigError("top_k must be positive");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
    try {
      canvas.validate();
      if (mode == Mode::kSymmetric) canvas.validate_symmetric();
      material.validate();
      target.validate();
      validate_resolution(canvas, raster_resolution);
      dqn.validate();
      ga.validate();
      net_arch(false).validate();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    if (max_steps_per_episode <= 0) throw ConfigError("max_steps_per_episode must be positive");
    if (transfer) transfer->validate();
  }

  EnvOptions env_options(bool transfer_features) const {
    EnvOptions opts;
    opts.canvas = canvas;
    opts.mode = mode;
    opts.reference = target;
    opts.material = material;
    opts.raster_resolution = raster_resolution;
    opts.max_steps = max_steps_per_episode;
    opts.transfer_features = transfer_features;
    return opts;
  }

  NetArch net_arch(bool transfer_features) const {
    NetArch arch;
    arch.image_h = detail::image_cells(canvas.height, raster_resolution);
    arch.image_w = detail::image_cells(canvas.width, raster_resolution);
    arch.in_channels = 2;
    arch.conv1_channels = network.conv1_channels;
    arch.conv2_channels = network.conv2_channels;
    arch.kernel = network.kernel;
    arch.stride = network.stride;
    arch.extra_inputs = transfer_features ? 11 : 8;
    arch.hidden = network.hidden;
    arch.outputs = kActionCount;
    return arch;
  }

  /// Fine-tune target: the run target with the transfer scales applied.
  TargetSpec finetune_target() const {
    if (!transfer) throw ConfigError("missing transfer block");
    TargetSpec t = target;
    t.inductance *= transfer->inductance_scale;
    t.resistance *= transfer->resistance_scale;
    t.srf *= transfer->srf_scale;
    return t;
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool found = false;
    for (const char* k : known)
      if (key == k) {
        found = true;
        break;
      }
    if (!found) throw ConfigError("unknown key \"" + key + "\" in " + where);
  }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("bad value for ") + where + "." + key);
  }
}

inline void read_point(const nlohmann::json& j, const char* key, Point& out, const std::string& where) {
  if (!j.contains(key)) return;
  const nlohmann::json& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError(std::string("bad value for ") + where + "." + key + " (expected [x, y])");
  out.x = v[0].get<double>();
  out.y = v[1].get<double>();
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using detail::read_field;
  using detail::read_point;
  using detail::reject_unknown_keys;
  reject_unknown_keys(j,
                      {"agent", "mode", "seed", "simulation_budget", "max_env_steps", "output_dir",
                       "log_episodes", "top_k", "canvas", "raster_resolution",
                       "max_steps_per_episode", "material", "target", "network", "dqn", "ga",
                       "transfer"},
                      "config");
  RunConfig c;
  if (j.contains("agent")) {
    if (!j.at("agent").is_string()) throw ConfigError("bad value for config.agent");
    c.agent = agent_from_name(j.at("agent").get<std::string>());
  }
  if (j.contains("mode")) {
    if (!j.at("mode").is_string()) throw ConfigError("bad value for config.mode");
    try {
      c.mode = mode_from_name(j.at("mode").get<std::string>());
    } catch (const std::exception&) {
      throw ConfigError("unknown mode: " + j.at("mode").get<std::string>());
    }
  }
  if (j.contains("seed")) {
    const nlohmann::json& s = j.at("seed");
    const bool negative =
        s.is_number_integer() && !s.is_number_unsigned() && s.get<std::int64_t>() < 0;
    if (!s.is_number_integer() || negative)
      throw ConfigError("bad value for config.seed (expected a non-negative integer)");
    c.seed = s.get<std::uint64_t>();
  }
  read_field(j, "simulation_budget", c.simulation_budget, "config");
  read_field(j, "max_env_steps", c.max_env_steps, "config");
  read_field(j, "output_dir", c.output_dir, "config");
  read_field(j, "log_episodes", c.log_episodes, "config");
  read_field(j, "top_k", c.top_k, "config");
  read_field(j, "raster_resolution", c.raster_resolution, "config");
  read_field(j, "max_steps_per_episode", c.max_steps_per_episode, "config");

  if (j.contains("canvas")) {
    const nlohmann::json& v = j.at("canvas");
    reject_unknown_keys(v,
                        {"width", "height", "input_port", "output_port", "grid_pitch",
                         "wire_width", "wire_thickness"},
                        "config.canvas");
    read_field(v, "width", c.canvas.width, "config.canvas");
    read_field(v, "height", c.canvas.height, "config.canvas");
    read_point(v, "input_port", c.canvas.input_port, "config.canvas");
    read_point(v, "output_port", c.canvas.output_port, "config.canvas");
    read_field(v, "grid_pitch", c.canvas.grid_pitch, "config.canvas");
    read_field(v, "wire_width", c.canvas.wire_width, "config.canvas");
    read_field(v, "wire_thickness", c.canvas.wire_thickness, "config.canvas");
  }
  if (j.contains("material")) {
    const nlohmann::json& v = j.at("material");
    reject_unknown_keys(v, {"sheet_resistance", "oxide_cap_density", "operating_frequency", "quad_points"},
                        "config.material");
    read_field(v, "sheet_resistance", c.material.sheet_resistance, "config.material");
    read_field(v, "oxide_cap_density", c.material.oxide_cap_density, "config.material");
    read_field(v, "operating_frequency", c.material.operating_frequency, "config.material");
    read_field(v, "quad_points", c.material.quad_points, "config.material");
  }
  if (j.contains("target")) {
    const nlohmann::json& v = j.at("target");
    reject_unknown_keys(v, {"inductance", "resistance", "srf", "area_max", "weights", "invalid_penalty"},
                        "config.target");
    read_field(v, "inductance", c.target.inductance, "config.target");
    read_field(v, "resistance", c.target.resistance, "config.target");
    read_field(v, "srf", c.target.srf, "config.target");
    read_field(v, "area_max", c.target.area_max, "config.target");
    if (v.contains("weights")) {
      const nlohmann::json& w = v.at("weights");
      if (!w.is_array() || w.size() != 4) throw ConfigError("config.target.weights must have 4 entries");
      for (int i = 0; i < 4; ++i) {
        if (!w[static_cast<std::size_t>(i)].is_number())
          throw ConfigError("config.target.weights must be numeric");
        c.target.weights[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i)].get<double>();
      }
    }
    read_field(v, "invalid_penalty", c.target.invalid_penalty, "config.target");
  }
  if (j.contains("network")) {
    const nlohmann::json& v = j.at("network");
    reject_unknown_keys(v, {"conv1_channels", "conv2_channels", "kernel", "stride", "hidden"},
                        "config.network");
    read_field(v, "conv1_channels", c.network.conv1_channels, "config.network");
    read_field(v, "conv2_channels", c.network.conv2_channels, "config.network");
    read_field(v, "kernel", c.network.kernel, "config.network");
    read_field(v, "stride", c.network.stride, "config.network");
    read_field(v, "hidden", c.network.hidden, "config.network");
  }
  if (j.contains("dqn")) {
    const nlohmann::json& v = j.at("dqn");
    reject_unknown_keys(v,
                        {"replay_capacity", "min_replay", "batch_size", "learning_rate",
                         "epsilon_start", "epsilon_end", "epsilon_decay_steps",
                         "target_sync_updates", "update_every", "huber_delta", "gamma"},
                        "config.dqn");
    read_field(v, "replay_capacity", c.dqn.replay_capacity, "config.dqn");
    read_field(v, "min_replay", c.dqn.min_replay, "config.dqn");
    read_field(v, "batch_size", c.dqn.batch_size, "config.dqn");
    read_field(v, "learning_rate", c.dqn.learning_rate, "config.dqn");
    read_field(v, "epsilon_start", c.dqn.epsilon_start, "config.dqn");
    read_field(v, "epsilon_end", c.dqn.epsilon_end, "config.dqn");
    read_field(v, "epsilon_decay_steps", c.dqn.epsilon_decay_steps, "config.dqn");
    read_field(v, "target_sync_updates", c.dqn.target_sync_updates, "config.dqn");
    read_field(v, "update_every", c.dqn.update_every, "config.dqn");
    read_field(v, "huber_delta", c.dqn.huber_delta, "config.dqn");
    read_field(v, "gamma", c.dqn.gamma, "config.dqn");
  }
  if (j.contains("ga")) {
    const nlohmann::json& v = j.at("ga");
    reject_unknown_keys(v,
                        {"population", "elitism", "tournament", "crossover_rate", "mutation_rate",
                         "genome_length"},
                        "config.ga");
    read_field(v, "population", c.ga.population, "config.ga");
    read_field(v, "elitism", c.ga.elitism, "config.ga");
    read_field(v, "tournament", c.ga.tournament, "config.ga");
    read_field(v, "crossover_rate", c.ga.crossover_rate, "config.ga");
    read_field(v, "mutation_rate", c.ga.mutation_rate, "config.ga");
    read_field(v, "genome_length", c.ga.genome_length, "config.ga");
  }
  if (j.contains("transfer")) {
    const nlohmann::json& v = j.at("transfer");
    reject_unknown_keys(v,
                        {"spread", "pretrain_budget", "finetune_budget", "inductance_scale",
                         "resistance_scale", "srf_scale", "finetune_epsilon_start"},
                        "config.transfer");
    TransferConfig t;
    read_field(v, "spread", t.spread, "config.transfer");
    read_field(v, "pretrain_budget", t.pretrain_budget, "config.transfer");
    read_field(v, "finetune_budget", t.finetune_budget, "config.transfer");
    read_field(v, "inductance_scale", t.inductance_scale, "config.transfer");
    read_field(v, "resistance_scale", t.resistance_scale, "config.transfer");
    read_field(v, "srf_scale", t.srf_scale, "config.transfer");
    read_field(v, "finetune_epsilon_start", t.finetune_epsilon_start, "config.transfer");
    c.transfer = t;
  }
  c.validate();
  return c;
}

inline nlohmann::ordered_json run_config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["agent"] = agent_name(c.agent);
  j["mode"] = mode_name(c.mode);
  j["seed"] = c.seed;
  j["simulation_budget"] = c.simulation_budget;
  j["max_env_steps"] = c.max_env_steps;
  j["output_dir"] = c.output_dir;
  j["log_episodes"] = c.log_episodes;
  j["top_k"] = c.top_k;
  j["canvas"] = {{"width", c.canvas.width},
                 {"height", c.canvas.height},
                 {"input_port", {c.canvas.input_port.x, c.canvas.input_port.y}},
                 {"output_port", {c.canvas.output_port.x, c.canvas.output_port.y}},
                 {"grid_pitch", c.canvas.grid_pitch},
                 {"wire_width", c.canvas.wire_width},
                 {"wire_thickness", c.canvas.wire_thickness}};
  j["raster_resolution"] = c.raster_resolution;
  j["max_steps_per_episode"] = c.max_steps_per_episode;
  j["material"] = {{"sheet_resistance", c.material.sheet_resistance},
                   {"oxide_cap_density", c.material.oxide_cap_density},
                   {"operating_frequency", c.material.operating_frequency},
                   {"quad_points", c.material.quad_points}};
  j["target"] = {{"inductance", c.target.inductance},
                 {"resistance", c.target.resistance},
                 {"srf", c.target.srf},
                 {"area_max", c.target.area_max},
                 {"weights", c.target.weights},
                 {"invalid_penalty", c.target.invalid_penalty}};
  j["network"] = {{"conv1_channels", c.network.conv1_channels},
                  {"conv2_channels", c.network.conv2_channels},
                  {"kernel", c.network.kernel},
                  {"stride", c.network.stride},
                  {"hidden", c.network.hidden}};
  j["dqn"] = {{"replay_capacity", c.dqn.replay_capacity},
              {"min_replay", c.dqn.min_replay},
              {"batch_size", c.dqn.batch_size},
              {"learning_rate", c.dqn.learning_rate},
              {"epsilon_start", c.dqn.epsilon_start},
              {"epsilon_end", c.dqn.epsilon_end},
              {"epsilon_decay_steps", c.dqn.epsilon_decay_steps},
              {"target_sync_updates", c.dqn.target_sync_updates},
              {"update_every", c.dqn.update_every},
              {"huber_delta", c.dqn.huber_delta},
              {"gamma", c.dqn.gamma}};
  j["ga"] = {{"population", c.ga.population},
             {"elitism", c.ga.elitism},
             {"tournament", c.ga.tournament},
             {"crossover_rate", c.ga.crossover_rate},
             {"mutation_rate", c.ga.mutation_rate},
             {"genome_length", c.ga.genome_length}};
  if (c.transfer) {
    j["transfer"] = {{"spread", c.transfer->spread},
                     {"pretrain_budget", c.transfer->pretrain_budget},
                     {"finetune_budget", c.transfer->finetune_budget},
                     {"inductance_scale", c.transfer->inductance_scale},
                     {"resistance_scale", c.transfer->resistance_scale},
                     {"srf_scale", c.transfer->srf_scale},
                     {"finetune_epsilon_start", c.transfer->finetune_epsilon_start}};
  }
  return j;
}

inline RunConfig load_run_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const ConfigError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  } catch (const std::exception& e) {
    throw ConfigError(std::string(e.what()));
  }
  return run_config_from_json(j);
}

}  // namespace coildraw
