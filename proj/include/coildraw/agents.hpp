#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "coildraw/env.hpp"
#include "coildraw/nn.hpp"
#include "coildraw/reward.hpp"
#include "coildraw/rng.hpp"

namespace coildraw {

/// Observation in compact form for replay storage: the occupancy grid as a
/// bitset plus the head cell, heading index, and optional target features.
struct PackedObservation {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;
  std::uint16_t head_x = 0;
  std::uint16_t head_y = 0;
  std::uint8_t heading = 0;
  bool has_target = false;
  std::array<float, 3> target{};

  bool operator==(const PackedObservation&) const = default;

  static PackedObservation pack(const Observation& obs) {
    PackedObservation p;
    p.width = obs.occupancy.width;
    p.height = obs.occupancy.height;
    p.bits.assign((static_cast<std::size_t>(p.width) * p.height + 7) / 8, 0);
    bool head_found = false;
    for (int iy = 0; iy < p.height; ++iy) {
      for (int ix = 0; ix < p.width; ++ix) {
        const std::size_t idx = static_cast<std::size_t>(iy) * p.width + ix;
        if (obs.occupancy.at(ix, iy)) p.bits[idx >> 3] |= static_cast<std::uint8_t>(1u << (idx & 7));
        if (obs.head_channel.at(ix, iy)) {
          if (head_found) throw std::invalid_argument("PackedObservation: multiple head pixels");
          p.head_x = static_cast<std::uint16_t>(ix);
          p.head_y = static_cast<std::uint16_t>(iy);
          head_found = true;
        }
      }
    }
    if (!head_found) throw std::invalid_argument("PackedObservation: no head pixel");
    int heading = -1;
    for (int h = 0; h < 8; ++h) {
      if (obs.heading_onehot[h] == 1.0) {
        if (heading >= 0) throw std::invalid_argument("PackedObservation: heading one-hot malformed");
        heading = h;
      } else if (obs.heading_onehot[h] != 0.0) {
        throw std::invalid_argument("PackedObservation: heading one-hot malformed");
      }
    }
    if (heading < 0) throw std::invalid_argument("PackedObservation: heading one-hot malformed");
    p.heading = static_cast<std::uint8_t>(heading);
    if (obs.target_features) {
      p.has_target = true;
      for (int i = 0; i < 3; ++i) p.target[i] = static_cast<float>((*obs.target_features)[i]);
    }
    return p;
  }

  bool occupied(int ix, int iy) const {
    const std::size_t idx = static_cast<std::size_t>(iy) * width + ix;
    return (bits[idx >> 3] >> (idx & 7)) & 1u;
  }
};

/// Writes the packed observation into network buffers: channel 0 occupancy,
/// channel 1 head position, extras = heading one-hot (8) plus the three
/// target features when the architecture includes them.
template <typename T>
inline void fill_network_input(const PackedObservation& p, const NetArch& arch,
                               std::vector<T>& image, std::vector<T>& extras) {
  if (arch.in_channels != 2 || arch.image_h != p.height || arch.image_w != p.width)
    throw std::invalid_argument("fill_network_input: observation does not match architecture");
  if (arch.extra_inputs != 8 && arch.extra_inputs != 11)
    throw std::invalid_argument("fill_network_input: extra_inputs must be 8 or 11");
  if (arch.extra_inputs == 11 && !p.has_target)
    throw std::invalid_argument("fill_network_input: architecture expects target features");
  const std::size_t plane = static_cast<std::size_t>(p.width) * p.height;
  image.assign(2 * plane, T(0));
  for (std::size_t idx = 0; idx < plane; ++idx)
    if ((p.bits[idx >> 3] >> (idx & 7)) & 1u) image[idx] = T(1);
  image[plane + static_cast<std::size_t>(p.head_y) * p.width + p.head_x] = T(1);
  extras.assign(static_cast<std::size_t>(arch.extra_inputs), T(0));
  extras[p.heading] = T(1);
  if (arch.extra_inputs == 11)
    for (int i = 0; i < 3; ++i) extras[8 + i] = static_cast<T>(p.target[i]);
}

struct Transition {
  PackedObservation obs;
  int action = 0;
  double reward = 0.0;
  PackedObservation next_obs;
  bool done = false;
  ActionMask next_mask{};
};

/// Fixed-capacity ring buffer; once full, each push evicts the oldest entry.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    store_.reserve(capacity);
  }

  void push(Transition t) {
    if (store_.size() < capacity_) {
      store_.push_back(std::move(t));
    } else {
      store_[next_] = std::move(t);
      next_ = (next_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return store_.size(); }
  std::size_t capacity() const { return capacity_; }

  /// Entry `i` in insertion order: 0 is the oldest retained transition.
  const Transition& at(std::size_t i) const {
    if (i >= store_.size()) throw std::out_of_range("ReplayBuffer::at");
    if (store_.size() < capacity_) return store_[i];
    return store_[(next_ + i) % capacity_];
  }

  /// Uniform sample of `batch` distinct entries (insertion-order indices).
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const {
    if (batch > store_.size()) throw std::invalid_argument("ReplayBuffer: batch larger than buffer");
    std::vector<std::size_t> idx(store_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < batch; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(idx.size() - 1 - i)));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(batch);
    return idx;
  }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> store_;
};

/// Uniform choice among legal actions.
inline int random_policy(const ActionMask& mask, Rng& rng) {
  std::array<int, kActionCount> legal{};
  int n = 0;
  for (int a = 0; a < kActionCount; ++a)
    if (mask[a]) legal[n++] = a;
  if (n == 0) throw std::logic_error("random_policy: no legal action");
  return legal[rng.uniform_int(0, n - 1)];
}

/// Epsilon-greedy over legal actions. With probability `epsilon` a uniform
/// legal action is drawn; otherwise the legal action with the highest value,
/// ties broken by the lowest index. Illegal entries in `q` never influence
/// the choice.
template <typename T>
inline int select_action(const std::vector<T>& q, const ActionMask& mask, double epsilon, Rng& rng) {
  if (q.size() != static_cast<std::size_t>(kActionCount))
    throw std::invalid_argument("select_action: expected one value per action");
  if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("select_action: epsilon out of range");
  if (epsilon > 0.0 && rng.uniform01() < epsilon) return random_policy(mask, rng);
  int best = -1;
  for (int a = 0; a < kActionCount; ++a) {
    if (!mask[a]) continue;
    if (best < 0 || q[a] > q[best]) best = a;
  }
  if (best < 0) throw std::logic_error("select_action: no legal action");
  return best;
}

/// One-step bootstrap target with masked maximisation over the next state.
template <typename T>
inline double td_bootstrap(double reward, bool done, const std::vector<T>& next_q,
                           const ActionMask& next_mask, double gamma = 1.0) {
  if (done) return reward;
  if (next_q.size() != static_cast<std::size_t>(kActionCount))
    throw std::invalid_argument("td_bootstrap: expected one value per action");
  bool any = false;
  double best = 0.0;
  for (int a = 0; a < kActionCount; ++a) {
    if (!next_mask[a]) continue;
    const double v = static_cast<double>(next_q[a]);
    if (!any || v > best) best = v;
    any = true;
  }
  if (!any) throw std::logic_error("td_bootstrap: non-terminal state with no legal action");
  return reward + gamma * best;
}

inline double huber(double e, double delta) {
  const double a = std::abs(e);
  return a <= delta ? 0.5 * e * e : delta * (a - 0.5 * delta);
}

inline double huber_grad(double e, double delta) {
  if (e > delta) return delta;
  if (e < -delta) return -delta;
  return e;
}

struct DqnConfig {
  int replay_capacity = 10000;
  int min_replay = 500;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  int epsilon_decay_steps = 5000;
  int target_sync_updates = 500;
  int update_every = 4;
  double huber_delta = 1.0;
  double gamma = 1.0;

  void validate() const {
    if (replay_capacity <= 0) throw std::invalid_argument("DqnConfig: replay_capacity must be positive");
    if (min_replay <= 0 || min_replay > replay_capacity)
      throw std::invalid_argument("DqnConfig: min_replay must be in [1, replay_capacity]");
    if (batch_size <= 0 || batch_size > min_replay)
      throw std::invalid_argument("DqnConfig: batch_size must be in [1, min_replay]");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("DqnConfig: learning_rate must be positive");
    if (epsilon_start < 0.0 || epsilon_start > 1.0 || epsilon_end < 0.0 || epsilon_end > 1.0)
      throw std::invalid_argument("DqnConfig: epsilon bounds must be in [0,1]");
    if (epsilon_decay_steps <= 0) throw std::invalid_argument("DqnConfig: epsilon_decay_steps must be positive");
    if (target_sync_updates <= 0) throw std::invalid_argument("DqnConfig: target_sync_updates must be positive");
    if (update_every <= 0) throw std::invalid_argument("DqnConfig: update_every must be positive");
    if (!(huber_delta > 0.0)) throw std::invalid_argument("DqnConfig: huber_delta must be positive");
    if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("DqnConfig: gamma must be in [0,1]");
  }
};

inline double dqn_epsilon(const DqnConfig& cfg, std::int64_t env_step) {
  const double frac = std::min(1.0, static_cast<double>(env_step) / cfg.epsilon_decay_steps);
  return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac;
}

/// Q-learning agent: online network, periodically synced target network,
/// replay buffer, and Adam. Exploration and batch sampling draw from streams
/// derived from the construction seed, so a run is a pure function of
/// (seed, configuration).
class DqnAgent {
 public:
  DqnAgent(const NetArch& arch, const DqnConfig& cfg, std::uint64_t seed)
      : cfg_(validated(cfg)),
        act_rng_(Rng::stream(seed, 1)),
        sample_rng_(Rng::stream(seed, 2)),
        net_(init_network(arch, seed)),
        target_(net_),
        opt_(net_.parameter_count(), cfg.learning_rate),
        replay_(static_cast<std::size_t>(cfg.replay_capacity)),
        ws_(net_.make_activations()),
        target_ws_(net_.make_activations()),
        grad_(net_.parameter_count(), 0.0f) {}

  const DqnConfig& config() const { return cfg_; }
  const QNetwork<float>& network() const { return net_; }
  QNetwork<float>& network() { return net_; }
  const QNetwork<float>& target_network() const { return target_; }
  ReplayBuffer& replay() { return replay_; }
  std::int64_t updates() const { return updates_; }
  double last_loss() const { return last_loss_; }

  /// Q-values of the online network for one observation.
  std::vector<float> q_values(const PackedObservation& obs) {
    fill_network_input(obs, net_.arch(), ws_.input, extras_);
    net_.forward(extras_, ws_);
    return ws_.out;
  }

  /// Epsilon-greedy action; `env_step` drives the exploration schedule.
  int act(const PackedObservation& obs, const ActionMask& mask, std::int64_t env_step) {
    return select_action(q_values(obs), mask, dqn_epsilon(cfg_, env_step), act_rng_);
  }

  void record(Transition t) { replay_.push(std::move(t)); }

  /// Runs a TD update when the replay is warm and `env_step` falls on the
  /// update cadence. Returns whether an update happened.
  bool maybe_update(std::int64_t env_step) {
    if (replay_.size() < static_cast<std::size_t>(cfg_.min_replay)) return false;
    if (env_step % cfg_.update_every != 0) return false;
    td_update();
    return true;
  }

  /// One gradient step on a uniformly sampled batch; returns the batch loss.
  double td_update() {
    const std::vector<std::size_t> batch =
        replay_.sample_indices(static_cast<std::size_t>(cfg_.batch_size), sample_rng_);
    std::fill(grad_.begin(), grad_.end(), 0.0f);
    double loss = 0.0;
    for (const std::size_t i : batch) {
      const Transition& t = replay_.at(i);
      double y = t.reward;
      if (!t.done) {
        fill_network_input(t.next_obs, net_.arch(), target_ws_.input, extras_);
        target_.forward(extras_, target_ws_);
        y = td_bootstrap(t.reward, false, target_ws_.out, t.next_mask, cfg_.gamma);
      }
      fill_network_input(t.obs, net_.arch(), ws_.input, extras_);
      net_.forward(extras_, ws_);
      const double e = static_cast<double>(ws_.out[t.action]) - y;
      loss += huber(e, cfg_.huber_delta);
      d_out_.assign(static_cast<std::size_t>(net_.arch().outputs), 0.0f);
      d_out_[t.action] = static_cast<float>(huber_grad(e, cfg_.huber_delta) / cfg_.batch_size);
      net_.backward(ws_, d_out_, grad_);
    }
    opt_.step(net_.parameters(), grad_);
    ++updates_;
    if (updates_ % cfg_.target_sync_updates == 0) target_.parameters() = net_.parameters();
    last_loss_ = loss / cfg_.batch_size;
    return last_loss_;
  }

  void save(const std::string& path) const { save_checkpoint(net_, path); }

  /// Replaces both networks with a stored checkpoint of the same shape.
  void load(const std::string& path) {
    net_ = load_checkpoint(path, net_.arch());
    target_ = net_;
  }

 private:
  static DqnConfig validated(DqnConfig cfg) {
    cfg.validate();
    return cfg;
  }

  static QNetwork<float> init_network(const NetArch& arch, std::uint64_t seed) {
    Rng init = Rng::stream(seed, 0);
    return QNetwork<float>(arch, init);
  }

  DqnConfig cfg_;
  Rng act_rng_;
  Rng sample_rng_;
  QNetwork<float> net_;
  QNetwork<float> target_;
  Adam<float> opt_;
  ReplayBuffer replay_;
  QNetwork<float>::Activations ws_;
  QNetwork<float>::Activations target_ws_;
  std::vector<float> grad_;
  std::vector<float> extras_;
  std::vector<float> d_out_;
  std::int64_t updates_ = 0;
  double last_loss_ = 0.0;
};

using Genome = std::vector<int>;

struct GaConfig {
  int population = 50;
  int elitism = 2;
  int tournament = 3;
  double crossover_rate = 0.7;
  double mutation_rate = 0.1;
  int genome_length = 15;

  void validate() const {
    if (population <= 0) throw std::invalid_argument("GaConfig: population must be positive");
    if (elitism < 0 || elitism > population)
      throw std::invalid_argument("GaConfig: elitism must be in [0, population]");
    if (tournament <= 0) throw std::invalid_argument("GaConfig: tournament must be positive");
    if (crossover_rate < 0.0 || crossover_rate > 1.0)
      throw std::invalid_argument("GaConfig: crossover_rate must be in [0,1]");
    if (mutation_rate < 0.0 || mutation_rate > 1.0)
      throw std::invalid_argument("GaConfig: mutation_rate must be in [0,1]");
    if (genome_length < 2) throw std::invalid_argument("GaConfig: genome_length must be at least 2");
  }
};

inline Genome random_genome(int length, Rng& rng) {
  Genome g(static_cast<std::size_t>(length));
  for (int& v : g) v = rng.uniform_int(0, kActionCount - 1);
  return g;
}

struct GaDecodeOutcome {
  double reward = 0.0;
  bool complete = false;
  int steps = 0;
  Layout layout;
};

/// Plays a genome through the environment. Genes past the first terminal
/// step are ignored. A masked gene, or running out of genes before the
/// layout terminates, makes the design invalid and scores the penalty; the
/// offending gene is not executed.
inline GaDecodeOutcome ga_decode(
    Environment& env, const Genome& genome,
    const std::function<void(int, const ActionMask&, const StepResult&)>& on_step = {}) {
  env.reset();
  GaDecodeOutcome out;
  for (const int gene : genome) {
    if (gene < 0 || gene >= kActionCount)
      throw std::invalid_argument("ga_decode: gene out of range");
    const ActionMask mask = env.action_mask();
    if (!mask[gene]) {
      out.reward = invalid_penalty(env.episode_target());
      out.layout = env.layout();
      return out;
    }
    const StepResult r = env.step(gene);
    ++out.steps;
    if (on_step) on_step(gene, mask, r);
    if (r.done) {
      out.reward = r.reward;
      out.complete = env.layout().status == LayoutStatus::kComplete;
      out.layout = env.layout();
      return out;
    }
  }
  out.reward = invalid_penalty(env.episode_target());
  out.layout = env.layout();
  return out;
}

namespace detail {

inline std::size_t tournament_pick(const std::vector<double>& fitness, int rounds, Rng& rng) {
  std::size_t best = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(fitness.size() - 1)));
  for (int r = 1; r < rounds; ++r) {
    const std::size_t c = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(fitness.size() - 1)));
    if (fitness[c] > fitness[best] || (fitness[c] == fitness[best] && c < best)) best = c;
  }
  return best;
}

}  // namespace detail

/// Produces the next generation: the best `elitism` genomes survive
/// unchanged, the rest come from tournament selection, single-point
/// crossover, and per-gene mutation.
inline std::vector<Genome> ga_evolve(const std::vector<Genome>& population,
                                     const std::vector<double>& fitness,
                                     const GaConfig& cfg, Rng& rng) {
  cfg.validate();
  if (population.empty() || population.size() != fitness.size())
    throw std::invalid_argument("ga_evolve: population and fitness sizes must match and be non-empty");
  const int length = static_cast<int>(population.front().size());
  for (const Genome& g : population)
    if (static_cast<int>(g.size()) != length)
      throw std::invalid_argument("ga_evolve: genomes must share one length");

  std::vector<std::size_t> order(population.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&fitness](std::size_t a, std::size_t b) {
    if (fitness[a] != fitness[b]) return fitness[a] > fitness[b];
    return a < b;
  });

  std::vector<Genome> next;
  next.reserve(static_cast<std::size_t>(cfg.population));
  for (int e = 0; e < cfg.elitism && e < static_cast<int>(population.size()); ++e)
    next.push_back(population[order[static_cast<std::size_t>(e)]]);

  while (next.size() < static_cast<std::size_t>(cfg.population)) {
    const Genome& pa = population[detail::tournament_pick(fitness, cfg.tournament, rng)];
    const Genome& pb = population[detail::tournament_pick(fitness, cfg.tournament, rng)];
    Genome child = pa;
    if (rng.uniform01() < cfg.crossover_rate) {
      const int point = rng.uniform_int(1, length - 1);
      for (int i = point; i < length; ++i) child[static_cast<std::size_t>(i)] = pb[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < length; ++i)
      if (rng.uniform01() < cfg.mutation_rate)
        child[static_cast<std::size_t>(i)] = rng.uniform_int(0, kActionCount - 1);
    next.push_back(std::move(child));
  }
  return next;
}

}  // namespace coildraw
