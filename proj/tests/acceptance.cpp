// Acceptance gate: ten criteria, one PASS/FAIL line each, nonzero exit when
// any fails. Training comparisons are sized for a single desktop core; run
// directories land in a temp folder and are removed on exit.
//
// Usage: acceptance [criterion...]   (default: all ten)

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "coildraw/harness.hpp"
#include "oracles.hpp"

using namespace coildraw;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const std::vector<std::uint64_t> kSeeds = {1, 2, 3, 4, 5};

std::filesystem::path g_root;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof buf, pattern, args);
  va_end(args);
  return buf;
}

Metrics loop_metrics() {
  Layout loop = initial_layout(Canvas{}, Mode::kSymmetric);
  for (const int a : {2, 2, 2, 4}) loop = *append_segment(loop, a).layout;
  return *simulate(loop, MaterialParams{});
}

/// Targets tuned to the surrogate: the metrics of the hand-drawn
/// rectangular loop [2, 2, 2, 4].
TargetSpec loop_target() {
  const Metrics m = loop_metrics();
  TargetSpec t;
  t.inductance = m.inductance;
  t.resistance = m.resistance;
  t.srf = m.srf;
  t.area_max = m.area;
  return t;
}

/// Shared acceptance training setup: a half-size network and update cadence
/// chosen so the multi-seed comparisons finish in minutes on one core.
RunConfig acc_config(AgentKind agent, Mode mode, std::uint64_t seed, std::int64_t budget,
                     const TargetSpec& target, std::int64_t step_cap, std::int64_t eps_decay,
                     int update_every = 8) {
  RunConfig c;
  c.agent = agent;
  c.mode = mode;
  c.seed = seed;
  c.simulation_budget = budget;
  c.target = target;
  c.max_env_steps = step_cap;
  c.top_k = 3;
  c.network.conv1_channels = 8;
  c.network.conv2_channels = 16;
  c.network.hidden = 64;
  c.dqn.min_replay = 500;
  c.dqn.batch_size = 32;
  c.dqn.update_every = update_every;
  c.dqn.epsilon_decay_steps = eps_decay;
  return c;
}

std::string run_dir(const std::string& name) { return (g_root / name).string(); }

bool approx(double got, double want, double tol = 1e-9) { return std::abs(got - want) <= tol; }

// 1. Reward examples, cost-branch examples, and breakpoint continuity.
bool criterion1(std::string& detail) {
  const TargetSpec t;
  const auto m = [&](double l, double r, double srf, double area) {
    Metrics x;
    x.inductance = t.inductance * l;
    x.resistance = t.resistance * r;
    x.srf = t.srf * srf;
    x.area = t.area_max * area;
    x.q_factor = 1.0;
    return x;
  };
  bool ok = true;
  ok &= approx(reward(m(1.0, 1.0, 1.0, 1.0), t), 1.0);
  ok &= approx(reward(m(1.0, 0.9, 1.1, 0.8), t), 1.125);
  ok &= approx(reward(m(1.1, 1.2, 0.7, 1.0), t), 0.7125);

  const auto branch = [&](ErrorTerms e, double cl, double cr, double csrf, double carea) {
    const Costs c = costs(e);
    return approx(c.c_l, cl) && approx(c.c_r, cr) && approx(c.c_srf, csrf) &&
           approx(c.c_area, carea);
  };
  ok &= branch({0.0, -0.1, -0.1, -0.2}, 0.0, -0.1, -0.2, -0.2);
  ok &= branch({0.1, 0.2, 0.3, -0.2}, 0.15, 0.4, 0.6, 0.0);
  ok &= branch({0.2, 3.0, 4.0, -0.5}, 0.35, 1.0, 1.0, 0.0);

  const double eps = 1e-9;
  const auto continuous = [&](const std::function<double(double)>& f, double at) {
    return std::abs(f(at + eps) - f(at - eps)) <= 1e-8;
  };
  ok &= continuous([](double e) { return costs({e, 0, 0, 0}).c_l; }, 0.05);
  for (const double e_l : {0.0, 0.2}) {
    for (const double b : {0.0, 0.5})
      ok &= continuous([&](double e) { return costs({e_l, e, 0, 0}).c_r; }, b);
    for (const double b : {-0.5, 0.0, 0.5})
      ok &= continuous([&](double e) { return costs({e_l, 0, e, 0}).c_srf; }, b);
    ok &= continuous([&](double e) { return costs({e_l, 0, 0, e}).c_area; }, 0.0);
  }
  detail = "examples and breakpoints";
  return ok;
}

// 2. Exhaustive action sequences to depth 5: mask agrees with append, and no
// emitted layout overlaps non-consecutive segments (clipping-area oracle).
bool criterion2(std::string& detail) {
  bool ok = true;
  long states = 0;
  const std::function<void(const Layout&, int)> visit = [&](const Layout& l, int depth) {
    if (l.status != LayoutStatus::kInProgress) return;
    const ActionMask mask = legal_actions(l);
    for (int a = 0; a < kActionCount; ++a) {
      const AppendResult r = append_segment(l, a);
      if (mask[static_cast<std::size_t>(a)] != r.ok()) ok = false;
      if (!r.ok()) continue;
      ++states;
      const Layout& nl = *r.layout;
      const Quad last = inflate(nl.segments.back());
      for (std::size_t i = 0; i + 2 < nl.segments.size(); ++i) {
        if (oracles::quad_intersection_area(last, inflate(nl.segments[i])) > 1e-6) ok = false;
      }
      for (const Point& p : last.p) {
        if (p.x < -1e-9 || p.x > nl.canvas.width + 1e-9 || p.y < -1e-9 ||
            p.y > nl.canvas.height + 1e-9)
          ok = false;
      }
      if (depth < 5) visit(nl, depth + 1);
    }
  };
  for (const Mode mode : {Mode::kSymmetric, Mode::kNonSymmetric})
    visit(initial_layout(Canvas{}, mode), 1);
  detail = fmt("%ld emitted layouts checked", states);
  return ok;
}

// 3. Mutual-inductance oracles and quadrature convergence.
bool criterion3(std::string& detail) {
  const auto seg = [](double x0, double y0, double x1, double y1) {
    return Segment{{x0, y0}, {x1, y1}, 5.0, 0};
  };
  MaterialParams p16;
  bool ok = true;
  double worst = 0.0;
  for (const double ratio : {0.5, 1.0, 2.0}) {
    const double d = 10.0 * ratio;
    const double numeric = mutual_inductance(seg(0, 0, 0, 10), seg(d, 0, d, 10), p16);
    const double exact = oracles::mutual_parallel_filaments(10e-6, d * 1e-6);
    const double rel = std::abs(numeric - exact) / std::abs(exact);
    worst = std::max(worst, rel);
    if (rel >= 0.02) ok = false;
  }
  if (std::abs(mutual_inductance(seg(0, 0, 0, 10), seg(10, 0, 20, 0), p16)) >= 1e-18) ok = false;
  if (std::abs(mutual_inductance(seg(0, 0, 10, 10), seg(20, 10, 30, 0), p16)) >= 1e-18) ok = false;

  Layout loop = initial_layout(Canvas{}, Mode::kSymmetric);
  for (const int a : {2, 2, 2, 4}) loop = *append_segment(loop, a).layout;
  MaterialParams p32;
  p32.quad_points = 32;
  const Metrics m16 = *simulate(loop, p16);
  const Metrics m32 = *simulate(loop, p32);
  const double dl = std::abs(m16.inductance - m32.inductance) / m32.inductance;
  const double dsrf = std::abs(m16.srf - m32.srf) / m32.srf;
  if (dl >= 0.01 || dsrf >= 0.01) ok = false;
  detail = fmt("parallel rel err %.4f, 16->32 dL %.2e", worst, dl);
  return ok;
}

// 4. Analytic gradients against central finite differences.
bool criterion4(std::string& detail) {
  NetArch arch;
  arch.image_h = 12;
  arch.image_w = 12;
  arch.conv1_channels = 4;
  arch.conv2_channels = 6;
  arch.extra_inputs = 8;
  arch.hidden = 16;
  Rng init(101);
  QNetwork<double> net(arch, init);

  const int batch = 8;
  Rng data(202);
  std::vector<PackedObservation> obs;
  std::vector<int> actions;
  std::vector<double> targets;
  for (int b = 0; b < batch; ++b) {
    PackedObservation p;
    p.width = 12;
    p.height = 12;
    p.bits.assign((12 * 12 + 7) / 8, 0);
    for (int idx = 0; idx < 144; ++idx)
      if (data.uniform01() < 0.3) p.bits[idx >> 3] |= static_cast<std::uint8_t>(1u << (idx & 7));
    p.head_x = static_cast<std::uint16_t>(data.uniform_int(0, 11));
    p.head_y = static_cast<std::uint16_t>(data.uniform_int(0, 11));
    p.heading = static_cast<std::uint8_t>(data.uniform_int(0, 7));
    obs.push_back(std::move(p));
    actions.push_back(data.uniform_int(0, kActionCount - 1));
    targets.push_back(data.uniform(-0.6, 0.6));
  }

  const auto batch_loss = [&](QNetwork<double>& n) {
    auto act = n.make_activations();
    std::vector<double> extras;
    double loss = 0.0;
    for (int b = 0; b < batch; ++b) {
      fill_network_input(obs[static_cast<std::size_t>(b)], arch, act.input, extras);
      n.forward(extras, act);
      loss += huber(act.out[static_cast<std::size_t>(actions[static_cast<std::size_t>(b)])] -
                        targets[static_cast<std::size_t>(b)],
                    1.0);
    }
    return loss / batch;
  };

  std::vector<double> grad(net.parameter_count(), 0.0);
  {
    auto act = net.make_activations();
    std::vector<double> extras;
    std::vector<double> d_out(static_cast<std::size_t>(arch.outputs), 0.0);
    for (int b = 0; b < batch; ++b) {
      fill_network_input(obs[static_cast<std::size_t>(b)], arch, act.input, extras);
      net.forward(extras, act);
      const int a = actions[static_cast<std::size_t>(b)];
      const double e = act.out[static_cast<std::size_t>(a)] - targets[static_cast<std::size_t>(b)];
      std::fill(d_out.begin(), d_out.end(), 0.0);
      d_out[static_cast<std::size_t>(a)] = huber_grad(e, 1.0) / batch;
      net.backward(act, d_out, grad);
    }
  }

  Rng probe_rng(303);
  double worst = 0.0;
  for (int probe = 0; probe < 100; ++probe) {
    const std::size_t i = static_cast<std::size_t>(
        probe_rng.uniform_int(0, static_cast<int>(net.parameter_count() - 1)));
    const double theta = net.parameters()[i];
    const double h = 1e-6 * std::max(1.0, std::abs(theta));
    net.parameters()[i] = theta + h;
    const double lp = batch_loss(net);
    net.parameters()[i] = theta - h;
    const double lm = batch_loss(net);
    net.parameters()[i] = theta;
    const double fd = (lp - lm) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-10});
    worst = std::max(worst, std::abs(fd - grad[i]) / denom);
  }
  detail = fmt("worst rel err %.2e over 100 probes", worst);
  return worst < 1e-4;
}

struct ComparativeResults {
  std::vector<double> best_dqn, best_ga, best_random;
  std::vector<double> slope_ga, slope_random;
};

ComparativeResults g_c5;
bool g_c5_ran = false;

// 5. Budget-2000 comparison of DQN, GA, and Random on the loop target.
bool criterion5(std::string& detail) {
  const TargetSpec target = loop_target();
  for (const std::uint64_t seed : kSeeds) {
    for (const AgentKind agent : {AgentKind::kRandom, AgentKind::kGa, AgentKind::kDqn}) {
      RunConfig cfg = acc_config(agent, Mode::kSymmetric, seed, 2000, target, 20000, 20000);
      cfg.output_dir = run_dir(fmt("c5/%s_%llu", agent_name(agent),
                                   static_cast<unsigned long long>(seed)));
      const StageSummary sum = run_training(cfg);
      switch (agent) {
        case AgentKind::kRandom:
          g_c5.best_random.push_back(sum.best_reward);
          g_c5.slope_random.push_back(sim_growth_slope(sum.rows));
          break;
        case AgentKind::kGa:
          g_c5.best_ga.push_back(sum.best_reward);
          g_c5.slope_ga.push_back(sim_growth_slope(sum.rows));
          break;
        case AgentKind::kDqn:
          g_c5.best_dqn.push_back(sum.best_reward);
          break;
      }
    }
  }
  g_c5_ran = true;
  int dqn_ge_ga = 0;
  for (std::size_t i = 0; i < kSeeds.size(); ++i)
    if (g_c5.best_dqn[i] >= g_c5.best_ga[i]) ++dqn_ge_ga;
  const double md = median(g_c5.best_dqn);
  const double mg = median(g_c5.best_ga);
  const double mr = median(g_c5.best_random);
  detail = fmt("median best dqn=%.6f ga=%.6f random=%.6f; dqn>=ga on %d/5 seeds", md, mg, mr,
               dqn_ge_ga);
  return md >= mr && mg >= mr && dqn_ge_ga >= 3;
}

// 6. Unique-simulations-per-env-step slope ordering from the criterion-5 runs.
bool criterion6(std::string& detail) {
  if (!g_c5_ran) {
    std::string unused;
    criterion5(unused);
  }
  const double mr = median(g_c5.slope_random);
  const double mg = median(g_c5.slope_ga);
  detail = fmt("median slope random=%.5f ga=%.5f", mr, mg);
  return mr > mg;
}

// 7. Symmetric-mode DQN reaches its own final best with no more simulations
// than non-symmetric mode needs to reach the same value.
bool criterion7(std::string& detail) {
  const TargetSpec target = loop_target();
  std::vector<double> sym_sims, non_sims;
  for (const std::uint64_t seed : kSeeds) {
    RunConfig sym = acc_config(AgentKind::kDqn, Mode::kSymmetric, seed, 500, target, 10000, 6000);
    sym.output_dir = run_dir(fmt("c7/sym_%llu", static_cast<unsigned long long>(seed)));
    const StageSummary s = run_training(sym);

    RunConfig non = sym;
    non.mode = Mode::kNonSymmetric;
    non.output_dir = run_dir(fmt("c7/non_%llu", static_cast<unsigned long long>(seed)));
    const StageSummary n = run_training(non);

    const auto s_to = detail::sims_to_threshold(s.rows, s.best_reward);
    const auto n_to = detail::sims_to_threshold(n.rows, s.best_reward);
    sym_sims.push_back(s_to ? static_cast<double>(*s_to) : kInf);
    non_sims.push_back(n_to ? static_cast<double>(*n_to) : kInf);
  }
  const double ms = median(sym_sims);
  const double mn = median(non_sims);
  detail = fmt("median sims to value: symmetric=%.0f non-symmetric=%s", ms,
               std::isinf(mn) ? "never" : fmt("%.0f", mn).c_str());
  return ms <= mn;
}

// 8. Transfer: fine-tuning reaches the scratch agent's final best with at
// most half the scratch agent's simulations, for L x0.95 and L x1.05.
bool criterion8(std::string& detail) {
  const TargetSpec target = loop_target();
  std::string parts;
  bool ok = true;
  for (const double scale : {0.95, 1.05}) {
    std::vector<double> ratios;
    for (const std::uint64_t seed : kSeeds) {
      RunConfig cfg = acc_config(AgentKind::kDqn, Mode::kSymmetric, seed, 1, target, 9000, 6000, 12);
      TransferConfig tr;
      tr.spread = 0.2;
      tr.pretrain_budget = 300;
      tr.finetune_budget = 150;
      tr.inductance_scale = scale;
      tr.finetune_epsilon_start = 0.2;
      cfg.transfer = tr;
      cfg.output_dir =
          run_dir(fmt("c8/scale%.2f_%llu", scale, static_cast<unsigned long long>(seed)));
      const TransferSummary sum = run_transfer(cfg);
      if (sum.scratch.simulations <= 0) {
        ratios.push_back(kInf);
        continue;
      }
      ratios.push_back(sum.finetune_sims_to_threshold
                           ? static_cast<double>(*sum.finetune_sims_to_threshold) /
                                 static_cast<double>(sum.scratch.simulations)
                           : kInf);
    }
    const double m = median(ratios);
    if (!(m <= 0.5)) ok = false;
    parts += fmt("%sLx%.2f median ratio %s", parts.empty() ? "" : "; ", scale,
                 std::isinf(m) ? "never" : fmt("%.3f", m).c_str());
  }
  detail = parts;
  return ok;
}

// 9. Replaying a run's action log against its persisted cache performs zero
// new simulations and reproduces rewards exactly.
bool criterion9(std::string& detail) {
  const TargetSpec target = loop_target();
  bool ok = true;
  std::int64_t steps = 0;
  {
    RunConfig cfg = acc_config(AgentKind::kRandom, Mode::kSymmetric, 31, 150, target, 30000, 3000);
    cfg.log_episodes = true;
    cfg.output_dir = run_dir("c9/random");
    run_training(cfg);
    const ReplayReport r = replay_episodes(cfg, cfg.output_dir);
    ok &= r.clean();
    steps += r.steps;
  }
  {
    RunConfig cfg = acc_config(AgentKind::kDqn, Mode::kSymmetric, 32, 60, target, 6000, 3000);
    cfg.log_episodes = true;
    cfg.output_dir = run_dir("c9/dqn");
    run_training(cfg);
    const ReplayReport r = replay_episodes(cfg, cfg.output_dir);
    ok &= r.clean();
    steps += r.steps;
  }
  detail = fmt("replayed %lld steps, zero new simulations", static_cast<long long>(steps));
  return ok;
}

// 10. Two runs with identical (seed, config) produce byte-identical CSV,
// cache, and checkpoint files.
bool criterion10(std::string& detail) {
  const TargetSpec target = loop_target();
  bool ok = true;
  {
    RunConfig cfg = acc_config(AgentKind::kRandom, Mode::kSymmetric, 41, 60, target, 20000, 3000);
    cfg.output_dir = run_dir("c10/random_a");
    run_training(cfg);
    const std::string a = cfg.output_dir;
    cfg.output_dir = run_dir("c10/random_b");
    run_training(cfg);
    for (const char* f : {"/metrics.csv", "/cache.jsonl"})
      ok &= read_text_file(a + f) == read_text_file(cfg.output_dir + f);
  }
  {
    RunConfig cfg = acc_config(AgentKind::kDqn, Mode::kSymmetric, 42, 40, target, 4000, 3000);
    cfg.output_dir = run_dir("c10/dqn_a");
    run_training(cfg);
    const std::string a = cfg.output_dir;
    cfg.output_dir = run_dir("c10/dqn_b");
    run_training(cfg);
    for (const char* f : {"/metrics.csv", "/cache.jsonl", "/checkpoint.bin"})
      ok &= read_text_file(a + f) == read_text_file(cfg.output_dir + f);
  }
  detail = "csv, cache, and checkpoint compared byte for byte";
  return ok;
}

struct Criterion {
  int index;
  const char* title;
  std::function<bool(std::string&)> run;
  double limit_seconds;  // 0: no enforced bound
};

}  // namespace

int main(int argc, char** argv) {
  g_root = std::filesystem::temp_directory_path() /
           ("coildraw_acceptance_" + std::to_string(::getpid()));
  std::filesystem::create_directories(g_root);

  const std::vector<Criterion> criteria = {
      {1, "reward examples and breakpoint continuity", criterion1, 1.0},
      {2, "exhaustive depth-5 geometry with overlap oracle", criterion2, 30.0},
      {3, "simulator oracles and quadrature convergence", criterion3, 10.0},
      {4, "gradient check against finite differences", criterion4, 60.0},
      {5, "comparative experiment dqn/ga/random", criterion5, 0.0},
      {6, "simulation-growth slope ordering", criterion6, 0.0},
      {7, "symmetric-mode efficiency", criterion7, 0.0},
      {8, "transfer versus scratch", criterion8, 0.0},
      {9, "cache replay correctness", criterion9, 0.0},
      {10, "run determinism", criterion10, 0.0},
  };

  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.index) == wanted.end())
      continue;
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool pass = false;
    try {
      pass = c.run(detail);
    } catch (const std::exception& e) {
      detail = fmt("exception: %s", e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_seconds > 0.0 && secs >= c.limit_seconds) {
      pass = false;
      detail += fmt(" [exceeded %.0fs bound]", c.limit_seconds);
    }
    if (!pass) ++failures;
    std::printf("[%2d] %s %s (%.1fs)%s%s\n", c.index, pass ? "PASS" : "FAIL", c.title, secs,
                detail.empty() ? "" : " - ", detail.c_str());
    std::fflush(stdout);
  }

  std::filesystem::remove_all(g_root);
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures ? 1 : 0;
}
