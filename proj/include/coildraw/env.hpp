#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "coildraw/cache.hpp"
#include "coildraw/raster.hpp"
#include "coildraw/reward.hpp"
#include "coildraw/rng.hpp"
#include "coildraw/simulate.hpp"

namespace coildraw {

/// Agent-facing state: occupancy raster, head-position raster, heading
/// one-hot, and (in transfer mode) the episode target normalized by the
/// reference target.
struct Observation {
  BoolImage occupancy;
  BoolImage head_channel;
  std::array<double, 8> heading_onehot{};
  std::optional<std::array<double, 3>> target_features;

  bool operator==(const Observation&) const = default;
};

struct StepInfo {
  LayoutStatus status = LayoutStatus::kInProgress;
  ActionMask mask{};  // of the resulting state; all-false once done
  std::int64_t simulations_used = 0;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

/// Draws L_T, R_T, SRF_T independently and uniformly within ±spread of the
/// reference; area budget and weights pass through.
inline TargetSpec sample_target(const TargetSpec& reference, double spread, Rng& rng) {
  if (!(spread >= 0.0) || spread >= 1.0) throw std::invalid_argument("sample_target: spread must be in [0,1)");
  TargetSpec t = reference;
  t.inductance = reference.inductance * rng.uniform(1.0 - spread, 1.0 + spread);
  t.resistance = reference.resistance * rng.uniform(1.0 - spread, 1.0 + spread);
  t.srf = reference.srf * rng.uniform(1.0 - spread, 1.0 + spread);
  return t;
}

/// Geometry mask plus a depth-1 look-ahead: an action that would complete a
/// symmetric layout whose mirrored half overlaps the original is masked too.
inline ActionMask masked_actions(const Layout& layout) {
  ActionMask mask = legal_actions(layout);
  if (layout.mode != Mode::kSymmetric) return mask;
  for (int a = 0; a < kActionCount; ++a) {
    if (!mask[a]) continue;
    const AppendResult r = append_segment(layout, a);
    if (r.layout->status == LayoutStatus::kComplete && !mirror(*r.layout).ok) mask[a] = false;
  }
  return mask;
}

struct EnvOptions {
  Canvas canvas;
  Mode mode = Mode::kSymmetric;
  TargetSpec reference;
  MaterialParams material;
  double raster_resolution = 2.5;  // µm per pixel
  int max_steps = 15;
  bool transfer_features = false;
};

/// Episode-scoped MDP wrapper. Sparse terminal reward, action masking with a
/// depth-1 mirror look-ahead, simulation through the shared cache. One
/// instance is single-threaded; instances may share one cache.
class Environment {
 public:
  explicit Environment(EnvOptions opts, SimulationCache* cache = nullptr)
      : opts_(std::move(opts)), cache_(cache) {
    opts_.reference.validate();
    opts_.material.validate();
    validate_resolution(opts_.canvas, opts_.raster_resolution);
    if (opts_.max_steps < 1) throw std::invalid_argument("environment: max_steps must be >= 1");
    reset();
  }

  /// Starts a fixed-target episode at the reference target.
  Observation reset() { return reset(opts_.reference); }

  /// Starts an episode toward the given target (transfer training).
  Observation reset(const TargetSpec& target) {
    target.validate();
    layout_ = initial_layout(opts_.canvas, opts_.mode);
    target_ = target;
    done_ = false;
    occupancy_ = rasterize(layout_, opts_.raster_resolution);
    return observation();
  }

  bool done() const { return done_; }
  const Layout& layout() const { return layout_; }
  const TargetSpec& episode_target() const { return target_; }
  int steps_taken() const { return static_cast<int>(layout_.actions.size()); }

  std::int64_t simulations_used() const {
    return cache_ ? cache_->simulation_count() : uncached_simulations_;
  }

  /// Legal actions at the current state; completing actions whose mirrored
  /// design would self-overlap are masked out.
  ActionMask action_mask() const {
    if (done_) throw std::logic_error("action_mask: episode finished");
    return masked_actions(layout_);
  }

  StepResult step(int action) {
    if (done_) throw std::logic_error("step: episode finished");
    if (!action_valid(action)) throw std::invalid_argument("step: action out of range");
    if (!action_mask()[action]) throw std::logic_error("step: illegal action submitted");

    AppendResult r = append_segment(layout_, action);
    layout_ = std::move(*r.layout);
    rasterize_segment(occupancy_, layout_.segments.back(), opts_.raster_resolution);

    StepResult out;
    if (layout_.status == LayoutStatus::kComplete) {
      done_ = true;
      const std::optional<Metrics> m = evaluate();
      out.reward = m ? reward(*m, target_) : invalid_penalty(target_);
    } else if (steps_taken() >= opts_.max_steps) {
      done_ = true;
      layout_.status = LayoutStatus::kInvalid;
      out.reward = invalid_penalty(target_);
    } else {
      const ActionMask next = action_mask();
      if (!any_legal(next)) {
        done_ = true;
        layout_.status = LayoutStatus::kInvalid;
        out.reward = invalid_penalty(target_);
      } else {
        out.info.mask = next;
      }
    }
    out.done = done_;
    out.observation = observation();
    out.info.status = layout_.status;
    out.info.simulations_used = simulations_used();
    return out;
  }

  Observation observation() const {
    Observation obs;
    obs.occupancy = occupancy_;
    obs.head_channel = BoolImage{occupancy_.width, occupancy_.height,
                                 std::vector<std::uint8_t>(occupancy_.data.size(), 0)};
    const int ix = std::clamp(static_cast<int>(std::floor(layout_.head.x / opts_.raster_resolution)),
                              0, occupancy_.width - 1);
    const int iy = std::clamp(static_cast<int>(std::floor(layout_.head.y / opts_.raster_resolution)),
                              0, occupancy_.height - 1);
    obs.head_channel.at(ix, iy) = 1;
    obs.heading_onehot.fill(0.0);
    obs.heading_onehot[static_cast<std::size_t>(layout_.heading)] = 1.0;
    if (opts_.transfer_features) {
      obs.target_features = std::array<double, 3>{target_.inductance / opts_.reference.inductance,
                                                  target_.resistance / opts_.reference.resistance,
                                                  target_.srf / opts_.reference.srf};
    }
    return obs;
  }

  const EnvOptions& options() const { return opts_; }

 private:
  std::optional<Metrics> evaluate() {
    const auto simulate_fn = [this](const Layout& l) { return simulate(l, opts_.material); };
    if (!cache_) {
      ++uncached_simulations_;
      return simulate_fn(layout_);
    }
    return cache_->get_or_simulate(layout_, simulate_fn).metrics;
  }

  EnvOptions opts_;
  SimulationCache* cache_;
  Layout layout_;
  TargetSpec target_;
  BoolImage occupancy_;
  bool done_ = false;
  std::int64_t uncached_simulations_ = 0;
};

}  // namespace coildraw
