#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "coildraw/geometry.hpp"
#include "coildraw/simulate_types.hpp"

namespace coildraw {

namespace detail {

inline constexpr double kMicron = 1e-6;
inline constexpr double kMu0Over2Pi = 2e-7;   // H/m
inline constexpr double kMu0Over4Pi = 1e-7;   // H/m

/// Gauss-Legendre nodes and weights on [0,1]; weights sum to 1.
inline std::vector<std::pair<double, double>> gauss_legendre_01(int n) {
  std::vector<std::pair<double, double>> out(static_cast<std::size_t>(n));
  for (int k = 0; k < (n + 1) / 2; ++k) {
    double x = std::cos(std::numbers::pi * (k + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    out[static_cast<std::size_t>(k)] = {0.5 * (1.0 - x), 0.5 * w};
    out[static_cast<std::size_t>(n - 1 - k)] = {0.5 * (1.0 + x), 0.5 * w};
  }
  return out;
}

inline double mutual_neumann(const Segment& a_in, const Segment& b_in,
                             std::span<const std::pair<double, double>> nodes) {
  // Canonical argument order keeps the summation order, and hence the
  // result, bitwise identical under argument swap.
  const auto key = [](const Segment& s) {
    return std::array<double, 4>{s.start.x, s.start.y, s.end.x, s.end.y};
  };
  const bool swap_args = key(b_in) < key(a_in);
  const Segment& a = swap_args ? b_in : a_in;
  const Segment& b = swap_args ? a_in : b_in;
  const double ax = (a.end.x - a.start.x) * kMicron, ay = (a.end.y - a.start.y) * kMicron;
  const double bx = (b.end.x - b.start.x) * kMicron, by = (b.end.y - b.start.y) * kMicron;
  const double la = std::hypot(ax, ay), lb = std::hypot(bx, by);
  const double dot = ax * bx + ay * by;  // la*lb*cos(theta)
  if (dot == 0.0) return 0.0;
  const double a0x = a.start.x * kMicron, a0y = a.start.y * kMicron;
  const double b0x = b.start.x * kMicron, b0y = b.start.y * kMicron;
  double sum = 0.0;
  for (const auto& [u, wu] : nodes) {
    const double px = a0x + u * ax, py = a0y + u * ay;
    for (const auto& [v, wv] : nodes) {
      const double dx = px - (b0x + v * bx), dy = py - (b0y + v * by);
      sum += wu * wv / std::hypot(dx, dy);
    }
  }
  // Tangent dot cancels one factor of la*lb against the ds*ds' Jacobian.
  return kMu0Over4Pi * dot * sum;
}

}  // namespace detail

/// Partial self-inductance of a straight rectangular conductor.
inline double self_inductance(const Segment& s, double thickness_um) {
  const double l = segment_length(s) * detail::kMicron;
  if (l <= 0.0) throw std::invalid_argument("self_inductance: degenerate segment");
  if (!(s.width > 0.0) || !(thickness_um > 0.0))
    throw std::invalid_argument("self_inductance: width and thickness must be positive");
  const double a = (s.width + thickness_um) * detail::kMicron;
  const double value = detail::kMu0Over2Pi * l * (std::log(2.0 * l / a) + 0.5 + a / (3.0 * l));
  return std::max(value, 1e-18);  // formula may cross zero for stubby conductors
}

/// Signed mutual inductance of two centerline filaments; positive when the
/// chain's current directions align. Throws on intersecting centerlines,
/// which valid layouts never produce for non-consecutive segments.
inline double mutual_inductance(const Segment& a, const Segment& b, const MaterialParams& params) {
  params.validate();
  if (centerlines_intersect(a, b))
    throw std::logic_error("mutual_inductance: centerlines intersect");
  const auto nodes = detail::gauss_legendre_01(params.quad_points);
  return detail::mutual_neumann(a, b, nodes);
}

/// Evaluates a full segment chain (already mirrored when symmetric).
/// Returns nullopt when the surrogate model yields a non-positive total
/// inductance; the caller treats that as an invalid design.
inline std::optional<Metrics> simulate_chain(std::span<const Segment> chain,
                                             const MaterialParams& params, double thickness_um) {
  params.validate();
  if (chain.empty()) throw std::invalid_argument("simulate: empty chain");
  const auto nodes = detail::gauss_legendre_01(params.quad_points);

  double inductance = 0.0;
  double squares = 0.0;
  double plate_um2 = 0.0;
  for (const Segment& s : chain) {
    inductance += self_inductance(s, thickness_um);
    const double l = segment_length(s);
    squares += l / s.width;
    plate_um2 += l * s.width;
  }
  for (std::size_t i = 0; i + 2 < chain.size(); ++i) {
    for (std::size_t j = i + 2; j < chain.size(); ++j) {
      if (centerlines_intersect(chain[i], chain[j]))
        throw std::logic_error("simulate: non-consecutive centerlines intersect");
      inductance += 2.0 * detail::mutual_neumann(chain[i], chain[j], nodes);
    }
  }
  if (!(inductance > 0.0)) return std::nullopt;

  Metrics m;
  m.inductance = inductance;
  m.resistance = params.sheet_resistance * squares;
  const double c_par = params.oxide_cap_density * plate_um2;
  m.srf = 1.0 / (2.0 * std::numbers::pi * std::sqrt(inductance * c_par));
  m.q_factor = 2.0 * std::numbers::pi * params.operating_frequency * inductance / m.resistance;
  m.area = bounding_box_area(chain);
  return m;
}

/// Evaluates a complete layout, mirroring symmetric designs first. A
/// symmetric layout whose mirror collides is reported as invalid (nullopt).
inline std::optional<Metrics> simulate(const Layout& layout, const MaterialParams& params) {
  if (layout.status != LayoutStatus::kComplete)
    throw std::logic_error("simulate: layout is not complete");
  if (layout.mode == Mode::kSymmetric) {
    const MirrorOutcome m = mirror(layout);
    if (!m.ok) return std::nullopt;
    return simulate_chain(m.segments, params, layout.canvas.wire_thickness);
  }
  return simulate_chain(layout.segments, params, layout.canvas.wire_thickness);
}

}  // namespace coildraw
