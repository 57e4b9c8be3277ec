#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "coildraw/simulate_types.hpp"

namespace coildraw {

/// Desired inductor performance plus cost weighting.
struct TargetSpec {
  double inductance = 116.5e-12;   // H
  double resistance = 0.925;       // ohm, upper bound
  double srf = 155e9;              // Hz, lower bound
  double area_max = 10000.0;       // µm²
  std::array<double, 4> weights = {1.0, 1.0, 1.0, 1.0};  // L, R, SRF, area
  double invalid_penalty = -1.0;

  void validate() const {
    if (!(inductance > 0.0) || !(resistance > 0.0) || !(srf > 0.0) || !(area_max > 0.0))
      throw std::invalid_argument("target: L, R, SRF, area_max must be positive");
    double sum = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw std::invalid_argument("target: weights must be nonnegative");
      sum += w;
    }
    if (!(sum > 0.0)) throw std::invalid_argument("target: weight sum must be positive");
  }
};

/// Relative deviations from target. e_l is an absolute value; the others are
/// signed (negative = better than target).
struct ErrorTerms {
  double e_l{};
  double e_r{};
  double e_srf{};
  double e_area{};
};

inline ErrorTerms error_terms(const Metrics& m, const TargetSpec& t) {
  t.validate();
  return ErrorTerms{std::abs(m.inductance / t.inductance - 1.0),
                    m.resistance / t.resistance - 1.0,
                    1.0 - m.srf / t.srf,
                    m.area / t.area_max - 1.0};
}

struct Costs {
  double c_l{};
  double c_r{};
  double c_srf{};
  double c_area{};
};

/// Piecewise costs. The inductance error gates the credit branches: R, SRF,
/// and area count in the design's favor only while e_l < 0.05.
inline Costs costs(const ErrorTerms& e) {
  Costs c;
  const bool l_close = e.e_l < 0.05;
  c.c_l = l_close ? e.e_l : 2.0 * e.e_l - 0.05;
  if (e.e_r >= 0.0)
    c.c_r = std::min(2.0 * e.e_r, 1.0);
  else
    c.c_r = l_close ? e.e_r : 0.0;
  if (e.e_srf >= 0.0)
    c.c_srf = std::min(2.0 * e.e_srf, 1.0);
  else
    c.c_srf = l_close ? std::max(2.0 * e.e_srf, -1.0) : 0.0;
  c.c_area = l_close ? e.e_area : 0.0;
  return c;
}

/// Scalar figure of merit: 1 minus the weighted mean cost. Exceeds 1 when a
/// design beats its targets.
inline double reward(const Metrics& m, const TargetSpec& t) {
  const ErrorTerms e = error_terms(m, t);
  const Costs c = costs(e);
  const double wsum = t.weights[0] + t.weights[1] + t.weights[2] + t.weights[3];
  const double weighted =
      t.weights[0] * c.c_l + t.weights[1] * c.c_r + t.weights[2] * c.c_srf + t.weights[3] * c.c_area;
  return 1.0 - weighted / wsum;
}

/// Terminal reward for episodes that end without a valid complete inductor.
inline double invalid_penalty(const TargetSpec& t) { return t.invalid_penalty; }

}  // namespace coildraw
