#pragma once

#include <stdexcept>

namespace coildraw {

/// Electrical figures of a complete inductor.
struct Metrics {
  double inductance{};  // H
  double resistance{};  // ohm
  double srf{};         // Hz
  double q_factor{};    // dimensionless
  double area{};        // µm²
};

/// Process and evaluation constants for the analytic evaluator.
struct MaterialParams {
  double sheet_resistance = 0.01;      // ohm/square
  double oxide_cap_density = 2e-17;    // F/µm²
  double operating_frequency = 15e9;   // Hz
  int quad_points = 16;                // Gauss-Legendre points per segment

  void validate() const {
    if (!(sheet_resistance > 0.0)) throw std::invalid_argument("material: sheet_resistance must be positive");
    if (!(oxide_cap_density > 0.0)) throw std::invalid_argument("material: oxide_cap_density must be positive");
    if (!(operating_frequency > 0.0)) throw std::invalid_argument("material: operating_frequency must be positive");
    if (quad_points < 8) throw std::invalid_argument("material: quad_points must be at least 8");
  }
};

}  // namespace coildraw
