#pragma once

#include <optional>
#include <span>
#include <string>

#include "coildraw/fmt.hpp"
#include "coildraw/geometry.hpp"
#include "coildraw/reward.hpp"
#include "coildraw/simulate_types.hpp"

namespace coildraw {

/// Metrics block rendered under the drawing, each value normalized by the
/// corresponding target figure.
struct SvgAnnotation {
  Metrics metrics;
  TargetSpec target;
  double reward = 0.0;
};

namespace detail {

inline constexpr double kSvgScale = 6.0;
inline constexpr double kSvgMargin = 24.0;

inline double svg_x(double x) { return kSvgMargin + kSvgScale * x; }

inline double svg_y(const Canvas& canvas, double y) {
  return kSvgMargin + kSvgScale * (canvas.height - y);
}

inline void svg_num(std::string& out, double v) {
  // Round tiny artefacts of the flip arithmetic so output stays stable.
  if (v == 0.0) v = 0.0;
  out += format_double(v);
}

}  // namespace detail

/// Renders a drawn inductor: canvas border, grid dots, symmetry midline,
/// ports, and one width-true polygon per wire segment. The output depends
/// only on the arguments, byte for byte.
inline std::string render_layout_svg(const Canvas& canvas, std::span<const Segment> segments,
                                     Mode mode,
                                     const std::optional<SvgAnnotation>& note = std::nullopt) {
  using detail::kSvgMargin;
  using detail::kSvgScale;
  using detail::svg_num;
  const double width = 2 * kSvgMargin + kSvgScale * canvas.width;
  const double note_height = note ? 54.0 : 0.0;
  const double height = 2 * kSvgMargin + kSvgScale * canvas.height + note_height;

  std::string s;
  s.reserve(4096 + segments.size() * 160);
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 ";
  svg_num(s, width);
  s += ' ';
  svg_num(s, height);
  s += "\" width=\"";
  svg_num(s, width);
  s += "\" height=\"";
  svg_num(s, height);
  s += "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";

  s += "<rect x=\"";
  svg_num(s, detail::svg_x(0.0));
  s += "\" y=\"";
  svg_num(s, detail::svg_y(canvas, canvas.height));
  s += "\" width=\"";
  svg_num(s, kSvgScale * canvas.width);
  s += "\" height=\"";
  svg_num(s, kSvgScale * canvas.height);
  s += "\" fill=\"none\" stroke=\"#222222\" stroke-width=\"1.5\"/>\n";

  for (double gy = 0.0; gy <= canvas.height + kGeomEps; gy += canvas.grid_pitch)
    for (double gx = 0.0; gx <= canvas.width + kGeomEps; gx += canvas.grid_pitch) {
      s += "<circle cx=\"";
      svg_num(s, detail::svg_x(gx));
      s += "\" cy=\"";
      svg_num(s, detail::svg_y(canvas, gy));
      s += "\" r=\"1.2\" fill=\"#c8c8c8\"/>\n";
    }

  if (mode == Mode::kSymmetric) {
    const double mx = detail::svg_x(canvas.midline_x());
    s += "<line x1=\"";
    svg_num(s, mx);
    s += "\" y1=\"";
    svg_num(s, detail::svg_y(canvas, 0.0));
    s += "\" x2=\"";
    svg_num(s, mx);
    s += "\" y2=\"";
    svg_num(s, detail::svg_y(canvas, canvas.height));
    s += "\" stroke=\"#3a7abd\" stroke-width=\"1\" stroke-dasharray=\"6 4\"/>\n";
  }

  for (const Segment& seg : segments) {
    const Quad q = inflate(seg);
    s += "<polygon points=\"";
    for (int i = 0; i < 4; ++i) {
      if (i) s += ' ';
      svg_num(s, detail::svg_x(q.p[static_cast<std::size_t>(i)].x));
      s += ',';
      svg_num(s, detail::svg_y(canvas, q.p[static_cast<std::size_t>(i)].y));
    }
    s += "\" fill=\"#d08a3e\" fill-opacity=\"0.85\" stroke=\"#8a5a20\" stroke-width=\"0.8\"/>\n";
  }

  const Point ports[2] = {canvas.input_port, canvas.output_port};
  const char* labels[2] = {"IN", "OUT"};
  for (int i = 0; i < 2; ++i) {
    s += "<circle cx=\"";
    svg_num(s, detail::svg_x(ports[i].x));
    s += "\" cy=\"";
    svg_num(s, detail::svg_y(canvas, ports[i].y));
    s += "\" r=\"4\" fill=\"#2e7d32\"/>\n";
    s += "<text x=\"";
    svg_num(s, detail::svg_x(ports[i].x) + (i == 0 ? -18.0 : 8.0));
    s += "\" y=\"";
    svg_num(s, detail::svg_y(canvas, ports[i].y) + 14.0);
    s += "\" font-family=\"monospace\" font-size=\"11\" fill=\"#2e7d32\">";
    s += labels[i];
    s += "</text>\n";
  }

  if (note) {
    const ErrorTerms e = error_terms(note->metrics, note->target);
    const double base = 2 * kSvgMargin + kSvgScale * canvas.height;
    s += "<text x=\"";
    svg_num(s, kSvgMargin);
    s += "\" y=\"";
    svg_num(s, base + 8.0);
    s += "\" font-family=\"monospace\" font-size=\"12\" fill=\"#222222\">";
    s += "L/Lt=" + format_double(note->metrics.inductance / note->target.inductance);
    s += " R/Rt=" + format_double(note->metrics.resistance / note->target.resistance);
    s += " SRF/SRFt=" + format_double(note->metrics.srf / note->target.srf);
    s += "</text>\n<text x=\"";
    svg_num(s, kSvgMargin);
    s += "\" y=\"";
    svg_num(s, base + 26.0);
    s += "\" font-family=\"monospace\" font-size=\"12\" fill=\"#222222\">";
    s += "area/max=" + format_double(note->metrics.area / note->target.area_max);
    s += " q=" + format_double(note->metrics.q_factor);
    s += " reward=" + format_double(note->reward);
    s += " eL=" + format_double(e.e_l);
    s += "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace coildraw
