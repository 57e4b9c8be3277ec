#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace coildraw {

inline constexpr double kGeomEps = 1e-9;

struct Point {
  double x{};
  double y{};
};

inline bool near(double a, double b, double eps = kGeomEps) { return std::abs(a - b) <= eps; }
inline bool near(Point a, Point b, double eps = kGeomEps) {
  return near(a.x, b.x, eps) && near(a.y, b.y, eps);
}

/// The 8 compass directions, clockwise from north. North points into the
/// canvas (+y); the ports sit on the bottom edge.
enum class Heading : int { kN = 0, kNE, kE, kSE, kS, kSW, kW, kNW };

inline constexpr int kHeadingCount = 8;

inline constexpr std::array<int, 8> kHeadingDx = {0, 1, 1, 1, 0, -1, -1, -1};
inline constexpr std::array<int, 8> kHeadingDy = {1, 1, 0, -1, -1, -1, 0, 1};

inline const char* to_cstr(Heading h) {
  static constexpr std::array<const char*, 8> names = {"N", "NE", "E", "SE", "S", "SW", "W", "NW"};
  return names[static_cast<int>(h)];
}

inline bool is_diagonal(Heading h) {
  const int i = static_cast<int>(h);
  return kHeadingDx[i] != 0 && kHeadingDy[i] != 0;
}

/// Actions 0..4 turn the drawing head by {-90, -45, 0, +45, +90} degrees;
/// positive angles rotate clockwise (N -> E).
inline constexpr int kActionCount = 5;

inline bool action_valid(int action) { return action >= 0 && action < kActionCount; }

inline int action_turn_deg(int action) { return 45 * (action - 2); }

inline Heading heading_after(Heading heading, int action) {
  if (!action_valid(action)) throw std::invalid_argument("action out of range");
  const int turned = (static_cast<int>(heading) + (action - 2) + kHeadingCount) % kHeadingCount;
  return static_cast<Heading>(turned);
}

using ActionMask = std::array<bool, kActionCount>;

enum class Mode { kSymmetric, kNonSymmetric };

inline const char* to_cstr(Mode m) { return m == Mode::kSymmetric ? "symmetric" : "non-symmetric"; }

/// Drawing area and process constants. Lengths in micrometres.
struct Canvas {
  double width = 100.0;
  double height = 100.0;
  Point input_port{40.0, 0.0};
  Point output_port{60.0, 0.0};
  double grid_pitch = 10.0;
  double wire_width = 5.0;
  double wire_thickness = 1.0;

  double area() const { return width * height; }
  double midline_x() const { return width / 2.0; }

  bool on_grid(Point p) const {
    return near(std::remainder(p.x, grid_pitch), 0.0) && near(std::remainder(p.y, grid_pitch), 0.0);
  }

  bool on_boundary(Point p) const {
    return near(p.x, 0.0) || near(p.x, width) || near(p.y, 0.0) || near(p.y, height);
  }

  /// Throws std::invalid_argument when a field combination is unusable.
  void validate() const {
    if (width <= 0.0 || height <= 0.0) throw std::invalid_argument("canvas: width/height must be positive");
    if (grid_pitch <= 0.0) throw std::invalid_argument("canvas: grid_pitch must be positive");
    if (!near(std::remainder(width, grid_pitch), 0.0) || !near(std::remainder(height, grid_pitch), 0.0))
      throw std::invalid_argument("canvas: grid_pitch must divide width and height exactly");
    if (!(wire_width > 0.0) || !(wire_width < grid_pitch))
      throw std::invalid_argument("canvas: wire_width must be in (0, grid_pitch)");
    if (wire_thickness <= 0.0) throw std::invalid_argument("canvas: wire_thickness must be positive");
    for (const Point p : {input_port, output_port}) {
      if (!on_grid(p)) throw std::invalid_argument("canvas: port not on a grid node");
      if (!on_boundary(p)) throw std::invalid_argument("canvas: port not on the canvas boundary");
      if (p.x < -kGeomEps || p.x > width + kGeomEps || p.y < -kGeomEps || p.y > height + kGeomEps)
        throw std::invalid_argument("canvas: port outside canvas");
    }
    if (near(input_port, output_port)) throw std::invalid_argument("canvas: ports must be distinct");
  }

  /// Additional requirements for drawing in symmetric mode.
  void validate_symmetric() const {
    validate();
    if (!near(input_port.x + output_port.x, width) || !near(input_port.y, output_port.y))
      throw std::invalid_argument("canvas: ports are not mirror images across the vertical midline");
    if (!near(std::remainder(midline_x(), grid_pitch), 0.0))
      throw std::invalid_argument("canvas: midline does not fall on a grid column");
    if (near(input_port.x, midline_x()))
      throw std::invalid_argument("canvas: input port may not sit on the midline");
  }
};

/// One drawn wire segment. Endpoints lie on grid nodes; the heading of
/// end - start is one of the 8 compass directions.
struct Segment {
  Point start{};
  Point end{};
  double width = 5.0;
  int layer = 0;
};

inline double segment_length(const Segment& s) {
  return std::hypot(s.end.x - s.start.x, s.end.y - s.start.y);
}

inline Heading segment_heading(const Segment& s) {
  const int dx = (s.end.x > s.start.x + kGeomEps) - (s.end.x < s.start.x - kGeomEps);
  const int dy = (s.end.y > s.start.y + kGeomEps) - (s.end.y < s.start.y - kGeomEps);
  for (int h = 0; h < kHeadingCount; ++h) {
    if (kHeadingDx[h] == dx && kHeadingDy[h] == dy) return static_cast<Heading>(h);
  }
  throw std::invalid_argument("segment: degenerate (start == end)");
}

/// Wire footprint: the segment's centerline inflated to the wire width, with
/// no end-cap extension. Corners are in counter-clockwise order.
struct Quad {
  std::array<Point, 4> p;
};

inline Quad inflate(const Segment& s) {
  const double len = segment_length(s);
  if (len <= kGeomEps) throw std::invalid_argument("segment: degenerate (start == end)");
  const double ux = (s.end.x - s.start.x) / len;
  const double uy = (s.end.y - s.start.y) / len;
  const double nx = -uy, ny = ux;  // left normal
  const double h = s.width / 2.0;
  return Quad{{Point{s.start.x - nx * h, s.start.y - ny * h},
               Point{s.end.x - nx * h, s.end.y - ny * h},
               Point{s.end.x + nx * h, s.end.y + ny * h},
               Point{s.start.x + nx * h, s.start.y + ny * h}}};
}

namespace detail {

inline void project(const Quad& q, double ax, double ay, double& lo, double& hi) {
  lo = hi = q.p[0].x * ax + q.p[0].y * ay;
  for (int i = 1; i < 4; ++i) {
    const double d = q.p[i].x * ax + q.p[i].y * ay;
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
}

}  // namespace detail

/// True iff the two convex quads overlap with positive area. Touching edges
/// or corners do not count. Separating-axis test over both quads' edge
/// normals.
inline bool quads_overlap(const Quad& a, const Quad& b) {
  const Quad* qs[2] = {&a, &b};
  for (const Quad* q : qs) {
    for (int i = 0; i < 4; ++i) {
      const Point& p0 = q->p[i];
      const Point& p1 = q->p[(i + 1) % 4];
      const double ax = -(p1.y - p0.y);
      const double ay = p1.x - p0.x;
      double alo, ahi, blo, bhi;
      detail::project(a, ax, ay, alo, ahi);
      detail::project(b, ax, ay, blo, bhi);
      if (alo >= bhi - kGeomEps || blo >= ahi - kGeomEps) return false;
    }
  }
  return true;
}

inline bool quad_inside_canvas(const Quad& q, const Canvas& c) {
  for (const Point& p : q.p) {
    if (p.x < -kGeomEps || p.x > c.width + kGeomEps) return false;
    if (p.y < -kGeomEps || p.y > c.height + kGeomEps) return false;
  }
  return true;
}

/// True iff a point lies strictly inside the quad.
inline bool point_in_quad(Point pt, const Quad& q) {
  for (int i = 0; i < 4; ++i) {
    const Point& p0 = q.p[i];
    const Point& p1 = q.p[(i + 1) % 4];
    const double cross = (p1.x - p0.x) * (pt.y - p0.y) - (p1.y - p0.y) * (pt.x - p0.x);
    if (cross <= kGeomEps) return false;
  }
  return true;
}

/// True iff the centerlines of a and b intersect or touch. Used by the
/// simulator to flag geometry bugs; valid layouts never trigger it for
/// non-consecutive segments.
inline bool centerlines_intersect(const Segment& a, const Segment& b) {
  const auto orient = [](Point p, Point q, Point r) {
    const double v = (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    if (v > kGeomEps) return 1;
    if (v < -kGeomEps) return -1;
    return 0;
  };
  const auto on_seg = [](Point p, Point q, Point r) {
    return r.x <= std::max(p.x, q.x) + kGeomEps && r.x >= std::min(p.x, q.x) - kGeomEps &&
           r.y <= std::max(p.y, q.y) + kGeomEps && r.y >= std::min(p.y, q.y) - kGeomEps;
  };
  const int o1 = orient(a.start, a.end, b.start);
  const int o2 = orient(a.start, a.end, b.end);
  const int o3 = orient(b.start, b.end, a.start);
  const int o4 = orient(b.start, b.end, a.end);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_seg(a.start, a.end, b.start)) return true;
  if (o2 == 0 && on_seg(a.start, a.end, b.end)) return true;
  if (o3 == 0 && on_seg(b.start, b.end, a.start)) return true;
  if (o4 == 0 && on_seg(b.start, b.end, a.end)) return true;
  return false;
}

enum class LayoutStatus { kInProgress, kComplete, kInvalid };

inline const char* to_cstr(LayoutStatus s) {
  switch (s) {
    case LayoutStatus::kInProgress: return "in-progress";
    case LayoutStatus::kComplete: return "complete";
    default: return "invalid";
  }
}

/// The design object: an ordered chain of segments plus the drawing head.
/// Values are immutable by convention; append_segment returns a new Layout.
struct Layout {
  Canvas canvas;
  Mode mode = Mode::kSymmetric;
  LayoutStatus status = LayoutStatus::kInProgress;
  int layer = 0;
  std::vector<Segment> segments;
  std::vector<int> actions;
  Point head{};
  Heading heading = Heading::kN;
};

/// Fresh layout at the input port heading north.
inline Layout initial_layout(const Canvas& canvas, Mode mode) {
  if (mode == Mode::kSymmetric)
    canvas.validate_symmetric();
  else
    canvas.validate();
  Layout l;
  l.canvas = canvas;
  l.mode = mode;
  l.head = canvas.input_port;
  l.heading = Heading::kN;
  l.status = LayoutStatus::kInProgress;
  return l;
}

inline bool layout_complete_at(const Layout& l, Point head) {
  if (l.mode == Mode::kSymmetric) return near(head.x, l.canvas.midline_x());
  return near(head, l.canvas.output_port);
}

enum class AppendError { kNone, kOutOfBounds, kCollision, kAlreadyTerminal };

inline const char* to_cstr(AppendError e) {
  switch (e) {
    case AppendError::kOutOfBounds: return "out-of-bounds";
    case AppendError::kCollision: return "collision";
    case AppendError::kAlreadyTerminal: return "already-terminal";
    default: return "none";
  }
}

struct AppendResult {
  std::optional<Layout> layout;
  AppendError error = AppendError::kNone;
  bool ok() const { return layout.has_value(); }
};

/// Draws one more segment. On failure the input layout is untouched and the
/// reason is reported; consecutive segments are exempt from the collision
/// check (they share a joint).
inline AppendResult append_segment(const Layout& layout, int action) {
  if (layout.status != LayoutStatus::kInProgress) return {std::nullopt, AppendError::kAlreadyTerminal};
  if (!action_valid(action)) throw std::invalid_argument("action out of range");

  const Heading heading = heading_after(layout.heading, action);
  const int hi = static_cast<int>(heading);
  const Point end{layout.head.x + kHeadingDx[hi] * layout.canvas.grid_pitch,
                  layout.head.y + kHeadingDy[hi] * layout.canvas.grid_pitch};
  const Segment seg{layout.head, end, layout.canvas.wire_width, layout.layer};
  const Quad quad = inflate(seg);

  if (!quad_inside_canvas(quad, layout.canvas)) return {std::nullopt, AppendError::kOutOfBounds};
  if (layout.segments.size() >= 2) {
    for (std::size_t i = 0; i + 1 < layout.segments.size(); ++i) {
      if (quads_overlap(quad, inflate(layout.segments[i]))) return {std::nullopt, AppendError::kCollision};
    }
  }

  Layout next = layout;
  next.segments.push_back(seg);
  next.actions.push_back(action);
  next.head = end;
  next.heading = heading;
  if (layout_complete_at(next, end)) next.status = LayoutStatus::kComplete;
  return {std::move(next), AppendError::kNone};
}

/// mask[a] is true iff append_segment(layout, a) succeeds. Pure query.
inline ActionMask legal_actions(const Layout& layout) {
  if (layout.status != LayoutStatus::kInProgress)
    throw std::logic_error("legal_actions: layout is not in progress");
  ActionMask mask{};
  for (int a = 0; a < kActionCount; ++a) mask[a] = append_segment(layout, a).ok();
  return mask;
}

inline bool any_legal(const ActionMask& mask) {
  for (bool b : mask)
    if (b) return true;
  return false;
}

struct MirrorOutcome {
  bool ok = false;  // false: a reflected segment overlaps the original half
  std::vector<Segment> segments;
};

/// Completes a symmetric half-design: appends each segment reflected across
/// the vertical midline, reversed so the full chain runs input -> output.
/// Segments lying exactly on the midline merge with their reflection.
inline MirrorOutcome mirror(const Layout& layout) {
  if (layout.mode != Mode::kSymmetric) throw std::logic_error("mirror: layout is not symmetric");
  if (layout.status != LayoutStatus::kComplete) throw std::logic_error("mirror: layout is not complete");
  const double mid = layout.canvas.midline_x();
  const auto reflect = [mid](Point p) { return Point{2.0 * mid - p.x, p.y}; };

  std::vector<Segment> full = layout.segments;
  for (auto it = layout.segments.rbegin(); it != layout.segments.rend(); ++it) {
    if (near(it->start.x, mid) && near(it->end.x, mid)) continue;  // self-mirrored: keep one copy
    full.push_back(Segment{reflect(it->end), reflect(it->start), it->width, it->layer});
  }

  std::vector<Quad> quads;
  quads.reserve(full.size());
  for (const Segment& s : full) quads.push_back(inflate(s));
  for (std::size_t i = 0; i + 2 < full.size(); ++i) {
    for (std::size_t j = i + 2; j < full.size(); ++j) {
      if (quads_overlap(quads[i], quads[j])) return {false, {}};
    }
  }
  return {true, std::move(full)};
}

/// Area of the axis-aligned bounding box of all inflated wire rectangles.
inline double bounding_box_area(std::span<const Segment> segments) {
  if (segments.empty()) throw std::invalid_argument("bounding_box_area: empty layout");
  double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
  double max_x = -min_x, max_y = -min_y;
  for (const Segment& s : segments) {
    for (const Point& p : inflate(s).p) {
      min_x = std::min(min_x, p.x);
      max_x = std::max(max_x, p.x);
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
    }
  }
  return (max_x - min_x) * (max_y - min_y);
}

inline double bounding_box_area(const Layout& layout) {
  return bounding_box_area(std::span<const Segment>(layout.segments));
}

}  // namespace coildraw
